//! Experiment configuration, the pixel/latent/banded denoising setups, the
//! refinery and diffusion demo, and report emission.

mod arms;
mod autoencoder;
mod config;
mod metrics;
mod report;
mod setups;
pub mod streams;

pub use arms::{
    chunked, down_rows, finest_band, noisy_copy, train_arm, up_rows, Arm, ArmRun, BandedArm,
    HeadArm, HeadKind, LatentArm, TrainPlan, IMAGE_SIDE,
};
pub use autoencoder::{train_linear_ae, LinearAutoencoder};
pub use config::{hex_digest, ExperimentConfig, SetupId};
pub use metrics::{epochs_to_target, hf_psnr, mean_std, mse, psnr, psnr_per_image};
pub use report::{parse_csv, MetricRow, RunReport, SampleSheet, Timing, TraceRow, CSV_HEADER};
pub use setups::{
    run, run_ddpm, run_depth_sweep, run_refinery_demo, run_setup_a, run_setup_b, run_setup_c,
    BandedOutcome, Session,
};
