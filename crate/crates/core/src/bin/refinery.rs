use clap::{Parser, Subcommand};
use refinery_core::harness::{run, ExperimentConfig, Session, SetupId};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "refinery",
    version,
    about = "Coarse-to-fine refinement experiments on MNIST"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment setup and write its report.
    Run {
        /// A, B, C, depth, refinery or ddpm.
        setup: SetupId,
        /// Comma-separated seed list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Training noise level.
        #[arg(long)]
        sigma: Option<f64>,
        /// Directory holding the four MNIST IDX files (falls back to $REFINERY_DATA_DIR).
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Output directory (default: runs/<setup>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Flat key=value config file applied before the flags.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra key=value override; may repeat.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> refinery_core::Result<()> {
    let Command::Run {
        setup,
        seeds,
        epochs,
        sigma,
        data_dir,
        out,
        config,
        overrides,
    } = cli.command;
    let mut cfg = ExperimentConfig::new(setup);
    if let Some(path) = &config {
        cfg.apply_file(path)?;
        cfg.setup = setup;
    }
    for kv in &overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            refinery_core::Error::Input(format!("--set expects KEY=VALUE, got {kv:?}"))
        })?;
        cfg.set(k, v)?;
    }
    if let Some(s) = &seeds {
        cfg.set("seeds", s)?;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(s) = sigma {
        cfg.sigma_train = s;
    }
    if data_dir.is_some() {
        cfg.data_dir = data_dir;
    }
    cfg.validate()?;

    let out = out.unwrap_or_else(|| PathBuf::from("runs").join(setup.as_str()));
    log::info!(
        "setup {setup}, seeds {:?}, config {}",
        cfg.seeds,
        &cfg.hash()[..12]
    );
    let mut session = Session::new(cfg.data_dir.clone());
    let report = run(&cfg, &mut session)?;
    for path in report.write_to(&out)? {
        println!("{}", path.display());
    }
    print!("{}", report.to_markdown());
    Ok(())
}
