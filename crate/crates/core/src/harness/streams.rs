//! RNG stream ids. Each purpose draws from its own stream of the run seed so
//! adding draws in one place never shifts another.

pub const AE_INIT: u64 = 1;
pub const AE_SHUFFLE: u64 = 2;
pub const SHUFFLE: u64 = 3;
pub const TRAIN_NOISE: u64 = 4;
pub const TEST_NOISE: u64 = 5;
pub const SHIFT_NOISE: u64 = 6;
pub const KMEANS: u64 = 7;
pub const BIT_CODES: u64 = 8;
pub const REFINERY_INIT: u64 = 9;
pub const REFINERY_SAMPLE: u64 = 10;
pub const DDPM_INIT: u64 = 11;
pub const DDPM_TRAIN: u64 = 12;
pub const DDPM_SAMPLE: u64 = 13;
/// Banded arms use `BANDED_INIT + S`.
pub const BANDED_INIT: u64 = 100;
pub const LATENT_INIT: u64 = 110;
/// Setup B heads use `HEAD_INIT + head index`.
pub const HEAD_INIT: u64 = 120;
