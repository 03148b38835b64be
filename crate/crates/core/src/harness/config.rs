use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SetupId {
    A,
    B,
    C,
    Depth,
    Refinery,
    Ddpm,
}

impl SetupId {
    pub const ALL: [SetupId; 6] = [
        Self::A,
        Self::B,
        Self::C,
        Self::Depth,
        Self::Refinery,
        Self::Ddpm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
            Self::Depth => "depth",
            Self::Refinery => "refinery",
            Self::Ddpm => "ddpm",
        }
    }
}

impl fmt::Display for SetupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SetupId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Input(format!(
                    "unknown setup {s:?}; expected one of A, B, C, depth, refinery, ddpm"
                ))
            })
    }
}

/// Every knob of an experiment run. Defaults reproduce the common protocol:
/// AdamW at 1e-3 / 1e-4, 30 epochs of batch 256, σ = 0.20 train noise.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub setup: SetupId,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub sigma_train: f64,
    pub sigma_shift: f64,
    pub latent_dim: usize,
    pub codebook_k: usize,
    pub mse_target: f64,
    pub depths: Vec<usize>,
    pub hidden: usize,
    pub ae_epochs: usize,
    /// 0 keeps the whole split.
    pub train_limit: usize,
    pub test_limit: usize,
    /// Cap on points fed to k-means; 0 uses all.
    pub kmeans_sample: usize,
    pub refinery_scales: usize,
    pub refinery_codes: usize,
    pub refinery_hidden: usize,
    pub refinery_epochs: usize,
    pub refinery_batch: usize,
    pub refinery_train_limit: usize,
    pub refinery_temperature: f64,
    pub ddpm_steps: usize,
    pub ddpm_beta_start: f64,
    pub ddpm_beta_end: f64,
    pub ddpm_hidden: usize,
    pub ddpm_epochs: usize,
    pub ddpm_train_limit: usize,
    pub samples: usize,
    pub data_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(setup: SetupId) -> Self {
        Self {
            setup,
            seeds: vec![0, 1, 2],
            epochs: 30,
            batch: 256,
            lr: 1e-3,
            weight_decay: 1e-4,
            sigma_train: 0.20,
            sigma_shift: 0.30,
            latent_dim: 64,
            codebook_k: 64,
            mse_target: 0.018,
            depths: vec![1, 2, 3],
            hidden: 512,
            ae_epochs: 20,
            train_limit: 0,
            test_limit: 0,
            kmeans_sample: 0,
            refinery_scales: 1,
            refinery_codes: 64,
            refinery_hidden: 128,
            refinery_epochs: 10,
            refinery_batch: 64,
            refinery_train_limit: 10_000,
            refinery_temperature: 1.0,
            ddpm_steps: 200,
            ddpm_beta_start: 1e-4,
            ddpm_beta_end: 0.02,
            ddpm_hidden: 512,
            ddpm_epochs: 10,
            ddpm_train_limit: 20_000,
            samples: 64,
            data_dir: None,
        }
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Input(format!("bad value {v:?} for {key}")))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| num(key, s))
                .collect()
        }
        let v = value.trim();
        match key.trim() {
            "setup" => self.setup = v.parse()?,
            "seeds" => self.seeds = list(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "batch" => self.batch = num(key, v)?,
            "lr" => self.lr = num(key, v)?,
            "weight_decay" => self.weight_decay = num(key, v)?,
            "sigma_train" | "sigma" => self.sigma_train = num(key, v)?,
            "sigma_shift" => self.sigma_shift = num(key, v)?,
            "latent_dim" => self.latent_dim = num(key, v)?,
            "codebook_k" => self.codebook_k = num(key, v)?,
            "mse_target" => self.mse_target = num(key, v)?,
            "depths" => self.depths = list(key, v)?,
            "hidden" => self.hidden = num(key, v)?,
            "ae_epochs" => self.ae_epochs = num(key, v)?,
            "train_limit" => self.train_limit = num(key, v)?,
            "test_limit" => self.test_limit = num(key, v)?,
            "kmeans_sample" => self.kmeans_sample = num(key, v)?,
            "refinery_scales" => self.refinery_scales = num(key, v)?,
            "refinery_codes" => self.refinery_codes = num(key, v)?,
            "refinery_hidden" => self.refinery_hidden = num(key, v)?,
            "refinery_epochs" => self.refinery_epochs = num(key, v)?,
            "refinery_batch" => self.refinery_batch = num(key, v)?,
            "refinery_train_limit" => self.refinery_train_limit = num(key, v)?,
            "refinery_temperature" => self.refinery_temperature = num(key, v)?,
            "ddpm_steps" => self.ddpm_steps = num(key, v)?,
            "ddpm_beta_start" => self.ddpm_beta_start = num(key, v)?,
            "ddpm_beta_end" => self.ddpm_beta_end = num(key, v)?,
            "ddpm_hidden" => self.ddpm_hidden = num(key, v)?,
            "ddpm_epochs" => self.ddpm_epochs = num(key, v)?,
            "ddpm_train_limit" => self.ddpm_train_limit = num(key, v)?,
            "samples" => self.samples = num(key, v)?,
            "data_dir" => self.data_dir = Some(PathBuf::from(v)),
            other => return Err(Error::Input(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses flat `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Input(format!("line {}: expected key=value, got {raw:?}", n + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_text(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Input(m.to_string()));
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.epochs == 0 || self.batch == 0 || self.hidden == 0 {
            return bad("epochs, batch and hidden must be positive");
        }
        if !(self.lr > 0.0) || self.weight_decay < 0.0 {
            return bad("lr must be > 0 and weight_decay ≥ 0");
        }
        if self.sigma_train < 0.0 || self.sigma_shift < 0.0 {
            return bad("noise levels must be ≥ 0");
        }
        if self.depths.iter().any(|&s| !(1..=3).contains(&s)) {
            return bad("depth sweep supports S in 1..=3");
        }
        if self.codebook_k == 0 || self.codebook_k > 256 {
            return bad("codebook_k must be in 1..=256 so codes fit a byte");
        }
        if self.refinery_temperature <= 0.0 {
            return bad("refinery_temperature must be > 0");
        }
        Ok(())
    }

    /// Canonical `key=value` text of everything that influences results.
    /// The data directory is excluded: it only says where to find MNIST.
    pub fn canonical_text(&self) -> String {
        let join = |v: &[u64]| v.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        let depths: Vec<u64> = self.depths.iter().map(|&d| d as u64).collect();
        let fields: Vec<(&str, String)> = vec![
            ("setup", self.setup.to_string()),
            ("seeds", join(&self.seeds)),
            ("epochs", self.epochs.to_string()),
            ("batch", self.batch.to_string()),
            ("lr", self.lr.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("sigma_train", self.sigma_train.to_string()),
            ("sigma_shift", self.sigma_shift.to_string()),
            ("latent_dim", self.latent_dim.to_string()),
            ("codebook_k", self.codebook_k.to_string()),
            ("mse_target", self.mse_target.to_string()),
            ("depths", join(&depths)),
            ("hidden", self.hidden.to_string()),
            ("ae_epochs", self.ae_epochs.to_string()),
            ("train_limit", self.train_limit.to_string()),
            ("test_limit", self.test_limit.to_string()),
            ("kmeans_sample", self.kmeans_sample.to_string()),
            ("refinery_scales", self.refinery_scales.to_string()),
            ("refinery_codes", self.refinery_codes.to_string()),
            ("refinery_hidden", self.refinery_hidden.to_string()),
            ("refinery_epochs", self.refinery_epochs.to_string()),
            ("refinery_batch", self.refinery_batch.to_string()),
            (
                "refinery_train_limit",
                self.refinery_train_limit.to_string(),
            ),
            (
                "refinery_temperature",
                self.refinery_temperature.to_string(),
            ),
            ("ddpm_steps", self.ddpm_steps.to_string()),
            ("ddpm_beta_start", self.ddpm_beta_start.to_string()),
            ("ddpm_beta_end", self.ddpm_beta_end.to_string()),
            ("ddpm_hidden", self.ddpm_hidden.to_string()),
            ("ddpm_epochs", self.ddpm_epochs.to_string()),
            ("ddpm_train_limit", self.ddpm_train_limit.to_string()),
            ("samples", self.samples.to_string()),
        ];
        fields.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        hex_digest(self.canonical_text().as_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
