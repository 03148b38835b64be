//! Denoising diffusion baseline: linear noise schedule, ε-prediction training
//! and ancestral sampling with fixed variance `β_t`.

use crate::error::{Error, Result};
use crate::ndtensor::{Grid, RngStream};
use crate::nn::{loss_mse, AdamW, AdamWConfig, Mlp};

pub const DEFAULT_STEPS: usize = 200;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;
pub const TIME_FEATURES: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::input("noise schedule needs at least one step"));
        }
        if let Some(b) = betas.iter().find(|&&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::input(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// `(β_t, α_t, ᾱ_t)` for 1-based `t`.
    pub fn at(&self, t: usize) -> Result<(f64, f64, f64)> {
        if t == 0 || t > self.steps() {
            return Err(Error::input(format!(
                "timestep {t} outside [1, {}]",
                self.steps()
            )));
        }
        Ok((
            self.betas[t - 1],
            self.alphas[t - 1],
            self.alpha_bars[t - 1],
        ))
    }
}

pub fn make_linear_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::input("T must be ≥ 1"));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::input(format!(
            "need 0 < beta_start ≤ beta_end < 1, got [{beta_start}, {beta_end}]"
        )));
    }
    let betas = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    NoiseSchedule::from_betas(betas)
}

/// Closed-form marginal `sqrt(ᾱ_t)·x0 + sqrt(1−ᾱ_t)·eps`.
pub fn q_sample(x0: &Grid, t: usize, eps: &Grid, sched: &NoiseSchedule) -> Result<Grid> {
    let (_, _, ab) = sched.at(t)?;
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    x0.zip_map(eps, "q_sample", |x, e| a * x + b * e)
}

/// Sinusoidal features of an integer timestep: `sin(t·ω_i), cos(t·ω_i)` with
/// `ω_i = 10000^(−i/8)`.
pub fn time_features(t: usize) -> [f64; TIME_FEATURES] {
    let half = TIME_FEATURES / 2;
    let mut out = [0.0; TIME_FEATURES];
    for i in 0..half {
        let w = libm::pow(10_000.0, -(i as f64) / half as f64);
        out[2 * i] = libm::sin(t as f64 * w);
        out[2 * i + 1] = libm::cos(t as f64 * w);
    }
    out
}

/// `[x_t ∥ features(t_i)]` rows.
fn network_input(xt: &Grid, ts: &[usize]) -> Grid {
    let d = xt.cols();
    let mut data = Vec::with_capacity(xt.rows() * (d + TIME_FEATURES));
    for (i, &t) in ts.iter().enumerate() {
        data.extend_from_slice(xt.row(i));
        data.extend_from_slice(&time_features(t));
    }
    Grid::new(vec![xt.rows(), d + TIME_FEATURES], data).expect("row count")
}

/// ε-prediction network and its optimizer state.
#[derive(Clone, Debug)]
pub struct Denoiser {
    pub net: Mlp,
    pub optimizer: AdamW,
    pub schedule: NoiseSchedule,
}

impl Denoiser {
    /// The output layer starts at zero so the untrained prediction is `ε̂ = 0`.
    pub fn new(
        data_dim: usize,
        hidden: usize,
        schedule: NoiseSchedule,
        optimizer: AdamWConfig,
        rng: &mut RngStream,
    ) -> Self {
        let mut net = Mlp::new(data_dim + TIME_FEATURES, hidden, data_dim, rng);
        net.params_mut()[4].data_mut().fill(0.0);
        let optimizer = AdamW::for_mlp(optimizer, &net);
        Self {
            net,
            optimizer,
            schedule,
        }
    }

    pub fn data_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn predict_noise(&self, xt: &Grid, ts: &[usize]) -> Result<Grid> {
        if xt.cols() != self.data_dim() || ts.len() != xt.rows() {
            return Err(Error::dim(
                "predict_noise",
                format!(
                    "{:?} with {} timesteps, data dim {}",
                    xt.shape(),
                    ts.len(),
                    self.data_dim()
                ),
            ));
        }
        self.net.forward(&network_input(xt, ts))
    }
}

/// Mean squared ε-prediction error on `x0` at uniformly drawn timesteps,
/// without updating the model.
pub fn ddpm_loss(model: &Denoiser, x0: &Grid, rng: &mut RngStream) -> Result<f64> {
    let (input, eps) = noised_batch(model, x0, rng)?;
    loss_mse(&model.net.forward(&input)?, &eps).map(|(l, _)| l)
}

fn noised_batch(model: &Denoiser, x0: &Grid, rng: &mut RngStream) -> Result<(Grid, Grid)> {
    if x0.ndim() != 2 || x0.cols() != model.data_dim() {
        return Err(Error::dim(
            "ddpm_train_step",
            format!("batch {:?}, data dim {}", x0.shape(), model.data_dim()),
        ));
    }
    let steps = model.schedule.steps();
    let ts: Vec<usize> = (0..x0.rows()).map(|_| 1 + rng.below(steps)).collect();
    let eps = rng.randn(x0.shape());
    let mut xt = x0.clone();
    for (i, &t) in ts.iter().enumerate() {
        let (_, _, ab) = model.schedule.at(t)?;
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        for (x, e) in xt.row_mut(i).iter_mut().zip(eps.row(i)) {
            *x = a * *x + b * e;
        }
    }
    Ok((network_input(&xt, &ts), eps))
}

/// One AdamW step on the ε-prediction loss; returns the pre-update loss.
pub fn ddpm_train_step(model: &mut Denoiser, x0: &Grid, rng: &mut RngStream) -> Result<f64> {
    let (input, eps) = noised_batch(model, x0, rng)?;
    let (pred, cache) = model.net.forward_with_cache(&input)?;
    let (loss, grad) = loss_mse(&pred, &eps)?;
    let grads = model.net.backward(&cache, &grad, false)?;
    model.optimizer.step_mlp(&mut model.net, &grads)?;
    Ok(loss)
}

#[derive(Clone, Debug)]
pub struct DdpmSamples {
    pub samples: Grid,
    /// Reverse-network evaluations performed, one per timestep.
    pub network_evals: usize,
}

/// Ancestral sampling from `x_T ~ N(0, I)` through all `T` reverse steps.
pub fn ddpm_sample(model: &Denoiser, rng: &mut RngStream, n: usize) -> Result<DdpmSamples> {
    let d = model.data_dim();
    let mut x = rng.randn(&[n, d]);
    let mut evals = 0;
    for t in (1..=model.schedule.steps()).rev() {
        let (beta, alpha, ab) = model.schedule.at(t)?;
        let eps = model.predict_noise(&x, &vec![t; n])?;
        evals += 1;
        let c = beta / (1.0 - ab).sqrt();
        let inv = 1.0 / alpha.sqrt();
        x = x.zip_map(&eps, "ddpm_sample", |xv, e| inv * (xv - c * e))?;
        if t > 1 {
            let s = beta.sqrt();
            let z = rng.randn(&[n, d]);
            x.add_assign(&z.mul_scalar(s))?;
        }
    }
    Ok(DdpmSamples {
        samples: x,
        network_evals: evals,
    })
}
