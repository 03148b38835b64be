use super::mlp::{Mlp, MlpGrads};
use crate::error::{Error, Result};
use crate::ndtensor::Grid;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// AdamW with bias correction and decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<Grid>,
    v: Vec<Grid>,
    step_count: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &[&Grid]) -> Self {
        Self {
            config,
            m: params.iter().map(|p| Grid::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Grid::zeros(p.shape())).collect(),
            step_count: 0,
        }
    }

    pub fn for_mlp(config: AdamWConfig, model: &Mlp) -> Self {
        Self::new(config, &model.params())
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn update(&mut self, params: &mut [&mut Grid], grads: &[&Grid]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::dim(
                "adamw_step",
                format!(
                    "optimizer tracks {} tensors, got {} params and {} grads",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != m.shape() || g.shape() != m.shape() {
                return Err(Error::dim(
                    "adamw_step",
                    format!("{:?}/{:?} vs state {:?}", p.shape(), g.shape(), m.shape()),
                ));
            }
        }
        self.step_count += 1;
        let AdamWConfig {
            lr,
            weight_decay,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let decay = 1.0 - lr * weight_decay;
        for (i, p) in params.iter_mut().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let g = grads[i].data();
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *w = *w * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn step_mlp(&mut self, model: &mut Mlp, grads: &MlpGrads) -> Result<()> {
        let g = grads.params();
        self.update(&mut model.params_mut(), &g)
    }
}

/// Population variance of a trace of per-step global gradient norms.
pub fn grad_norm_variance(trace: &[f64]) -> Result<f64> {
    if trace.len() < 2 {
        return Err(Error::input(format!(
            "gradient-norm variance needs at least 2 samples, got {}",
            trace.len()
        )));
    }
    // Welford
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in trace.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    Ok(m2 / trace.len() as f64)
}
