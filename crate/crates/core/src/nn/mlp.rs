use std::sync::atomic::{AtomicU64, Ordering};

use super::activation::{gelu, gelu_with_grad, layernorm, layernorm_backward, LayerNormCache};
use crate::error::{Error, Result};
use crate::ndtensor::{matmul, matmul_nt, matmul_tn, Grid, RngStream};

pub const DEFAULT_HIDDEN: usize = 512;

static NEXT_TAG: AtomicU64 = AtomicU64::new(1);

fn fresh_tag() -> u64 {
    NEXT_TAG.fetch_add(1, Ordering::Relaxed)
}

/// Two-layer perceptron `y = W2ᵀ·LN(gelu(W1ᵀ·x + b1)) + b2`, stored with
/// weights laid out `[fan_in × fan_out]` so a batch `x[B × in]` multiplies
/// on the left.
#[derive(Debug)]
pub struct Mlp {
    pub w1: Grid,
    pub b1: Grid,
    pub ln_gamma: Grid,
    pub ln_beta: Grid,
    pub w2: Grid,
    pub b2: Grid,
    // Changes on every parameter update; forward caches record it so a
    // backward pass against updated weights is rejected.
    tag: u64,
}

impl Clone for Mlp {
    fn clone(&self) -> Self {
        Self {
            w1: self.w1.clone(),
            b1: self.b1.clone(),
            ln_gamma: self.ln_gamma.clone(),
            ln_beta: self.ln_beta.clone(),
            w2: self.w2.clone(),
            b2: self.b2.clone(),
            tag: fresh_tag(),
        }
    }
}

/// Forward-pass intermediates retained for [`Mlp::backward`].
#[derive(Debug)]
pub struct MlpCache {
    input: Grid,
    gelu_slope: Grid,
    ln: LayerNormCache,
    normed: Grid,
    tag: u64,
}

/// Gradients for the six parameter groups plus the input.
#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub w1: Grid,
    pub b1: Grid,
    pub ln_gamma: Grid,
    pub ln_beta: Grid,
    pub w2: Grid,
    pub b2: Grid,
    pub input: Option<Grid>,
}

impl MlpGrads {
    pub fn params(&self) -> [&Grid; 6] {
        [
            &self.w1,
            &self.b1,
            &self.ln_gamma,
            &self.ln_beta,
            &self.w2,
            &self.b2,
        ]
    }

    /// L2 norm of all parameter gradients concatenated.
    pub fn global_norm(&self) -> f64 {
        self.params()
            .iter()
            .map(|g| g.sum_squares())
            .sum::<f64>()
            .sqrt()
    }
}

impl Mlp {
    /// He-scaled normal weights (std `sqrt(2/fan_in)`), zero biases, unit
    /// LayerNorm gain and zero shift.
    pub fn new(input: usize, hidden: usize, output: usize, rng: &mut RngStream) -> Self {
        let s1 = (2.0 / input as f64).sqrt();
        let s2 = (2.0 / hidden as f64).sqrt();
        let w1 = rng.randn(&[input, hidden]).mul_scalar(s1);
        let w2 = rng.randn(&[hidden, output]).mul_scalar(s2);
        Self {
            w1,
            b1: Grid::zeros(&[hidden]),
            ln_gamma: Grid::full(&[hidden], 1.0),
            ln_beta: Grid::zeros(&[hidden]),
            w2,
            b2: Grid::zeros(&[output]),
            tag: fresh_tag(),
        }
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: Grid::zeros(&[input, hidden]),
            b1: Grid::zeros(&[hidden]),
            ln_gamma: Grid::full(&[hidden], 1.0),
            ln_beta: Grid::zeros(&[hidden]),
            w2: Grid::zeros(&[hidden, output]),
            b2: Grid::zeros(&[output]),
            tag: fresh_tag(),
        }
    }

    /// Assembles a model from explicit parameters, validating their shapes.
    pub fn from_parts(params: [Grid; 6]) -> Result<Self> {
        let [w1, b1, ln_gamma, ln_beta, w2, b2] = params;
        let (input, hidden) = (w1.rows(), w1.cols());
        let output = w2.cols();
        let ok = w1.ndim() == 2
            && w2.ndim() == 2
            && w2.rows() == hidden
            && b1.len() == hidden
            && ln_gamma.len() == hidden
            && ln_beta.len() == hidden
            && b2.len() == output
            && input > 0;
        if !ok {
            return Err(Error::dim(
                "Mlp::from_parts",
                "inconsistent parameter shapes",
            ));
        }
        Ok(Self {
            w1,
            b1,
            ln_gamma,
            ln_beta,
            w2,
            b2,
            tag: fresh_tag(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn params(&self) -> [&Grid; 6] {
        [
            &self.w1,
            &self.b1,
            &self.ln_gamma,
            &self.ln_beta,
            &self.w2,
            &self.b2,
        ]
    }

    /// Mutable access to the parameters. Invalidates outstanding caches.
    pub fn params_mut(&mut self) -> [&mut Grid; 6] {
        self.tag = fresh_tag();
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.ln_gamma,
            &mut self.ln_beta,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    pub fn param_count_for(input: usize, hidden: usize, output: usize) -> usize {
        input * hidden + 3 * hidden + hidden * output + output
    }

    fn pre_activation(&self, x: &Grid) -> Result<Grid> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim(
                "mlp_forward",
                format!(
                    "input width {} but model expects {}",
                    x.cols(),
                    self.input_dim()
                ),
            ));
        }
        let mut pre = matmul(x, &self.w1)?;
        add_row_bias(&mut pre, &self.b1);
        Ok(pre)
    }

    /// Output only; no cache is kept.
    pub fn forward(&self, x: &Grid) -> Result<Grid> {
        let h = gelu(&self.pre_activation(x)?);
        let (normed, _) = layernorm(&h, &self.ln_gamma, &self.ln_beta);
        let mut y = matmul(&normed, &self.w2)?;
        add_row_bias(&mut y, &self.b2);
        Ok(y)
    }

    pub fn forward_with_cache(&self, x: &Grid) -> Result<(Grid, MlpCache)> {
        let (h, gelu_slope) = gelu_with_grad(&self.pre_activation(x)?);
        let (normed, ln) = layernorm(&h, &self.ln_gamma, &self.ln_beta);
        let mut y = matmul(&normed, &self.w2)?;
        add_row_bias(&mut y, &self.b2);
        let cache = MlpCache {
            input: Grid::new(vec![x.rows(), x.cols()], x.data().to_vec())?,
            gelu_slope,
            ln,
            normed,
            tag: self.tag,
        };
        Ok((y, cache))
    }

    /// Parameter gradients; the input gradient is filled in only when
    /// `want_input` is set.
    pub fn backward(&self, cache: &MlpCache, dy: &Grid, want_input: bool) -> Result<MlpGrads> {
        if cache.tag != self.tag {
            return Err(Error::Contract(
                "backward called with a cache from a different or since-updated model".into(),
            ));
        }
        if dy.rows() != cache.input.rows() || dy.cols() != self.output_dim() {
            return Err(Error::dim(
                "mlp_backward",
                format!(
                    "dL/dy is {}×{}, expected {}×{}",
                    dy.rows(),
                    dy.cols(),
                    cache.input.rows(),
                    self.output_dim()
                ),
            ));
        }
        let dw2 = matmul_tn(&cache.normed, dy)?;
        let db2 = column_sums(dy);
        let dnormed = matmul_nt(dy, &self.w2)?;
        let (dh, dgamma, dbeta) = layernorm_backward(&cache.ln, &self.ln_gamma, &dnormed);
        let dpre = dh.zip_map(&cache.gelu_slope, "gelu_backward", |a, b| a * b)?;
        let dw1 = matmul_tn(&cache.input, &dpre)?;
        let db1 = column_sums(&dpre);
        let input = if want_input {
            Some(matmul_nt(&dpre, &self.w1)?)
        } else {
            None
        };
        Ok(MlpGrads {
            w1: dw1,
            b1: db1,
            ln_gamma: dgamma,
            ln_beta: dbeta,
            w2: dw2,
            b2: db2,
            input,
        })
    }
}

fn add_row_bias(x: &mut Grid, bias: &Grid) {
    let b = bias.data();
    let c = x.cols();
    for row in x.data_mut().chunks_mut(c) {
        for (v, bb) in row.iter_mut().zip(b) {
            *v += bb;
        }
    }
}

fn column_sums(x: &Grid) -> Grid {
    let c = x.cols();
    let mut out = vec![0.0; c];
    for row in x.data().chunks(c) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    Grid::from_fn(&[c], |j| out[j])
}
