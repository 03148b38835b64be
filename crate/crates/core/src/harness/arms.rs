//! Trainable method arms shared by the setups, and the common
//! train-evaluate loop.

use super::autoencoder::LinearAutoencoder;
use super::metrics::mse;
use super::streams;
use crate::data::{add_noise, batch_indices};
use crate::error::{Error, Result};
use crate::ndtensor::{Grid, RngStream};
use crate::nn::{loss_bce_bits, loss_mse, loss_softmax_ce, sigmoid, AdamW, AdamWConfig, Mlp};
use crate::pyramid::{down_batch, up_batch};
use crate::quantize::{assign, byte_to_bits, decode_bits, dequantize, Codebook};
use std::time::Instant;

pub const IMAGE_SIDE: usize = 28;
const EVAL_CHUNK: usize = 1000;

/// A denoiser that maps noisy pixel rows to clean pixel rows.
pub trait Arm {
    fn param_count(&self) -> usize;

    /// One optimizer step on a minibatch; returns the global gradient norm.
    fn train_batch(&mut self, clean: &Grid, noisy: &Grid) -> Result<f64>;

    fn predict(&self, noisy: &Grid) -> Result<Grid>;

    /// Prediction plus its finest Laplacian band.
    fn predict_detail(&self, noisy: &Grid) -> Result<(Grid, Grid)> {
        let x = self.predict(noisy)?;
        let r = finest_band(&x)?;
        Ok((x, r))
    }
}

fn level_side(level: usize) -> usize {
    (0..level).fold(IMAGE_SIDE, |s, _| s.div_ceil(2))
}

/// Row-wise `down` on `[N × s²]` square images.
pub fn down_rows(x: &Grid, side: usize) -> Result<Grid> {
    down_batch(x, side, side)
}

/// Row-wise `up` from side `s` to side `target`.
pub fn up_rows(x: &Grid, side: usize, target: usize) -> Result<Grid> {
    up_batch(x, side, side, (target, target))
}

/// `x − up(down(x))` per row of 28×28 images.
pub fn finest_band(x: &Grid) -> Result<Grid> {
    let coarse = down_rows(x, IMAGE_SIDE)?;
    x.sub(&up_rows(&coarse, level_side(1), IMAGE_SIDE)?)
}

fn grad_norm(parts: &[f64]) -> f64 {
    parts.iter().map(|n| n * n).sum::<f64>().sqrt()
}

struct Stage {
    net: Mlp,
    opt: AdamW,
}

impl Stage {
    fn new(
        input: usize,
        hidden: usize,
        output: usize,
        opt: AdamWConfig,
        rng: &mut RngStream,
    ) -> Self {
        let net = Mlp::new(input, hidden, output, rng);
        let opt = AdamW::for_mlp(opt, &net);
        Self { net, opt }
    }

    /// Regression step; returns `(prediction before the update, grad norm)`.
    fn step_mse(&mut self, x: &Grid, target: &Grid) -> Result<(Grid, f64)> {
        let (y, cache) = self.net.forward_with_cache(x)?;
        let (_, dy) = loss_mse(&y, target)?;
        let g = self.net.backward(&cache, &dy, false)?;
        let norm = g.global_norm();
        self.opt.step_mlp(&mut self.net, &g)?;
        Ok((y, norm))
    }
}

/// Coarse-to-fine pixel denoiser with `S` bands.
///
/// Stage 0 denoises the Gaussian level `G_{S−1}` from the matching level of
/// the noisy input. Each later stage predicts the Laplacian band
/// `G_j − up(G_{j+1})` from `[up(Ĝ_{j+1}) ∥ noisy level j]`, and adds it to
/// the upsampled estimate. With `S = 1` this is a plain 784→784 MLP.
pub struct BandedArm {
    bands: usize,
    stages: Vec<Stage>,
}

impl BandedArm {
    pub fn stage_dims(bands: usize) -> Vec<(usize, usize)> {
        (0..bands)
            .map(|i| {
                let level = bands - 1 - i;
                let n = level_side(level).pow(2);
                if i == 0 {
                    (n, n)
                } else {
                    (2 * n, n)
                }
            })
            .collect()
    }

    pub fn param_count_for(bands: usize, hidden: usize) -> usize {
        Self::stage_dims(bands)
            .iter()
            .map(|&(i, o)| Mlp::param_count_for(i, hidden, o))
            .sum()
    }

    /// Largest shared hidden width whose total parameters do not exceed
    /// `budget`; fails if the shortfall is above 1%.
    pub fn matched_hidden(bands: usize, budget: usize) -> Result<usize> {
        let fixed = Self::param_count_for(bands, 0);
        let per = Self::param_count_for(bands, 1) - fixed;
        if budget <= fixed {
            return Err(Error::Contract(format!(
                "budget {budget} below fixed cost {fixed}"
            )));
        }
        let h = (budget - fixed) / per;
        let got = Self::param_count_for(bands, h);
        let mismatch = (budget - got) as f64 / budget as f64;
        if h == 0 || mismatch > 0.01 {
            return Err(Error::Contract(format!(
                "{bands} bands: width {h} gives {got} params vs {budget} ({:.2}% off)",
                100.0 * mismatch
            )));
        }
        Ok(h)
    }

    pub fn new(bands: usize, hidden: usize, opt: AdamWConfig, rng: &mut RngStream) -> Result<Self> {
        if !(1..=3).contains(&bands) {
            return Err(Error::input(format!(
                "banded arm supports 1..=3 bands, got {bands}"
            )));
        }
        let stages = Self::stage_dims(bands)
            .into_iter()
            .map(|(i, o)| Stage::new(i, hidden, o, opt, rng))
            .collect();
        Ok(Self { bands, stages })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Gaussian levels `0..bands` of a batch.
    fn levels(&self, x: &Grid) -> Result<Vec<Grid>> {
        let mut out = vec![x.clone()];
        for l in 1..self.bands {
            let next = down_rows(&out[l - 1], level_side(l - 1))?;
            out.push(next);
        }
        Ok(out)
    }

    /// Runs every stage; returns `(Ĝ_0, finest predicted band)`.
    fn run(&self, noisy: &Grid) -> Result<(Grid, Option<Grid>)> {
        let levels = self.levels(noisy)?;
        let top = self.bands - 1;
        let mut g = self.stages[0].net.forward(&levels[top])?;
        let mut band = None;
        for (i, stage) in self.stages.iter().enumerate().skip(1) {
            let level = top - i;
            let lifted = up_rows(&g, level_side(level + 1), level_side(level))?;
            let r = stage.net.forward(&Grid::hcat(&lifted, &levels[level])?)?;
            g = lifted.add(&r)?;
            band = Some(r);
        }
        Ok((g, band))
    }
}

impl Arm for BandedArm {
    fn param_count(&self) -> usize {
        self.stages.iter().map(|s| s.net.param_count()).sum()
    }

    fn train_batch(&mut self, clean: &Grid, noisy: &Grid) -> Result<f64> {
        let noisy_levels = self.levels(noisy)?;
        let clean_levels = self.levels(clean)?;
        let top = self.bands - 1;
        let mut norms = Vec::with_capacity(self.bands);
        let (mut g_hat, n) = self.stages[0].step_mse(&noisy_levels[top], &clean_levels[top])?;
        norms.push(n);
        for i in 1..self.bands {
            let level = top - i;
            let (side, coarse_side) = (level_side(level), level_side(level + 1));
            let lifted = up_rows(&g_hat, coarse_side, side)?;
            let target =
                clean_levels[level].sub(&up_rows(&clean_levels[level + 1], coarse_side, side)?)?;
            let input = Grid::hcat(&lifted, &noisy_levels[level])?;
            let (r, n) = self.stages[i].step_mse(&input, &target)?;
            norms.push(n);
            g_hat = lifted.add(&r)?;
        }
        Ok(grad_norm(&norms))
    }

    fn predict(&self, noisy: &Grid) -> Result<Grid> {
        self.run(noisy).map(|(g, _)| g)
    }

    fn predict_detail(&self, noisy: &Grid) -> Result<(Grid, Grid)> {
        let (x, band) = self.run(noisy)?;
        let r = match band {
            Some(r) => r,
            None => finest_band(&x)?,
        };
        Ok((x, r))
    }
}

/// Denoises in the frozen autoencoder's latent space: `E(x̃) ↦ ẑ`, decoded
/// with `D`.
pub struct LatentArm<'a> {
    ae: &'a LinearAutoencoder,
    stage: Stage,
}

impl<'a> LatentArm<'a> {
    pub fn new(
        ae: &'a LinearAutoencoder,
        hidden: usize,
        opt: AdamWConfig,
        rng: &mut RngStream,
    ) -> Self {
        let d = ae.latent_dim();
        Self {
            ae,
            stage: Stage::new(d, hidden, d, opt, rng),
        }
    }
}

impl Arm for LatentArm<'_> {
    fn param_count(&self) -> usize {
        self.stage.net.param_count()
    }

    fn train_batch(&mut self, clean: &Grid, noisy: &Grid) -> Result<f64> {
        let (z_noisy, z) = (self.ae.encode(noisy)?, self.ae.encode(clean)?);
        self.stage.step_mse(&z_noisy, &z).map(|(_, n)| n)
    }

    fn predict(&self, noisy: &Grid) -> Result<Grid> {
        self.ae
            .decode(&self.stage.net.forward(&self.ae.encode(noisy)?)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    Regression,
    Softmax,
    Bitwise,
}

impl HeadKind {
    pub const ALL: [HeadKind; 3] = [Self::Regression, Self::Softmax, Self::Bitwise];

    pub fn name(self) -> &'static str {
        match self {
            Self::Regression => "Regression (MSE)",
            Self::Softmax => "Softmax-64 (CE)",
            Self::Bitwise => "Bitwise-8 (BCE)",
        }
    }
}

/// Latent MLP trunk with one of three output heads. Every head's prediction
/// is mapped to a codebook entry before decoding.
pub struct HeadArm<'a> {
    pub kind: HeadKind,
    ae: &'a LinearAutoencoder,
    codebook: &'a Codebook,
    stage: Stage,
}

impl<'a> HeadArm<'a> {
    pub fn new(
        kind: HeadKind,
        ae: &'a LinearAutoencoder,
        codebook: &'a Codebook,
        hidden: usize,
        opt: AdamWConfig,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let out = match kind {
            HeadKind::Regression => ae.latent_dim(),
            HeadKind::Softmax => codebook.size(),
            HeadKind::Bitwise => {
                if codebook.bit_codes.is_none() {
                    return Err(Error::State("bitwise head needs bit codes".into()));
                }
                8
            }
        };
        Ok(Self {
            kind,
            ae,
            codebook,
            stage: Stage::new(ae.latent_dim(), hidden, out, opt, rng),
        })
    }

    pub fn output_dim(&self) -> usize {
        self.stage.net.output_dim()
    }

    /// Raw latent regression output, decoded without snapping to a code.
    pub fn predict_unquantized(&self, noisy: &Grid) -> Result<Grid> {
        if self.kind != HeadKind::Regression {
            return Err(Error::State(
                "only the regression head has a continuous output".into(),
            ));
        }
        self.ae
            .decode(&self.stage.net.forward(&self.ae.encode(noisy)?)?)
    }

    fn indices(&self, noisy: &Grid) -> Result<Vec<usize>> {
        let out = self.stage.net.forward(&self.ae.encode(noisy)?)?;
        match self.kind {
            HeadKind::Regression => assign(self.codebook, &out),
            HeadKind::Softmax => Ok((0..out.rows())
                .map(|i| {
                    let row = out.row(i);
                    (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b })
                })
                .collect()),
            HeadKind::Bitwise => decode_bits(self.codebook, &out.map(sigmoid)),
        }
    }
}

impl Arm for HeadArm<'_> {
    fn param_count(&self) -> usize {
        self.stage.net.param_count()
    }

    fn train_batch(&mut self, clean: &Grid, noisy: &Grid) -> Result<f64> {
        let z_noisy = self.ae.encode(noisy)?;
        let z = self.ae.encode(clean)?;
        let (y, cache) = self.stage.net.forward_with_cache(&z_noisy)?;
        let dy = match self.kind {
            HeadKind::Regression => loss_mse(&y, &z)?.1,
            HeadKind::Softmax => loss_softmax_ce(&y, &assign(self.codebook, &z)?)?.1,
            HeadKind::Bitwise => {
                let codes = self.codebook.bit_codes.as_ref().expect("checked at build");
                let idx = assign(self.codebook, &z)?;
                let bits: Vec<f64> = idx.iter().flat_map(|&i| byte_to_bits(codes[i])).collect();
                loss_bce_bits(&y, &Grid::new(vec![idx.len(), 8], bits)?)?.1
            }
        };
        let g = self.stage.net.backward(&cache, &dy, false)?;
        let norm = g.global_norm();
        self.stage.opt.step_mlp(&mut self.stage.net, &g)?;
        Ok(norm)
    }

    fn predict(&self, noisy: &Grid) -> Result<Grid> {
        self.ae
            .decode(&dequantize(self.codebook, &self.indices(noisy)?)?)
    }
}

/// Fixed noisy copy of an evaluation set.
pub fn noisy_copy(clean: &Grid, sigma: f64, seed: u64, stream: u64) -> Result<Grid> {
    add_noise(clean, sigma, &mut RngStream::new(seed, stream))
}

/// Applies `f` in chunks to bound memory and concatenates the results.
pub fn chunked(x: &Grid, f: impl Fn(&Grid) -> Result<Grid>) -> Result<Grid> {
    let mut data = Vec::with_capacity(x.len());
    let mut cols = 0;
    let mut start = 0;
    while start < x.rows() {
        let end = (start + EVAL_CHUNK).min(x.rows());
        let out = f(&x.slice_rows(start, end))?;
        cols = out.cols();
        data.extend(out.into_data());
        start = end;
    }
    Grid::new(vec![x.rows(), cols], data)
}

/// Training record of one arm for one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmRun {
    /// Test MSE at the training noise level after every epoch.
    pub test_mse: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub seconds_per_epoch: f64,
}

pub struct TrainPlan<'a> {
    pub train: &'a Grid,
    pub test_clean: &'a Grid,
    pub test_noisy: &'a Grid,
    pub epochs: usize,
    pub batch: usize,
    pub sigma: f64,
    pub seed: u64,
}

/// Shared loop: every arm sees the same batch order and the same noise for a
/// given seed. Only training time enters `seconds_per_epoch`.
pub fn train_arm(arm: &mut dyn Arm, plan: &TrainPlan) -> Result<ArmRun> {
    let mut shuffle = RngStream::new(plan.seed, streams::SHUFFLE);
    let mut noise = RngStream::new(plan.seed, streams::TRAIN_NOISE);
    let mut test_mse = Vec::with_capacity(plan.epochs);
    let mut norms = Vec::new();
    let mut train_secs = 0.0;
    for epoch in 0..plan.epochs {
        let start = Instant::now();
        for idx in batch_indices(plan.train.rows(), plan.batch, &mut shuffle)? {
            let clean = plan.train.select_rows(&idx);
            let noisy = add_noise(&clean, plan.sigma, &mut noise)?;
            norms.push(arm.train_batch(&clean, &noisy)?);
        }
        train_secs += start.elapsed().as_secs_f64();
        let pred = chunked(plan.test_noisy, |x| arm.predict(x))?;
        let m = mse(&pred, plan.test_clean)?;
        log::info!("epoch {:>2}: test mse {m:.5}", epoch + 1);
        test_mse.push(m);
    }
    Ok(ArmRun {
        test_mse,
        grad_norms: norms,
        seconds_per_epoch: train_secs / plan.epochs.max(1) as f64,
    })
}
