use super::model::{context_patches, RefineryModel, TokenPyramid};
use crate::data::batch_indices;
use crate::error::{Error, Result};
use crate::ndtensor::{Grid, RngStream};
use crate::nn::{loss_softmax_ce, AdamW, AdamWConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineryTrainConfig {
    pub epochs: usize,
    /// Token pyramids per minibatch.
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
}

impl Default for RefineryTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            optimizer: AdamWConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RefineryTrace {
    /// Teacher-forced NLL of the untrained predictors, nats per residual site.
    pub initial_nll: f64,
    /// Mean training NLL per residual site for each epoch.
    pub epoch_nll: Vec<f64>,
}

impl RefineryTrace {
    pub fn final_nll(&self) -> f64 {
        self.epoch_nll.last().copied().unwrap_or(self.initial_nll)
    }
}

/// Teacher-forced contexts per scale, stacked over the dataset.
struct ScaleData {
    contexts: Vec<Grid>,
    labels: Vec<Vec<usize>>,
}

fn gather(model: &RefineryModel, data: &[TokenPyramid]) -> Result<Vec<ScaleData>> {
    let s = model.scales();
    let mut out: Vec<ScaleData> = (0..s)
        .map(|_| ScaleData {
            contexts: Vec::with_capacity(data.len()),
            labels: Vec::with_capacity(data.len()),
        })
        .collect();
    for t in data {
        let (contexts, _) = model.contexts(t)?;
        for ctx in contexts {
            let k = ctx.scale;
            out[k].labels.push(t.residual(k).codes.clone());
            out[k].contexts.push(ctx.values);
        }
    }
    Ok(out)
}

fn batch_for(scale: &ScaleData, idx: &[usize]) -> Result<(Grid, Vec<usize>)> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width = 0;
    for &i in idx {
        let p = context_patches(&scale.contexts[i]);
        width = p.cols();
        rows.extend(p.into_data());
        labels.extend_from_slice(&scale.labels[i]);
    }
    Ok((Grid::new(vec![labels.len(), width], rows)?, labels))
}

fn mean_nll(model: &RefineryModel, scales: &[ScaleData]) -> Result<f64> {
    let (mut total, mut sites) = (0.0, 0usize);
    for (k, sd) in scales.iter().enumerate() {
        for chunk in (0..sd.contexts.len()).collect::<Vec<_>>().chunks(256) {
            let (x, y) = batch_for(sd, chunk)?;
            let (loss, _) = loss_softmax_ce(&model.predictors[k].forward(&x)?, &y)?;
            total += loss * y.len() as f64;
            sites += y.len();
        }
    }
    Ok(if sites == 0 {
        0.0
    } else {
        total / sites as f64
    })
}

/// Fits the base prior, then trains every predictor by minibatch AdamW on the
/// teacher-forced cross-entropy of its residual map. Codebooks stay frozen.
pub fn train_refinery(
    model: &mut RefineryModel,
    data: &[TokenPyramid],
    config: &RefineryTrainConfig,
    rng: &mut RngStream,
) -> Result<RefineryTrace> {
    if data.is_empty() {
        return Err(Error::input(
            "refinery training needs at least one token pyramid",
        ));
    }
    model.fit_base_prior(data)?;
    let scales = gather(model, data)?;
    let mut opts: Vec<AdamW> = model
        .predictors
        .iter()
        .map(|p| AdamW::for_mlp(config.optimizer, p))
        .collect();
    let mut trace = RefineryTrace {
        initial_nll: mean_nll(model, &scales)?,
        epoch_nll: Vec::with_capacity(config.epochs),
    };
    for epoch in 0..config.epochs {
        let (mut total, mut sites) = (0.0, 0usize);
        for batch in batch_indices(data.len(), config.batch_size, rng)? {
            for (k, sd) in scales.iter().enumerate() {
                let (x, y) = batch_for(sd, &batch)?;
                let psi = &mut model.predictors[k];
                let (logits, cache) = psi.forward_with_cache(&x)?;
                let (loss, dlogits) = loss_softmax_ce(&logits, &y)?;
                let grads = psi.backward(&cache, &dlogits, false)?;
                opts[k].step_mlp(psi, &grads)?;
                total += loss * y.len() as f64;
                sites += y.len();
            }
        }
        let nll = if sites == 0 {
            0.0
        } else {
            total / sites as f64
        };
        log::debug!("refinery epoch {} nll {nll:.5}", epoch + 1);
        trace.epoch_nll.push(nll);
    }
    Ok(trace)
}

/// Mean teacher-forced NLL in nats per token site (base sites included).
pub fn nll_per_site(model: &RefineryModel, data: &[TokenPyramid]) -> Result<f64> {
    let (mut total, mut sites) = (0.0, 0usize);
    for t in data {
        total -= model.log_likelihood(t)?;
        sites += t.total_sites();
    }
    if sites == 0 {
        return Err(Error::input("no token sites to score"));
    }
    Ok(total / sites as f64)
}
