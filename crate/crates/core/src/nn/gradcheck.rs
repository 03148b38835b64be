use super::loss::{loss_bce_bits, loss_mse, loss_softmax_ce};
use super::mlp::Mlp;
use crate::error::{Error, Result};
use crate::ndtensor::Grid;

/// A loss head together with its targets.
#[derive(Clone, Debug)]
pub enum LossHead {
    Mse(Grid),
    SoftmaxCe(Vec<usize>),
    BceBits(Grid),
}

impl LossHead {
    pub fn name(&self) -> &'static str {
        match self {
            LossHead::Mse(_) => "mse",
            LossHead::SoftmaxCe(_) => "softmax_ce",
            LossHead::BceBits(_) => "bce_bits",
        }
    }

    pub fn eval(&self, y: &Grid) -> Result<(f64, Grid)> {
        match self {
            LossHead::Mse(t) => loss_mse(y, t),
            LossHead::SoftmaxCe(labels) => loss_softmax_ce(y, labels),
            LossHead::BceBits(bits) => loss_bce_bits(y, bits),
        }
    }
}

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub worst_relative: f64,
    /// Parameter group of the worst entry (`0..6` in `Mlp::params` order, 6
    /// for the input).
    pub worst_group: usize,
    pub worst_index: usize,
    pub checked: usize,
}

/// `|a − n| / max(|a|, |n|, floor)`; the floor keeps entries whose true
/// gradient is numerically zero from dividing rounding noise by itself.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Compares every parameter gradient and the input gradient of `model` on
/// `x` under `head` against central differences with step `h`.
pub fn check_mlp_gradients(model: &Mlp, x: &Grid, head: &LossHead, h: f64) -> Result<GradCheck> {
    if h <= 0.0 {
        return Err(Error::Input(format!("step must be positive, got {h}")));
    }
    let (y, cache) = model.forward_with_cache(x)?;
    let (_, dy) = head.eval(&y)?;
    let grads = model.backward(&cache, &dy, true)?;
    let loss_of = |m: &Mlp, xin: &Grid| -> Result<f64> { Ok(head.eval(&m.forward(xin)?)?.0) };

    let mut out = GradCheck {
        worst_relative: 0.0,
        worst_group: 0,
        worst_index: 0,
        checked: 0,
    };
    let mut record = |group: usize, index: usize, analytic: f64, numeric: f64| {
        let r = relative_error(analytic, numeric, RELATIVE_FLOOR);
        out.checked += 1;
        if r > out.worst_relative || r.is_nan() {
            out.worst_relative = r;
            out.worst_group = group;
            out.worst_index = index;
        }
    };

    let analytic = grads.params();
    for group in 0..6 {
        for index in 0..analytic[group].len() {
            let mut probe = model.clone();
            let base = probe.params()[group].data()[index];
            probe.params_mut()[group].data_mut()[index] = base + h;
            let plus = loss_of(&probe, x)?;
            probe.params_mut()[group].data_mut()[index] = base - h;
            let minus = loss_of(&probe, x)?;
            record(
                group,
                index,
                analytic[group].data()[index],
                (plus - minus) / (2.0 * h),
            );
        }
    }
    let dx = grads.input.expect("input gradient requested");
    for index in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[index] += h;
        let plus = loss_of(model, &xp)?;
        xp.data_mut()[index] -= 2.0 * h;
        let minus = loss_of(model, &xp)?;
        record(6, index, dx.data()[index], (plus - minus) / (2.0 * h));
    }
    Ok(out)
}
