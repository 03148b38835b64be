use crate::error::{Error, Result};
use crate::ndtensor::Grid;

/// Mean squared error over all elements and its gradient `2(y−t)/n`.
pub fn loss_mse(y: &Grid, target: &Grid) -> Result<(f64, Grid)> {
    let diff = y.sub(target)?;
    let n = diff.len() as f64;
    let loss = diff.sum_squares() / n;
    Ok((loss, diff.mul_scalar(2.0 / n)))
}

/// Mean negative log-softmax probability of the true labels.
pub fn loss_softmax_ce(logits: &Grid, labels: &[usize]) -> Result<(f64, Grid)> {
    let (b, v) = (logits.rows(), logits.cols());
    if labels.len() != b {
        return Err(Error::dim(
            "loss_softmax_ce",
            format!("{} labels for {b} rows", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= v) {
        return Err(Error::input(format!("label {bad} outside [0, {v})")));
    }
    let mut grad = Grid::zeros(&[b, v]);
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let lse = log_sum_exp(row);
        total += lse - row[label];
        let g = grad.row_mut(i);
        for (gj, &z) in g.iter_mut().zip(row) {
            *gj = (z - lse).exp() / b as f64;
        }
        g[label] -= 1.0 / b as f64;
    }
    Ok((total / b as f64, grad))
}

/// Mean binary cross-entropy over every bit, evaluated as
/// `max(z,0) − t·z + ln(1 + e^{−|z|})`.
pub fn loss_bce_bits(logits: &Grid, bits: &Grid) -> Result<(f64, Grid)> {
    if logits.shape() != bits.shape() {
        return Err(Error::dim(
            "loss_bce_bits",
            format!("{:?} vs {:?}", logits.shape(), bits.shape()),
        ));
    }
    if bits.data().iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::input("bit targets must be 0 or 1"));
    }
    let n = logits.len() as f64;
    let mut total = 0.0;
    let grad = logits.zip_map(bits, "loss_bce_bits", |z, t| (sigmoid(z) - t) / n)?;
    for (&z, &t) in logits.data().iter().zip(bits.data()) {
        total += z.max(0.0) - t * z + (-z.abs()).exp().ln_1p();
    }
    Ok((total / n, grad))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|&z| (z - m).exp()).sum::<f64>().ln()
}

/// Row-wise log-softmax.
pub fn log_softmax(logits: &Grid) -> Grid {
    let mut out = logits.clone();
    let c = out.cols();
    for row in out.data_mut().chunks_mut(c) {
        let lse = log_sum_exp(row);
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}
