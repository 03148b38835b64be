use crate::error::{Error, Result};
use crate::ndtensor::Grid;

/// `10·log10(1/mse)` with unit peak; a perfect match maps to `+∞`.
pub fn psnr(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

pub fn mse(pred: &Grid, target: &Grid) -> Result<f64> {
    Ok(pred.sub(target)?.sum_squares() / pred.len().max(1) as f64)
}

/// Per-row PSNR averaged over rows.
pub fn psnr_per_image(pred: &Grid, target: &Grid) -> Result<f64> {
    if pred.shape() != target.shape() || pred.ndim() != 2 {
        return Err(Error::dim(
            "psnr",
            format!("{:?} vs {:?}", pred.shape(), target.shape()),
        ));
    }
    let n = pred.rows();
    let d = pred.cols() as f64;
    let total: f64 = (0..n)
        .map(|i| {
            let e: f64 = pred
                .row(i)
                .iter()
                .zip(target.row(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            psnr(e / d)
        })
        .sum();
    Ok(total / n.max(1) as f64)
}

/// PSNR restricted to the finest Laplacian band.
pub fn hf_psnr(pred_r0: &Grid, true_r0: &Grid) -> Result<f64> {
    psnr_per_image(pred_r0, true_r0)
}

/// First 1-based epoch whose value is at or below `target`; `+∞` if none.
pub fn epochs_to_target(trace: &[f64], target: f64) -> f64 {
    trace
        .iter()
        .position(|&v| v <= target)
        .map_or(f64::INFINITY, |i| (i + 1) as f64)
}

/// Mean and sample standard deviation (n − 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 || !mean.is_finite() {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_formula() {
        assert!((psnr(0.01) - 20.0).abs() < 1e-12);
        assert!((psnr(1.0)).abs() < 1e-12);
        assert_eq!(psnr(0.0), f64::INFINITY);
    }

    #[test]
    fn per_image_average() {
        let t = Grid::zeros(&[2, 4]);
        let p = Grid::from_rows(&[vec![0.1; 4], vec![0.01f64.sqrt(); 4]]).unwrap();
        let want = (psnr(0.01) + psnr(0.01)) / 2.0;
        assert!((psnr_per_image(&p, &t).unwrap() - want).abs() < 1e-9);
        assert_eq!(hf_psnr(&t, &t).unwrap(), f64::INFINITY);
        assert!(psnr_per_image(&p, &Grid::zeros(&[4, 2])).is_err());
    }

    #[test]
    fn epochs_to_target_examples() {
        assert_eq!(epochs_to_target(&[0.03, 0.019, 0.017], 0.018), 3.0);
        assert_eq!(epochs_to_target(&[0.018], 0.018), 1.0);
        assert_eq!(epochs_to_target(&[0.03, 0.02], 0.018), f64::INFINITY);
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
        let (m, s) = mean_std(&[1.0, f64::INFINITY]);
        assert_eq!((m, s), (f64::INFINITY, 0.0));
    }
}
