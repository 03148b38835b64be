use crate::ndtensor::Grid;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu_scalar(x: f64) -> f64 {
    x * phi(x)
}

pub fn gelu_grad_scalar(x: f64) -> f64 {
    phi(x) + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn gelu(x: &Grid) -> Grid {
    x.map(gelu_scalar)
}

pub fn gelu_grad(x: &Grid) -> Grid {
    x.map(gelu_grad_scalar)
}

/// `gelu(x)` and `gelu'(x)` sharing one CDF evaluation per element.
pub fn gelu_with_grad(x: &Grid) -> (Grid, Grid) {
    let mut value = x.clone();
    let mut slope = x.clone();
    for ((v, d), &xi) in value
        .data_mut()
        .iter_mut()
        .zip(slope.data_mut())
        .zip(x.data())
    {
        let p = phi(xi);
        *v = xi * p;
        *d = p + xi * FRAC_1_SQRT_2PI * (-0.5 * xi * xi).exp();
    }
    (value, slope)
}

pub const LAYERNORM_EPS: f64 = 1e-5;

/// Intermediates of a layer-norm forward pass needed by its backward.
#[derive(Clone, Debug)]
pub struct LayerNormCache {
    pub normalized: Grid,
    pub inv_std: Vec<f64>,
}

/// Row-wise layer normalization of a `[B × F]` grid followed by the affine
/// map `gamma ⊙ x̂ + beta`.
pub fn layernorm(h: &Grid, gamma: &Grid, beta: &Grid) -> (Grid, LayerNormCache) {
    let (b, f) = (h.rows(), h.cols());
    debug_assert_eq!(gamma.len(), f);
    debug_assert_eq!(beta.len(), f);
    let mut normalized = Grid::zeros(&[b, f]);
    let mut out = Grid::zeros(&[b, f]);
    let mut inv_std = Vec::with_capacity(b);
    let (g, be) = (gamma.data(), beta.data());
    for i in 0..b {
        let row = h.row(i);
        let mean = row.iter().sum::<f64>() / f as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / f as f64;
        let inv = 1.0 / (var + LAYERNORM_EPS).sqrt();
        inv_std.push(inv);
        let xh = normalized.row_mut(i);
        for (x, &v) in xh.iter_mut().zip(row) {
            *x = (v - mean) * inv;
        }
        let xh = normalized.row(i).to_vec();
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            *o = g[j] * xh[j] + be[j];
        }
    }
    (
        out,
        LayerNormCache {
            normalized,
            inv_std,
        },
    )
}

/// Returns `(dL/dh, dL/dgamma, dL/dbeta)`.
pub fn layernorm_backward(cache: &LayerNormCache, gamma: &Grid, dy: &Grid) -> (Grid, Grid, Grid) {
    let (b, f) = (dy.rows(), dy.cols());
    let mut dgamma = vec![0.0; f];
    let mut dbeta = vec![0.0; f];
    let mut dh = Grid::zeros(&[b, f]);
    let g = gamma.data();
    let mut dxhat = vec![0.0; f];
    for i in 0..b {
        let dyr = dy.row(i);
        let xh = cache.normalized.row(i);
        let mut sum_d = 0.0;
        let mut sum_dx = 0.0;
        for j in 0..f {
            dgamma[j] += dyr[j] * xh[j];
            dbeta[j] += dyr[j];
            dxhat[j] = dyr[j] * g[j];
            sum_d += dxhat[j];
            sum_dx += dxhat[j] * xh[j];
        }
        let scale = cache.inv_std[i] / f as f64;
        let n = f as f64;
        for (j, o) in dh.row_mut(i).iter_mut().enumerate() {
            *o = scale * (n * dxhat[j] - sum_d - xh[j] * sum_dx);
        }
    }
    (
        dh,
        Grid::from_fn(&[f], |j| dgamma[j]),
        Grid::from_fn(&[f], |j| dbeta[j]),
    )
}
