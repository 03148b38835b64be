//! Gaussian / Laplacian pyramids built from a fixed separable
//! `[1, 4, 6, 4, 1] / 16` binomial filter.
//!
//! Images are `[H, W]` or channel-last `[H, W, C]` grids. Borders use
//! reflect-101 (mirror without repeating the edge sample), under which every
//! operator maps a constant image to the same constant, borders included.

use crate::error::{Error, Result};
use crate::ndtensor::Grid;

pub const ANALYSIS_KERNEL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
/// Twice the analysis kernel; compensates the zero-stuffed samples on upsampling.
pub const SYNTHESIS_KERNEL: [f64; 5] =
    [2.0 / 16.0, 8.0 / 16.0, 12.0 / 16.0, 8.0 / 16.0, 2.0 / 16.0];

/// Reflect-101 index folding for any integer offset.
pub fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Dims {
    h: usize,
    w: usize,
    c: usize,
}

fn dims_of(img: &Grid) -> Result<Dims> {
    match *img.shape() {
        [h, w] if h > 0 && w > 0 => Ok(Dims { h, w, c: 1 }),
        [h, w, c] if h > 0 && w > 0 && c > 0 => Ok(Dims { h, w, c }),
        _ => Err(Error::input(format!(
            "expected a non-empty [H, W] or [H, W, C] image, got shape {:?}",
            img.shape()
        ))),
    }
}

fn with_dims(template: &Grid, d: Dims, data: Vec<f64>) -> Grid {
    let shape = if template.ndim() == 2 {
        vec![d.h, d.w]
    } else {
        vec![d.h, d.w, d.c]
    };
    Grid::new(shape, data).expect("dims consistent with data")
}

/// Reflect-101 source index of every `(position, tap)` pair along an axis.
fn tap_table(n: usize) -> Vec<usize> {
    (0..n)
        .flat_map(|i| (0..5).map(move |t| reflect101(i as isize + t as isize - 2, n)))
        .collect()
}

fn convolve_separable(data: &[f64], d: Dims, kx: &[f64; 5], ky: &[f64; 5]) -> Vec<f64> {
    let Dims { h, w, c } = d;
    let (xt, yt) = (tap_table(w), tap_table(h));
    let mut tmp = vec![0.0; data.len()];
    for y in 0..h {
        let row = y * w;
        for x in 0..w {
            let dst = (row + x) * c;
            for (t, &k) in kx.iter().enumerate() {
                let src = (row + xt[5 * x + t]) * c;
                for ch in 0..c {
                    tmp[dst + ch] += k * data[src + ch];
                }
            }
        }
    }
    let stride = w * c;
    let mut out = vec![0.0; data.len()];
    for y in 0..h {
        let dst_row = &mut out[y * stride..(y + 1) * stride];
        for (t, &k) in ky.iter().enumerate() {
            let src_row = &tmp[yt[5 * y + t] * stride..][..stride];
            for (o, v) in dst_row.iter_mut().zip(src_row) {
                *o += k * v;
            }
        }
    }
    out
}

/// Separable `[1,4,6,4,1]/16` blur, horizontal then vertical, per channel.
pub fn blur(img: &Grid) -> Result<Grid> {
    let d = dims_of(img)?;
    Ok(with_dims(
        img,
        d,
        convolve_separable(img.data(), d, &ANALYSIS_KERNEL, &ANALYSIS_KERNEL),
    ))
}

/// Reflect-101 sources of the `(output, tap)` pairs of `down` along an
/// axis: only even positions are ever kept, so only those are blurred.
fn even_taps(n: usize) -> Vec<usize> {
    (0..n.div_ceil(2))
        .flat_map(|o| (0..5).map(move |t| reflect101((2 * o + t) as isize - 2, n)))
        .collect()
}

/// Nonzero taps of the zero-stuffed signal along an axis of target length
/// `n`: `(kernel weight, source index)` per output position. Zero samples
/// contribute exact zeros, so skipping them leaves every sum unchanged.
fn stuffed_taps(n: usize, k: &[f64; 5]) -> Vec<Vec<(f64, usize)>> {
    (0..n)
        .map(|x| {
            (0..5)
                .filter_map(|t| {
                    let s = reflect101((x + t) as isize - 2, n);
                    (s % 2 == 0).then_some((k[t], s / 2))
                })
                .collect()
        })
        .collect()
}

struct DownPlan {
    d: Dims,
    od: Dims,
    xt: Vec<usize>,
    yt: Vec<usize>,
}

impl DownPlan {
    fn new(d: Dims) -> Self {
        let od = Dims {
            h: d.h.div_ceil(2),
            w: d.w.div_ceil(2),
            c: d.c,
        };
        Self {
            d,
            od,
            xt: even_taps(d.w),
            yt: even_taps(d.h),
        }
    }

    fn apply(&self, src: &[f64], tmp: &mut [f64], out: &mut [f64]) {
        let (Dims { h, w, c }, ow) = (self.d, self.od.w);
        let k = &ANALYSIS_KERNEL;
        for y in 0..h {
            for ox in 0..ow {
                let dst = (y * ow + ox) * c;
                for ch in 0..c {
                    let mut acc = 0.0;
                    for t in 0..5 {
                        acc += k[t] * src[(y * w + self.xt[5 * ox + t]) * c + ch];
                    }
                    tmp[dst + ch] = acc;
                }
            }
        }
        let stride = ow * c;
        for oy in 0..self.od.h {
            let row = &mut out[oy * stride..(oy + 1) * stride];
            row.fill(0.0);
            for t in 0..5 {
                let s = &tmp[self.yt[5 * oy + t] * stride..][..stride];
                for (o, v) in row.iter_mut().zip(s) {
                    *o += k[t] * v;
                }
            }
        }
    }
}

struct UpPlan {
    d: Dims,
    od: Dims,
    xt: Vec<Vec<(f64, usize)>>,
    yt: Vec<Vec<(f64, usize)>>,
}

impl UpPlan {
    fn new(d: Dims, target: (usize, usize)) -> Result<Self> {
        let (th, tw) = target;
        let valid = |t: usize, n: usize| t == 2 * n || t + 1 == 2 * n;
        if !valid(th, d.h) || !valid(tw, d.w) {
            return Err(Error::input(format!(
                "cannot upsample {}×{} to {th}×{tw}; target must be 2n−1 or 2n per axis",
                d.h, d.w
            )));
        }
        // A length-1 axis holds no stuffed zeros, so it keeps unit gain.
        let gain = |t: usize| {
            if t == 1 {
                &ANALYSIS_KERNEL
            } else {
                &SYNTHESIS_KERNEL
            }
        };
        Ok(Self {
            d,
            od: Dims {
                h: th,
                w: tw,
                c: d.c,
            },
            xt: stuffed_taps(tw, gain(tw)),
            yt: stuffed_taps(th, gain(th)),
        })
    }

    fn apply(&self, src: &[f64], tmp: &mut [f64], out: &mut [f64]) {
        let (Dims { h, w, c }, tw) = (self.d, self.od.w);
        for y in 0..h {
            for (x, taps) in self.xt.iter().enumerate() {
                let dst = (y * tw + x) * c;
                for ch in 0..c {
                    let mut acc = 0.0;
                    for &(k, s) in taps {
                        acc += k * src[(y * w + s) * c + ch];
                    }
                    tmp[dst + ch] = acc;
                }
            }
        }
        let stride = tw * c;
        for (y, taps) in self.yt.iter().enumerate() {
            let row = &mut out[y * stride..(y + 1) * stride];
            row.fill(0.0);
            for &(k, s) in taps {
                for (o, v) in row.iter_mut().zip(&tmp[s * stride..][..stride]) {
                    *o += k * v;
                }
            }
        }
    }
}

/// Blur then keep even rows and columns; output is `ceil(H/2) × ceil(W/2)`.
pub fn down(img: &Grid) -> Result<Grid> {
    let plan = DownPlan::new(dims_of(img)?);
    let mut tmp = vec![0.0; plan.d.h * plan.od.w * plan.d.c];
    let mut out = vec![0.0; plan.od.h * plan.od.w * plan.od.c];
    plan.apply(img.data(), &mut tmp, &mut out);
    Ok(with_dims(img, plan.od, out))
}

/// Zero-stuff to `target` (samples at even indices) and blur with the
/// gain-2 synthesis kernel. `target` must be `2h−1` or `2h` on each axis.
pub fn up(img: &Grid, target: (usize, usize)) -> Result<Grid> {
    let plan = UpPlan::new(dims_of(img)?, target)?;
    let mut tmp = vec![0.0; plan.d.h * plan.od.w * plan.d.c];
    let mut out = vec![0.0; plan.od.h * plan.od.w * plan.od.c];
    plan.apply(img.data(), &mut tmp, &mut out);
    Ok(with_dims(img, plan.od, out))
}

fn batch_dims(batch: &Grid, h: usize, w: usize) -> Result<Dims> {
    if batch.ndim() != 2 || batch.cols() != h * w || h == 0 || w == 0 {
        return Err(Error::dim(
            "pyramid_batch",
            format!("rows of {:?} are not {h}×{w} images", batch.shape()),
        ));
    }
    Ok(Dims { h, w, c: 1 })
}

/// `down` applied to every row of `[N × H·W]` single-channel images.
pub fn down_batch(batch: &Grid, h: usize, w: usize) -> Result<Grid> {
    let plan = DownPlan::new(batch_dims(batch, h, w)?);
    let per = plan.od.h * plan.od.w;
    let mut tmp = vec![0.0; h * plan.od.w];
    let mut out = vec![0.0; batch.rows() * per];
    for (i, dst) in out.chunks_mut(per).enumerate() {
        plan.apply(batch.row(i), &mut tmp, dst);
    }
    Grid::new(vec![batch.rows(), per], out)
}

/// `up` applied to every row of `[N × H·W]` single-channel images.
pub fn up_batch(batch: &Grid, h: usize, w: usize, target: (usize, usize)) -> Result<Grid> {
    let plan = UpPlan::new(batch_dims(batch, h, w)?, target)?;
    let per = target.0 * target.1;
    let mut tmp = vec![0.0; h * target.1];
    let mut out = vec![0.0; batch.rows() * per];
    for (i, dst) in out.chunks_mut(per).enumerate() {
        plan.apply(batch.row(i), &mut tmp, dst);
    }
    Grid::new(vec![batch.rows(), per], out)
}

/// Spatial `(H, W)` of an image grid.
pub fn spatial_dims(img: &Grid) -> Result<(usize, usize)> {
    dims_of(img).map(|d| (d.h, d.w))
}

/// Number of levels a `h × w` image supports: each level above the base
/// must have both sides ≥ 2.
pub fn max_levels(h: usize, w: usize) -> usize {
    let (mut h, mut w, mut s) = (h, w, 0);
    while h >= 2 && w >= 2 {
        h = h.div_ceil(2);
        w = w.div_ceil(2);
        s += 1;
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid {
    /// `G_0..G_S`, finest first.
    pub gaussians: Vec<Grid>,
    /// `L_0..L_{S−1}`, finest first.
    pub laplacians: Vec<Grid>,
}

impl Pyramid {
    pub fn levels(&self) -> usize {
        self.laplacians.len()
    }

    /// The coarsest Gaussian level `G_S`.
    pub fn base(&self) -> &Grid {
        self.gaussians.last().expect("pyramid has a base")
    }

    /// Builds an `S`-level pyramid: `G_{k+1} = down(G_k)` and
    /// `L_k = G_k − up(G_{k+1})`.
    pub fn build(img: &Grid, levels: usize) -> Result<Self> {
        let (h, w) = spatial_dims(img)?;
        if levels == 0 {
            return Err(Error::input("pyramid needs at least one level"));
        }
        let max = max_levels(h, w);
        if levels > max {
            return Err(Error::input(format!(
                "{levels} levels requested but a {h}×{w} image supports at most {max}"
            )));
        }
        let mut gaussians = vec![img.clone()];
        let mut laplacians = Vec::with_capacity(levels);
        for k in 0..levels {
            let g = &gaussians[k];
            let next = down(g)?;
            let band = g.sub(&up(&next, spatial_dims(g)?)?)?;
            laplacians.push(band);
            gaussians.push(next);
        }
        Ok(Self {
            gaussians,
            laplacians,
        })
    }

    /// Upsample-and-add from the base: `Ĝ_k = L_k + up(Ĝ_{k+1})`.
    pub fn reconstruct(&self) -> Result<Grid> {
        collapse(&self.laplacians, self.base())
    }
}

/// Collapses bands onto a base, finest band first in `laplacians`.
pub fn collapse(laplacians: &[Grid], base: &Grid) -> Result<Grid> {
    let mut current = base.clone();
    for band in laplacians.iter().rev() {
        let target = spatial_dims(band)?;
        let lifted = up(&current, target)
            .map_err(|e| Error::Contract(format!("pyramid levels do not chain: {e}")))?;
        current = band
            .add(&lifted)
            .map_err(|e| Error::Contract(format!("pyramid band mismatch: {e}")))?;
    }
    Ok(current)
}

/// Applies an image operator to every row of a `[N × (h·w·c)]` batch,
/// returning a `[N × out]` batch.
pub fn map_rows(
    batch: &Grid,
    image_shape: &[usize],
    f: impl Fn(&Grid) -> Result<Grid>,
) -> Result<Grid> {
    let per: usize = image_shape.iter().product();
    if batch.cols() != per {
        return Err(Error::dim(
            "map_rows",
            format!(
                "rows hold {} values, image shape {image_shape:?}",
                batch.cols()
            ),
        ));
    }
    let mut out = Vec::new();
    let mut out_cols = 0;
    for i in 0..batch.rows() {
        let img = Grid::new(image_shape.to_vec(), batch.row(i).to_vec())?;
        let r = f(&img)?;
        out_cols = r.len();
        out.extend(r.into_data());
    }
    Grid::new(vec![batch.rows(), out_cols], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndtensor::RngStream;

    #[test]
    fn reflect_folds() {
        assert_eq!(reflect101(-1, 5), 1);
        assert_eq!(reflect101(-2, 5), 2);
        assert_eq!(reflect101(5, 5), 3);
        assert_eq!(reflect101(6, 5), 2);
        assert_eq!(reflect101(-1, 2), 1);
        assert_eq!(reflect101(2, 2), 0);
        assert_eq!(reflect101(-2, 1), 0);
    }

    #[test]
    fn blur_preserves_constants() {
        let g = Grid::full(&[6, 5, 2], 0.7);
        assert!(blur(&g).unwrap().sub(&g).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn impulse_gives_outer_product() {
        let mut g = Grid::zeros(&[7, 7]);
        g.set(&[3, 3], 1.0);
        let b = blur(&g).unwrap();
        for y in 0..7 {
            for x in 0..7 {
                let want = if (1..=5).contains(&y) && (1..=5).contains(&x) {
                    ANALYSIS_KERNEL[y - 1] * ANALYSIS_KERNEL[x - 1]
                } else {
                    0.0
                };
                assert!((b.get(&[y, x]) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn blur_twice_equals_self_convolved_kernel_on_interior() {
        let img = RngStream::new(1, 0).randn(&[16, 16]);
        let twice = blur(&blur(&img).unwrap()).unwrap();
        let mut k9 = [0.0; 9];
        for (i, a) in ANALYSIS_KERNEL.iter().enumerate() {
            for (j, b) in ANALYSIS_KERNEL.iter().enumerate() {
                k9[i + j] += a * b;
            }
        }
        for y in 4..12 {
            for x in 4..12 {
                let mut s = 0.0;
                for (dy, ky) in k9.iter().enumerate() {
                    for (dx, kx) in k9.iter().enumerate() {
                        s += ky * kx * img.get(&[y + dy - 4, x + dx - 4]);
                    }
                }
                assert!((s - twice.get(&[y, x])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn down_shapes_and_constants() {
        assert_eq!(down(&Grid::zeros(&[28, 28])).unwrap().shape(), &[14, 14]);
        assert_eq!(down(&Grid::zeros(&[7, 7, 3])).unwrap().shape(), &[4, 4, 3]);
        let c = down(&Grid::full(&[9, 6], 2.0)).unwrap();
        assert!(c.data().iter().all(|&v| (v - 2.0).abs() < 1e-15));
    }

    #[test]
    fn down_is_blur_then_even_samples() {
        let img = RngStream::new(2, 0).randn(&[9, 8]);
        let b = blur(&img).unwrap();
        let d = down(&img).unwrap();
        for y in 0..5 {
            for x in 0..4 {
                assert_eq!(d.get(&[y, x]), b.get(&[2 * y, 2 * x]));
            }
        }
    }

    #[test]
    fn up_restores_dc_and_shape() {
        for (h, w) in [(4, 4), (7, 5), (1, 3)] {
            let g = Grid::full(&[h, w], 1.5);
            for th in [2 * h - 1, 2 * h] {
                for tw in [2 * w - 1, 2 * w] {
                    let u = up(&g, (th, tw)).unwrap();
                    assert_eq!(u.shape(), &[th, tw]);
                    assert!(u.data().iter().all(|&v| (v - 1.5).abs() < 1e-9));
                }
            }
        }
        let x = Grid::zeros(&[7, 7]);
        assert_eq!(up(&down(&x).unwrap(), (7, 7)).unwrap().shape(), x.shape());
        assert!(matches!(
            up(&Grid::zeros(&[3, 3]), (8, 6)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn up_is_zero_stuff_then_synthesis_blur() {
        let img = RngStream::new(3, 0).randn(&[4, 3]);
        let u = up(&img, (7, 6)).unwrap();
        let mut stuffed = Grid::zeros(&[7, 6]);
        for y in 0..4 {
            for x in 0..3 {
                stuffed.set(&[2 * y, 2 * x], 4.0 * img.get(&[y, x]));
            }
        }
        let want = blur(&stuffed).unwrap();
        for (a, b) in u.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn batched_resampling_matches_per_image() {
        let mut rng = RngStream::new(9, 0);
        let batch = rng.randn(&[5, 7 * 6]);
        let d = down_batch(&batch, 7, 6).unwrap();
        let u = up_batch(&d, 4, 3, (7, 6)).unwrap();
        assert_eq!(d.shape(), &[5, 12]);
        for i in 0..5 {
            let img = Grid::new(vec![7, 6], batch.row(i).to_vec()).unwrap();
            let di = down(&img).unwrap();
            assert_eq!(d.row(i), di.data());
            assert_eq!(u.row(i), up(&di, (7, 6)).unwrap().data());
        }
        assert!(down_batch(&batch, 6, 6).is_err());
        assert!(up_batch(&d, 4, 3, (9, 6)).is_err());
    }

    #[test]
    fn mnist_sized_levels() {
        let p = Pyramid::build(&Grid::zeros(&[28, 28]), 2).unwrap();
        let dims: Vec<_> = p.gaussians.iter().map(|g| g.shape().to_vec()).collect();
        assert_eq!(dims, vec![vec![28, 28], vec![14, 14], vec![7, 7]]);
        assert_eq!(p.laplacians[0].shape(), &[28, 28]);
        assert_eq!(p.laplacians[1].shape(), &[14, 14]);
    }

    #[test]
    fn constant_image_has_empty_bands() {
        let p = Pyramid::build(&Grid::full(&[28, 28], 0.3), 3).unwrap();
        assert!(p.laplacians.iter().all(|l| l.max_abs() < 1e-9));
    }

    #[test]
    fn too_deep_is_rejected() {
        assert_eq!(max_levels(28, 28), 5);
        assert!(Pyramid::build(&Grid::zeros(&[28, 28]), 6).is_err());
        assert!(Pyramid::build(&Grid::zeros(&[4, 4]), 0).is_err());
    }

    #[test]
    fn perfect_reconstruction() {
        let mut rng = RngStream::new(4, 0);
        for s in 1..=3 {
            for shape in [[28usize, 28, 1], [16, 12, 4], [9, 7, 2]] {
                let x = rng.randn(&shape);
                let p = Pyramid::build(&x, s).unwrap();
                let r = p.reconstruct().unwrap();
                assert!(r.sub(&x).unwrap().max_abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zeroed_bands_give_up_chain() {
        let x = RngStream::new(5, 0).randn(&[16, 16]);
        let mut p = Pyramid::build(&x, 2).unwrap();
        for l in &mut p.laplacians {
            *l = Grid::zeros(l.shape());
        }
        let want = up(&up(p.base(), (8, 8)).unwrap(), (16, 16)).unwrap();
        assert_eq!(p.reconstruct().unwrap(), want);
    }

    #[test]
    fn mismatched_bands_violate_contract() {
        let mut p = Pyramid::build(&Grid::zeros(&[8, 8]), 2).unwrap();
        p.laplacians[0] = Grid::zeros(&[3, 3]);
        assert!(matches!(p.reconstruct(), Err(Error::Contract(_))));
    }

    #[test]
    fn operators_are_linear() {
        let mut rng = RngStream::new(6, 0);
        let (x, y) = (rng.randn(&[11, 10]), rng.randn(&[11, 10]));
        let (a, b) = (0.7, -1.3);
        let mix = x.mul_scalar(a).add(&y.mul_scalar(b)).unwrap();
        let ops: [&dyn Fn(&Grid) -> Grid; 3] =
            [&|g| blur(g).unwrap(), &|g| down(g).unwrap(), &|g| {
                up(g, (22, 19)).unwrap()
            }];
        for f in ops {
            let lhs = f(&mix);
            let rhs = f(&x).mul_scalar(a).add(&f(&y).mul_scalar(b)).unwrap();
            assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-9);
        }
        let (px, py) = (
            Pyramid::build(&x, 2).unwrap(),
            Pyramid::build(&y, 2).unwrap(),
        );
        let combine = |u: &Grid, v: &Grid| u.mul_scalar(a).add(&v.mul_scalar(b)).unwrap();
        let mixed = Pyramid {
            gaussians: px
                .gaussians
                .iter()
                .zip(&py.gaussians)
                .map(|(u, v)| combine(u, v))
                .collect(),
            laplacians: px
                .laplacians
                .iter()
                .zip(&py.laplacians)
                .map(|(u, v)| combine(u, v))
                .collect(),
        };
        assert!(mixed.reconstruct().unwrap().sub(&mix).unwrap().max_abs() < 1e-9);
    }
}
