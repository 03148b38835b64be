//! Codebooks: k-means fitting, nearest-entry assignment, the two
//! non-reconstruction VQ loss terms, and fixed 8-bit code words with
//! nearest-Hamming decoding.

use crate::error::{Error, ParseError, Result};
use crate::ndtensor::{Grid, RngStream};

pub const KMEANS_MAX_ITERS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    /// `[V × d]`
    pub entries: Grid,
    /// One distinct byte per entry when present.
    pub bit_codes: Option<Vec<u8>>,
}

impl Codebook {
    pub fn new(entries: Grid) -> Result<Self> {
        if entries.ndim() != 2 || entries.rows() == 0 || entries.cols() == 0 {
            return Err(Error::input(format!(
                "codebook entries must be a non-empty [V × d] grid, got {:?}",
                entries.shape()
            )));
        }
        if !entries.all_finite() {
            return Err(Error::input("codebook entries must be finite"));
        }
        Ok(Self {
            entries,
            bit_codes: None,
        })
    }

    pub fn size(&self) -> usize {
        self.entries.rows()
    }

    pub fn dim(&self) -> usize {
        self.entries.cols()
    }

    pub fn entry(&self, i: usize) -> &[f64] {
        self.entries.row(i)
    }

    /// Index of the nearest entry and its squared distance; ties go to the
    /// lowest index.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for j in 0..self.size() {
            let d = sq_dist(x, self.entry(j));
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }

    /// Flat little-endian encoding: `V: u32`, `d: u32`, `V·d` `f64`s, then
    /// `V` code bytes when bit codes are present.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.entries.len() * 8 + self.size());
        out.extend_from_slice(&(self.size() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for v in self.entries.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(codes) = &self.bit_codes {
            out.extend_from_slice(codes);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = take(bytes, 0, 8)?;
        let v = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        if v == 0 || d == 0 {
            return Err(ParseError::DimMismatch {
                offset: 0,
                detail: format!("codebook declares V={v}, d={d}"),
            }
            .into());
        }
        let body = take(bytes, 8, v * d * 8)?;
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let rest = &bytes[8 + v * d * 8..];
        let bit_codes = match rest.len() {
            0 => None,
            n if n == v => Some(rest.to_vec()),
            n => {
                return Err(ParseError::Malformed {
                    offset: 8 + v * d * 8,
                    detail: format!("{n} trailing bytes; expected 0 or {v} code bytes"),
                }
                .into())
            }
        };
        let mut cb = Codebook::new(Grid::new(vec![v, d], data)?)?;
        if let Some(codes) = bit_codes {
            cb = cb.with_bit_codes(codes)?;
        }
        Ok(cb)
    }

    pub fn with_bit_codes(mut self, codes: Vec<u8>) -> Result<Self> {
        if codes.len() != self.size() {
            return Err(Error::input(format!(
                "{} bit codes for {} entries",
                codes.len(),
                self.size()
            )));
        }
        let mut seen = [false; 256];
        for &c in &codes {
            if std::mem::replace(&mut seen[c as usize], true) {
                return Err(Error::input(format!("duplicate bit code {c:#04x}")));
            }
        }
        self.bit_codes = Some(codes);
        Ok(self)
    }
}

fn take(bytes: &[u8], offset: usize, len: usize) -> Result<&[u8], ParseError> {
    bytes
        .get(offset..offset + len)
        .ok_or(ParseError::Truncated {
            offset,
            needed: len,
            available: bytes.len().saturating_sub(offset),
        })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Per-iteration record of a k-means run.
#[derive(Clone, Debug)]
pub struct KMeansTrace {
    /// SSE after each assignment step.
    pub sse: Vec<f64>,
    pub assignments: Vec<usize>,
    pub converged: bool,
}

pub fn kmeans_fit(points: &Grid, k: usize, rng: &mut RngStream) -> Result<Codebook> {
    kmeans_fit_traced(points, k, rng).map(|(cb, _)| cb)
}

/// Lloyd's algorithm with k-means++ seeding. Stops at an assignment fixpoint
/// or after [`KMEANS_MAX_ITERS`] iterations; empty clusters are reseeded with
/// the point farthest from its current centroid.
pub fn kmeans_fit_traced(
    points: &Grid,
    k: usize,
    rng: &mut RngStream,
) -> Result<(Codebook, KMeansTrace)> {
    let (n, d) = (points.rows(), points.cols());
    if k == 0 || n < k {
        return Err(Error::input(format!(
            "k-means needs N ≥ k ≥ 1, got N={n}, k={k}"
        )));
    }
    let mut centroids = plus_plus_init(points, k, rng);
    let mut assignments = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    let mut sse_trace = Vec::new();
    let mut converged = false;
    for _ in 0..KMEANS_MAX_ITERS {
        let cb = Codebook {
            entries: centroids.clone(),
            bit_codes: None,
        };
        let mut changed = false;
        let mut sse = 0.0;
        for i in 0..n {
            let (j, dist) = cb.nearest(points.row(i));
            if assignments[i] != j {
                assignments[i] = j;
                changed = true;
            }
            dists[i] = dist;
            sse += dist;
        }
        sse_trace.push(sse);
        if !changed {
            converged = true;
            break;
        }
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let j = assignments[i];
            counts[j] += 1;
            for (s, x) in sums[j * d..(j + 1) * d].iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for j in 0..k {
            let row = centroids.row_mut(j);
            if counts[j] > 0 {
                for (c, s) in row.iter_mut().zip(&sums[j * d..(j + 1) * d]) {
                    *c = s / counts[j] as f64;
                }
            } else {
                let far = (0..n)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("n ≥ k ≥ 1");
                row.copy_from_slice(points.row(far));
                dists[far] = 0.0;
            }
        }
    }
    let trace = KMeansTrace {
        sse: sse_trace,
        assignments,
        converged,
    };
    Ok((Codebook::new(centroids)?, trace))
}

fn plus_plus_init(points: &Grid, k: usize, rng: &mut RngStream) -> Grid {
    let (n, d) = (points.rows(), points.cols());
    let mut centroids = Grid::zeros(&[k, d]);
    let first = rng.below(n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut best: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            rng.categorical(&best)
        } else {
            // Every point coincides with a chosen centroid.
            rng.below(n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    centroids
}

/// Nearest-entry index per row of `x[N × d]`.
pub fn assign(cb: &Codebook, x: &Grid) -> Result<Vec<usize>> {
    if x.cols() != cb.dim() {
        return Err(Error::dim(
            "assign",
            format!(
                "vectors of width {} against codebook dim {}",
                x.cols(),
                cb.dim()
            ),
        ));
    }
    Ok((0..x.rows()).map(|i| cb.nearest(x.row(i)).0).collect())
}

pub fn dequantize(cb: &Codebook, indices: &[usize]) -> Result<Grid> {
    let v = cb.size();
    let mut data = Vec::with_capacity(indices.len() * cb.dim());
    for &i in indices {
        if i >= v {
            return Err(Error::input(format!("code index {i} outside [0, {v})")));
        }
        data.extend_from_slice(cb.entry(i));
    }
    Grid::new(vec![indices.len(), cb.dim()], data)
}

#[derive(Clone, Debug)]
pub struct VqLoss {
    /// `codebook_term + beta · commitment_term`
    pub loss: f64,
    /// `mean ‖sg[z_e] − e‖²`
    pub codebook_term: f64,
    /// `mean ‖z_e − sg[e]‖²` (before scaling by beta)
    pub commitment_term: f64,
    /// Gradient w.r.t. `z_e`; flows from the commitment term only.
    pub grad_z_e: Grid,
    /// Gradient w.r.t. the codebook entries; flows from the codebook term only.
    pub grad_entries: Grid,
    pub assignments: Vec<usize>,
}

/// Codebook and commitment terms of the VQ objective, averaged over `N·d`.
/// The reconstruction term is left to the caller.
pub fn vq_loss(z_e: &Grid, cb: &Codebook, beta: f64) -> Result<VqLoss> {
    if beta < 0.0 {
        return Err(Error::input(format!("beta must be ≥ 0, got {beta}")));
    }
    let assignments = assign(cb, z_e)?;
    let (n, d) = (z_e.rows(), z_e.cols());
    let scale = 1.0 / (n * d) as f64;
    let mut sq = 0.0;
    let mut grad_z_e = Grid::zeros(&[n, d]);
    let mut grad_entries = Grid::zeros(cb.entries.shape());
    for (i, &j) in assignments.iter().enumerate() {
        let z = z_e.row(i);
        let e = cb.entry(j);
        sq += sq_dist(z, e);
        for t in 0..d {
            let diff = z[t] - e[t];
            grad_z_e.row_mut(i)[t] = 2.0 * beta * diff * scale;
            grad_entries.row_mut(j)[t] -= 2.0 * diff * scale;
        }
    }
    let term = sq * scale;
    Ok(VqLoss {
        loss: term + beta * term,
        codebook_term: term,
        commitment_term: term,
        grad_z_e,
        grad_entries,
        assignments,
    })
}

/// Attaches `V` distinct bytes drawn uniformly without replacement.
pub fn assign_bit_codes(cb: &Codebook, rng: &mut RngStream) -> Result<Codebook> {
    let v = cb.size();
    if v > 256 {
        return Err(Error::input(format!(
            "{v} entries cannot get distinct 8-bit codes"
        )));
    }
    let mut pool: Vec<u8> = (0..=255).collect();
    for i in 0..v {
        let j = i + rng.below(256 - i);
        pool.swap(i, j);
    }
    cb.clone().with_bit_codes(pool[..v].to_vec())
}

/// Bits of a byte as `0.0 / 1.0`, least-significant bit first.
pub fn byte_to_bits(b: u8) -> [f64; 8] {
    std::array::from_fn(|j| ((b >> j) & 1) as f64)
}

/// Thresholds each row's probabilities at 0.5 (strictly above means 1) and
/// returns the entry whose code is nearest in Hamming distance, lowest index
/// on ties.
pub fn decode_bits(cb: &Codebook, bit_probs: &Grid) -> Result<Vec<usize>> {
    let codes = cb
        .bit_codes
        .as_ref()
        .ok_or_else(|| Error::State("codebook has no bit codes".into()))?;
    if bit_probs.cols() != 8 {
        return Err(Error::dim(
            "decode_bits",
            format!(
                "expected 8 bit probabilities per row, got {}",
                bit_probs.cols()
            ),
        ));
    }
    Ok((0..bit_probs.rows())
        .map(|i| {
            let byte = bit_probs
                .row(i)
                .iter()
                .enumerate()
                .fold(0u8, |acc, (j, &p)| acc | (((p > 0.5) as u8) << j));
            nearest_code(codes, byte)
        })
        .collect())
}

pub fn nearest_code(codes: &[u8], byte: u8) -> usize {
    let mut best = (0, u32::MAX);
    for (j, &c) in codes.iter().enumerate() {
        let h = (c ^ byte).count_ones();
        if h < best.1 {
            best = (j, h);
        }
    }
    best.0
}
