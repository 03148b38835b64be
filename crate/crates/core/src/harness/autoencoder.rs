use super::config::hex_digest;
use crate::data::batch_indices;
use crate::error::{Error, Result};
use crate::ndtensor::{matmul, matmul_nt, matmul_tn, Grid, RngStream};
use crate::nn::{loss_mse, AdamW, AdamWConfig};

/// Affine encoder `x·W_e + b_e` and decoder `z·W_d + b_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearAutoencoder {
    pub enc_w: Grid,
    pub enc_b: Grid,
    pub dec_w: Grid,
    pub dec_b: Grid,
}

fn col_sums(g: &Grid) -> Grid {
    let mut out = Grid::zeros(&[g.cols()]);
    for i in 0..g.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(g.row(i)) {
            *o += v;
        }
    }
    out
}

fn add_bias(g: &mut Grid, b: &Grid) {
    for i in 0..g.rows() {
        for (v, bj) in g.row_mut(i).iter_mut().zip(b.data()) {
            *v += bj;
        }
    }
}

impl LinearAutoencoder {
    pub fn new(input: usize, latent: usize, rng: &mut RngStream) -> Self {
        Self {
            enc_w: rng
                .randn(&[input, latent])
                .mul_scalar((1.0 / input as f64).sqrt()),
            enc_b: Grid::zeros(&[latent]),
            dec_w: rng
                .randn(&[latent, input])
                .mul_scalar((1.0 / latent as f64).sqrt()),
            dec_b: Grid::zeros(&[input]),
        }
    }

    pub fn from_parts(enc_w: Grid, enc_b: Grid, dec_w: Grid, dec_b: Grid) -> Result<Self> {
        let (i, l) = (enc_w.rows(), enc_w.cols());
        let ok = enc_w.ndim() == 2
            && dec_w.shape() == [l, i]
            && enc_b.shape() == [l]
            && dec_b.shape() == [i];
        if !ok {
            return Err(Error::dim(
                "LinearAutoencoder",
                format!(
                    "inconsistent shapes {:?} {:?} {:?} {:?}",
                    enc_w.shape(),
                    enc_b.shape(),
                    dec_w.shape(),
                    dec_b.shape()
                ),
            ));
        }
        Ok(Self {
            enc_w,
            enc_b,
            dec_w,
            dec_b,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.enc_w.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.enc_w.cols()
    }

    pub fn params(&self) -> [&Grid; 4] {
        [&self.enc_w, &self.enc_b, &self.dec_w, &self.dec_b]
    }

    pub fn encode(&self, x: &Grid) -> Result<Grid> {
        let mut z = matmul(x, &self.enc_w)?;
        add_bias(&mut z, &self.enc_b);
        Ok(z)
    }

    pub fn decode(&self, z: &Grid) -> Result<Grid> {
        let mut x = matmul(z, &self.dec_w)?;
        add_bias(&mut x, &self.dec_b);
        Ok(x)
    }

    pub fn reconstruct(&self, x: &Grid) -> Result<Grid> {
        self.decode(&self.encode(x)?)
    }

    /// SHA-256 over the little-endian parameter bytes; used to prove the
    /// model stays frozen.
    pub fn fingerprint(&self) -> String {
        let bytes: Vec<u8> = self
            .params()
            .iter()
            .flat_map(|g| g.data().iter().flat_map(|v| v.to_le_bytes()))
            .collect();
        hex_digest(&bytes)
    }
}

/// Minibatch AdamW on `‖D(E(x)) − x‖²`; returns the model and its per-epoch
/// mean training loss.
pub fn train_linear_ae(
    x: &Grid,
    latent: usize,
    epochs: usize,
    batch: usize,
    opt: AdamWConfig,
    init: &mut RngStream,
    shuffle: &mut RngStream,
) -> Result<(LinearAutoencoder, Vec<f64>)> {
    let mut ae = LinearAutoencoder::new(x.cols(), latent, init);
    let mut adam = AdamW::new(opt, &ae.params());
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let (mut total, mut seen) = (0.0, 0usize);
        for idx in batch_indices(x.rows(), batch, shuffle)? {
            let xb = x.select_rows(&idx);
            let z = ae.encode(&xb)?;
            let y = ae.decode(&z)?;
            let (loss, dy) = loss_mse(&y, &xb)?;
            let d_dec_w = matmul_tn(&z, &dy)?;
            let d_dec_b = col_sums(&dy);
            let dz = matmul_nt(&dy, &ae.dec_w)?;
            let d_enc_w = matmul_tn(&xb, &dz)?;
            let d_enc_b = col_sums(&dz);
            let LinearAutoencoder {
                enc_w,
                enc_b,
                dec_w,
                dec_b,
            } = &mut ae;
            adam.update(
                &mut [enc_w, enc_b, dec_w, dec_b],
                &[&d_enc_w, &d_enc_b, &d_dec_w, &d_dec_b],
            )?;
            total += loss * idx.len() as f64;
            seen += idx.len();
        }
        trace.push(total / seen.max(1) as f64);
    }
    Ok((ae, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_is_affine() {
        let mut rng = RngStream::new(0, 0);
        let ae = LinearAutoencoder::new(12, 3, &mut rng);
        let x = rng.randn(&[1, 12]);
        let e0 = ae.encode(&Grid::zeros(&[1, 12])).unwrap();
        let a = 2.5;
        let lhs = ae.encode(&x.mul_scalar(a)).unwrap().sub(&e0).unwrap();
        let rhs = ae.encode(&x).unwrap().sub(&e0).unwrap().mul_scalar(a);
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn learns_a_low_rank_subspace() {
        let mut rng = RngStream::new(1, 0);
        let basis = rng.randn(&[3, 10]);
        let coeff = rng.randn(&[400, 3]);
        let x = matmul(&coeff, &basis).unwrap().mul_scalar(0.3);
        let opt = AdamWConfig {
            lr: 1e-2,
            ..Default::default()
        };
        let (ae, trace) =
            train_linear_ae(&x, 3, 60, 32, opt, &mut rng, &mut RngStream::new(1, 1)).unwrap();
        assert!(trace.last().unwrap() < &(trace[0] * 0.01), "{trace:?}");
        let err = ae.reconstruct(&x).unwrap().sub(&x).unwrap().sum_squares() / x.len() as f64;
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn fingerprint_tracks_parameters() {
        let mut rng = RngStream::new(2, 0);
        let mut ae = LinearAutoencoder::new(4, 2, &mut rng);
        let before = ae.fingerprint();
        assert_eq!(before, ae.clone().fingerprint());
        ae.dec_b.data_mut()[0] += 1e-12;
        assert_ne!(before, ae.fingerprint());
    }
}
