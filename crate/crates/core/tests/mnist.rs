mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use refinery_core::data::{
    encode_idx_images, encode_idx_labels, load_idx, load_mnist, parse_idx_images, Split,
};
use refinery_core::harness::train_linear_ae;
use refinery_core::ndtensor::matmul_tn;
use refinery_core::nn::AdamWConfig;
use refinery_core::{Grid, RngStream};

#[test]
fn idx_files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let bytes: Vec<f64> = (0..3 * 4 * 5)
        .map(|i| ((i * 37) % 256) as f64 / 255.0)
        .collect();
    let images = Grid::new(vec![3, 4, 5], bytes).unwrap();
    let (ip, lp) = (dir.path().join("img"), dir.path().join("lbl"));
    std::fs::write(&ip, encode_idx_images(&images).unwrap()).unwrap();
    std::fs::write(&lp, encode_idx_labels(&[7, 0, 9])).unwrap();
    let ds = load_idx(&ip, &lp, Split::Test).unwrap();
    assert_eq!(ds.images, images);
    assert_eq!(ds.labels, vec![7, 0, 9]);
    assert_eq!(
        encode_idx_images(&ds.images).unwrap(),
        std::fs::read(&ip).unwrap()
    );
}

#[test]
fn canonical_mnist_loads() {
    let Some(dir) = common::mnist_dir() else {
        eprintln!("MNIST not found; skipping");
        return;
    };
    let train = load_mnist(&dir, Split::Train).unwrap();
    let test = load_mnist(&dir, Split::Test).unwrap();
    assert_eq!((train.len(), test.len()), (60000, 10000));
    assert_eq!(train.image_dims(), (28, 28));
    assert_eq!(&train.labels[..10], &[5, 0, 4, 1, 9, 2, 1, 3, 1, 4]);
    assert_eq!(&test.labels[..5], &[7, 2, 1, 0, 4]);
    let d = train.images.data();
    assert!(d.iter().all(|v| (0.0..=1.0).contains(v)));
    // Every value is an exact k/255.
    assert!(d
        .iter()
        .take(50_000)
        .all(|v| ((v * 255.0).round() / 255.0) == *v));
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    assert!((mean - 0.1307).abs() < 1e-3, "{mean}");
    let raw = std::fs::read(dir.join("t10k-images-idx3-ubyte"));
    if let Ok(raw) = raw {
        assert_eq!(encode_idx_images(&test.images).unwrap(), raw);
        assert_eq!(parse_idx_images(&raw).unwrap(), test.images);
    }
}

/// Squared reconstruction error per pixel of the best rank-`k` affine
/// projection fitted on `train` (PCA), measured on `test`.
fn pca_mse(train: &Grid, test: &Grid, k: usize) -> f64 {
    let (n, d) = (train.rows(), train.cols());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(train.row(i)) {
            *m += v / n as f64;
        }
    }
    let centre = |g: &Grid| {
        let mut c = g.clone();
        for i in 0..c.rows() {
            for (v, m) in c.row_mut(i).iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        c
    };
    let (xc, tc) = (centre(train), centre(test));
    let cov = matmul_tn(&xc, &xc).unwrap();
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, cov.data()));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let basis = DMatrix::from_fn(d, k, |r, c| eig.eigenvectors[(r, order[c])]);
    let t = DMatrix::from_row_slice(tc.rows(), d, tc.data());
    let recon = &t * &basis * basis.transpose();
    (t - recon).norm_squared() / (tc.rows() * d) as f64
}

#[test]
fn linear_autoencoder_approaches_the_pca_bound() {
    let Some(dir) = common::mnist_dir() else {
        eprintln!("MNIST not found; skipping");
        return;
    };
    let train = load_mnist(&dir, Split::Train).unwrap().flat_images();
    let test = load_mnist(&dir, Split::Test).unwrap().flat_images();
    let oracle = pca_mse(&train, &test, 64);
    let (ae, trace) = train_linear_ae(
        &train,
        64,
        20,
        256,
        AdamWConfig::default(),
        &mut RngStream::new(0, 1),
        &mut RngStream::new(0, 2),
    )
    .unwrap();
    let recon = ae.reconstruct(&test).unwrap();
    let mse = recon.sub(&test).unwrap().sum_squares() / test.len() as f64;
    eprintln!("AE test MSE {mse:.5}, PCA-64 test MSE {oracle:.5}, train trace {trace:?}");
    assert!(mse < 0.015, "{mse}");
    assert!(
        mse >= oracle * 0.99,
        "AE {mse} beats the rank-64 optimum {oracle}"
    );
}
