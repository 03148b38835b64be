#![allow(dead_code)]

use std::path::PathBuf;

/// MNIST directory from `$REFINERY_DATA_DIR`, else the workspace's
/// `data/mnist`, if it holds the training images.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("REFINERY_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    ["train-images-idx3-ubyte", "train-images-idx3-ubyte.gz"]
        .iter()
        .any(|f| dir.join(f).exists())
        .then_some(dir)
}
