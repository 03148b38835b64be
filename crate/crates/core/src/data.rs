//! MNIST ingestion from IDX files, Gaussian corruption and shuffled batching.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, ParseError, Result};
use crate::ndtensor::{Grid, RngStream};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const DATA_DIR_ENV: &str = "REFINERY_DATA_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn file_prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    /// `[N × H × W]`, values in `[0, 1]`.
    pub images: Grid,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.images.shape()[1], self.images.shape()[2])
    }

    /// The first `n` examples (all of them if `n` is 0 or too large).
    pub fn head(&self, n: usize) -> Dataset {
        if n == 0 || n >= self.len() {
            return self.clone();
        }
        Dataset {
            images: self.images.slice_rows(0, n),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }

    /// Images as a `[N × H·W]` matrix.
    pub fn flat_images(&self) -> Grid {
        let n = self.len();
        let c = self.images.cols();
        self.images
            .clone()
            .reshape(&[n, c])
            .expect("same element count")
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32, ParseError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or(ParseError::Truncated {
            offset,
            needed: 4,
            available: bytes.len().saturating_sub(offset),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), ParseError> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(ParseError::BadMagic {
            offset: 0,
            expected,
            found,
        });
    }
    Ok(())
}

fn payload(bytes: &[u8], offset: usize, len: usize) -> Result<&[u8], ParseError> {
    if bytes.len() < offset + len {
        return Err(ParseError::Truncated {
            offset,
            needed: len,
            available: bytes.len() - offset.min(bytes.len()),
        });
    }
    if bytes.len() > offset + len {
        return Err(ParseError::DimMismatch {
            offset: offset + len,
            detail: format!(
                "{} bytes beyond the declared payload",
                bytes.len() - offset - len
            ),
        });
    }
    Ok(&bytes[offset..offset + len])
}

/// Decodes an unsigned-byte image file into `[N × rows × cols]`, scaling
/// bytes by `1/255`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Grid, ParseError> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    if rows == 0 || cols == 0 {
        return Err(ParseError::DimMismatch {
            offset: 8,
            detail: format!("image dims {rows}×{cols}"),
        });
    }
    let raw = payload(bytes, 16, n * rows * cols)?;
    let data = raw.iter().map(|&b| b as f64 / 255.0).collect();
    Ok(Grid::new(vec![n, rows, cols], data).expect("payload length checked"))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, ParseError> {
    check_magic(bytes, LABELS_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, n)?.to_vec())
}

/// Encodes `[N × rows × cols]` values in `[0, 1]` back into IDX bytes.
pub fn encode_idx_images(images: &Grid) -> Result<Vec<u8>> {
    let &[n, rows, cols] = images.shape() else {
        return Err(Error::dim(
            "encode_idx_images",
            format!("{:?}", images.shape()),
        ));
    };
    let mut out = Vec::with_capacity(16 + images.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(
        images
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Reads a file, gunzipping it if it starts with the gzip magic.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn load_idx(images: &Path, labels: &Path, split: Split) -> Result<Dataset> {
    let images = parse_idx_images(&read_maybe_gz(images)?)?;
    let labels = parse_idx_labels(&read_maybe_gz(labels)?)?;
    if labels.len() != images.rows() {
        return Err(ParseError::DimMismatch {
            offset: 4,
            detail: format!("{} images but {} labels", images.rows(), labels.len()),
        }
        .into());
    }
    Ok(Dataset {
        images,
        labels,
        split,
    })
}

fn find_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    for name in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(&name);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("{stem}[.gz] not found in {}", dir.display()),
    )))
}

/// Loads the canonical MNIST split from `dir` (plain or gzipped files).
pub fn load_mnist(dir: &Path, split: Split) -> Result<Dataset> {
    let p = split.file_prefix();
    let images = find_file(dir, &format!("{p}-images-idx3-ubyte"))?;
    let labels = find_file(dir, &format!("{p}-labels-idx1-ubyte"))?;
    load_idx(&images, &labels, split)
}

/// The explicit directory if given, else `$REFINERY_DATA_DIR`.
pub fn resolve_data_dir(explicit: Option<&Path>) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.to_path_buf());
    }
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .ok_or_else(|| {
            Error::input(format!(
                "no MNIST directory: pass --data-dir or set {DATA_DIR_ENV}"
            ))
        })
}

/// `x + sigma·ε` with `ε ~ N(0, I)`; not clamped.
pub fn add_noise(x: &Grid, sigma: f64, rng: &mut RngStream) -> Result<Grid> {
    if !(sigma >= 0.0) {
        return Err(Error::input(format!(
            "noise sigma must be ≥ 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let src = x.data();
    Ok(Grid::from_fn(x.shape(), |i| src[i] + sigma * rng.normal()))
}

/// Shuffled index batches for one epoch; the last partial batch is kept.
pub fn batch_indices(n: usize, batch_size: usize, rng: &mut RngStream) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::input("batch size must be ≥ 1"));
    }
    let order = rng.permutation(n);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Mini-batches of `rows` for one epoch, shuffled by `rng`.
pub fn batches<'a>(
    rows: &'a Grid,
    batch_size: usize,
    rng: &mut RngStream,
) -> Result<impl Iterator<Item = Grid> + 'a> {
    let idx = batch_indices(rows.rows(), batch_size, rng)?;
    Ok(idx.into_iter().map(move |b| rows.select_rows(&b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGES_MAGIC, 2, 2, 2] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(&[0, 255, 51, 102, 1, 2, 3, 4]);
        b
    }

    #[test]
    fn parses_fixture_bytes() {
        let g = parse_idx_images(&fixture()).unwrap();
        assert_eq!(g.shape(), &[2, 2, 2]);
        assert_eq!(g.data()[0], 0.0);
        assert_eq!(g.data()[1], 1.0);
        assert_eq!(g.data()[2], 0.2);
        assert_eq!(g.data()[3], 0.4);
    }

    #[test]
    fn truncated_fixture_is_an_error() {
        let b = fixture();
        assert_eq!(
            parse_idx_images(&b[..20]),
            Err(ParseError::Truncated {
                offset: 16,
                needed: 8,
                available: 4
            })
        );
        assert!(matches!(
            parse_idx_images(&b[..10]),
            Err(ParseError::Truncated { offset: 8, .. })
        ));
    }

    #[test]
    fn bad_magic_names_offset() {
        let mut b = fixture();
        b[3] = 0x01;
        assert_eq!(
            parse_idx_images(&b),
            Err(ParseError::BadMagic {
                offset: 0,
                expected: IMAGES_MAGIC,
                found: LABELS_MAGIC
            })
        );
        assert!(matches!(
            parse_idx_labels(&fixture()),
            Err(ParseError::BadMagic { .. })
        ));
    }

    #[test]
    fn trailing_bytes_are_a_dim_mismatch() {
        let mut b = fixture();
        b.push(0);
        assert!(matches!(
            parse_idx_images(&b),
            Err(ParseError::DimMismatch { offset: 24, .. })
        ));
    }

    #[test]
    fn labels_roundtrip() {
        let l = vec![3u8, 1, 4, 1, 5];
        assert_eq!(parse_idx_labels(&encode_idx_labels(&l)).unwrap(), l);
    }

    #[test]
    fn zero_sigma_is_identity() {
        let x = RngStream::new(0, 0).randn(&[3, 4]);
        assert_eq!(add_noise(&x, 0.0, &mut RngStream::new(1, 0)).unwrap(), x);
        assert!(add_noise(&x, -0.1, &mut RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn noise_has_requested_std() {
        let x = Grid::full(&[1000, 1000], 0.5);
        let y = add_noise(&x, 0.2, &mut RngStream::new(2, 0)).unwrap();
        let d = y.sub(&x).unwrap();
        let m = d.mean();
        let std = (d.data().iter().map(|v| (v - m).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
        assert!((std - 0.2).abs() < 0.002, "std {std}");
        let again = add_noise(&x, 0.2, &mut RngStream::new(2, 0)).unwrap();
        assert_eq!(y, again);
    }

    #[test]
    fn batch_sizes_keep_partial() {
        let b = batch_indices(10, 4, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(batch_indices(10, 0, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn epochs_reshuffle() {
        let e0 = batch_indices(100, 16, &mut RngStream::new(5, 100)).unwrap();
        let e1 = batch_indices(100, 16, &mut RngStream::new(5, 101)).unwrap();
        assert_ne!(e0, e1);
        assert_eq!(
            e0,
            batch_indices(100, 16, &mut RngStream::new(5, 100)).unwrap()
        );
    }

    #[test]
    fn batches_gather_rows() {
        let rows = Grid::from_fn(&[5, 2], |i| i as f64);
        let got: Vec<Grid> = batches(&rows, 2, &mut RngStream::new(0, 0))
            .unwrap()
            .collect();
        assert_eq!(got.len(), 3);
        let mut firsts: Vec<f64> = got
            .iter()
            .flat_map(|g| (0..g.rows()).map(|i| g.row(i)[0]).collect::<Vec<_>>())
            .collect();
        firsts.sort_by(f64::total_cmp);
        assert_eq!(firsts, vec![0.0, 2.0, 4.0, 6.0, 8.0]);
    }
}
