//! `RFNY1` binary container: the magic, a section count, then tagged
//! sections each prefixed by their byte length. Everything is little-endian.

use crate::error::{Error, ParseError, Result};
use crate::harness::LinearAutoencoder;
use crate::ndtensor::Grid;
use crate::nn::Mlp;
use crate::quantize::Codebook;
use crate::refinery::{RefineryConfig, RefineryModel};
use std::path::Path;

pub const MAGIC: &[u8; 5] = b"RFNY1";

pub const TAG_HEADER: [u8; 4] = *b"HEAD";
pub const TAG_REFINERY_CONFIG: [u8; 4] = *b"RCFG";
pub const TAG_BASE_CODEBOOK: [u8; 4] = *b"CBKB";
pub const TAG_RESIDUAL_CODEBOOK: [u8; 4] = *b"CBKR";
pub const TAG_BASE_PRIOR: [u8; 4] = *b"PRIO";
pub const TAG_MLP: [u8; 4] = *b"MLPW";
pub const TAG_AUTOENCODER: [u8; 4] = *b"LAEW";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub sections: Vec<([u8; 4], Vec<u8>)>,
}

/// Little-endian reader that reports absolute offsets on failure.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], base: usize) -> Self {
        Self {
            bytes,
            pos: 0,
            base,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ParseError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(ParseError::Truncated {
                offset: self.base + self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ParseError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ParseError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn offset(&self) -> usize {
        self.base + self.pos
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

impl Checkpoint {
    pub fn push(&mut self, tag: [u8; 4], payload: Vec<u8>) {
        self.sections.push((tag, payload));
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (tag, payload) in &self.sections {
            out.extend_from_slice(tag);
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor::new(bytes, 0);
        let magic = c.take(MAGIC.len())?;
        if magic != MAGIC {
            return Err(ParseError::BadMagic {
                offset: 0,
                expected: u32::from_le_bytes(MAGIC[..4].try_into().unwrap()),
                found: u32::from_le_bytes(magic[..4].try_into().unwrap()),
            }
            .into());
        }
        let count = c.u32()?;
        let mut sections = Vec::with_capacity(count.min(1024) as usize);
        for _ in 0..count {
            let tag: [u8; 4] = c.take(4)?.try_into().unwrap();
            let len = c.u64()?;
            let len = usize::try_from(len).map_err(|_| ParseError::Malformed {
                offset: c.offset(),
                detail: format!("section length {len} does not fit in memory"),
            })?;
            sections.push((tag, c.take(len)?.to_vec()));
        }
        if !c.done() {
            return Err(ParseError::DimMismatch {
                offset: c.offset(),
                detail: format!("{} trailing bytes after last section", bytes.len() - c.pos),
            }
            .into());
        }
        Ok(Self { sections })
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Sections with `tag`, in file order.
    pub fn all(&self, tag: [u8; 4]) -> impl Iterator<Item = &[u8]> {
        self.sections
            .iter()
            .filter(move |(t, _)| *t == tag)
            .map(|(_, p)| p.as_slice())
    }

    pub fn one(&self, tag: [u8; 4]) -> Result<&[u8]> {
        self.all(tag).next().ok_or_else(|| {
            Error::Input(format!(
                "checkpoint has no {} section",
                String::from_utf8_lossy(&tag)
            ))
        })
    }

    /// Parsed `key=value` lines of the header section, if present.
    pub fn header(&self) -> Vec<(String, String)> {
        self.all(TAG_HEADER)
            .next()
            .map(|p| {
                String::from_utf8_lossy(p)
                    .lines()
                    .filter_map(|l| l.split_once('='))
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect()
            })
            .unwrap_or_default()
    }
}

pub fn header_section(entries: &[(&str, String)]) -> Vec<u8> {
    entries
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect::<String>()
        .into_bytes()
}

pub fn encode_grid(g: &Grid, out: &mut Vec<u8>) {
    out.extend_from_slice(&(g.ndim() as u32).to_le_bytes());
    for &d in g.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in g.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_grid(c: &mut Cursor) -> Result<Grid> {
    let ndim = c.u32()? as usize;
    if ndim > 8 {
        return Err(ParseError::Malformed {
            offset: c.offset(),
            detail: format!("grid rank {ndim} is implausible"),
        }
        .into());
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(c.u64()? as usize);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or_else(|| ParseError::Malformed {
            offset: c.offset(),
            detail: format!("grid shape {shape:?} overflows"),
        })?;
    let raw = c.take(n * 8)?;
    let data = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Grid::new(shape, data)
}

pub fn decode_grids(payload: &[u8], count: usize) -> Result<Vec<Grid>> {
    let mut c = Cursor::new(payload, 0);
    let grids = (0..count)
        .map(|_| read_grid(&mut c))
        .collect::<Result<Vec<_>>>()?;
    if !c.done() {
        return Err(ParseError::DimMismatch {
            offset: c.offset(),
            detail: "trailing bytes in grid section".into(),
        }
        .into());
    }
    Ok(grids)
}

pub fn encode_mlp(m: &Mlp) -> Vec<u8> {
    let mut out = Vec::new();
    for g in m.params() {
        encode_grid(g, &mut out);
    }
    out
}

pub fn decode_mlp(payload: &[u8]) -> Result<Mlp> {
    let g: [Grid; 6] = decode_grids(payload, 6)?.try_into().expect("six grids");
    Mlp::from_parts(g)
}

pub fn save_refinery(model: &RefineryModel, header: &[(&str, String)]) -> Result<Checkpoint> {
    let (Some(base), Some(residual), Some(prior)) = (
        &model.base_codebook,
        &model.residual_codebooks,
        &model.base_log_prior,
    ) else {
        return Err(Error::State(
            "only a fitted refinery model can be saved".into(),
        ));
    };
    let cfg = model.config();
    let mut ck = Checkpoint::default();
    ck.push(TAG_HEADER, header_section(header));
    let mut rc = Vec::new();
    for v in [
        cfg.latent_height,
        cfg.latent_width,
        cfg.channels,
        cfg.scales,
        cfg.codes,
        cfg.hidden,
    ] {
        rc.extend_from_slice(&(v as u64).to_le_bytes());
    }
    ck.push(TAG_REFINERY_CONFIG, rc);
    ck.push(TAG_BASE_CODEBOOK, base.to_bytes());
    for cb in residual {
        ck.push(TAG_RESIDUAL_CODEBOOK, cb.to_bytes());
    }
    let mut p = Vec::new();
    encode_grid(prior, &mut p);
    ck.push(TAG_BASE_PRIOR, p);
    for m in &model.predictors {
        ck.push(TAG_MLP, encode_mlp(m));
    }
    Ok(ck)
}

pub fn load_refinery(ck: &Checkpoint) -> Result<RefineryModel> {
    let mut c = Cursor::new(ck.one(TAG_REFINERY_CONFIG)?, 0);
    let mut v = [0usize; 6];
    for x in &mut v {
        *x = c.u64()? as usize;
    }
    let cfg = RefineryConfig {
        latent_height: v[0],
        latent_width: v[1],
        channels: v[2],
        scales: v[3],
        codes: v[4],
        hidden: v[5],
    };
    let base = Codebook::from_bytes(ck.one(TAG_BASE_CODEBOOK)?)?;
    let residual = ck
        .all(TAG_RESIDUAL_CODEBOOK)
        .map(Codebook::from_bytes)
        .collect::<Result<Vec<_>>>()?;
    let prior = decode_grids(ck.one(TAG_BASE_PRIOR)?, 1)?.remove(0);
    let predictors = ck
        .all(TAG_MLP)
        .map(decode_mlp)
        .collect::<Result<Vec<_>>>()?;
    RefineryModel::from_parts(cfg, base, residual, prior, predictors)
}

pub fn save_autoencoder(ae: &LinearAutoencoder, header: &[(&str, String)]) -> Checkpoint {
    let mut ck = Checkpoint::default();
    ck.push(TAG_HEADER, header_section(header));
    let mut p = Vec::new();
    for g in ae.params() {
        encode_grid(g, &mut p);
    }
    ck.push(TAG_AUTOENCODER, p);
    ck
}

pub fn load_autoencoder(ck: &Checkpoint) -> Result<LinearAutoencoder> {
    let [a, b, c, d]: [Grid; 4] = decode_grids(ck.one(TAG_AUTOENCODER)?, 4)?
        .try_into()
        .expect("four grids");
    LinearAutoencoder::from_parts(a, b, c, d)
}
