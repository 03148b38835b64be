use crate::error::{Error, Result};
use crate::ndtensor::Grid;

pub const PATCH: usize = 2;

/// Latent values `[H_k × W_k × d]` at pyramid scale `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGrid {
    pub values: Grid,
    pub scale: usize,
}

impl LatentGrid {
    pub fn new(values: Grid, scale: usize) -> Result<Self> {
        if values.ndim() != 3 {
            return Err(Error::dim(
                "LatentGrid",
                format!("expected [H, W, d], got {:?}", values.shape()),
            ));
        }
        Ok(Self { values, scale })
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn sites(&self) -> usize {
        self.height() * self.width()
    }

    /// `[sites × d]` view for quantization.
    pub fn site_vectors(&self) -> Grid {
        self.values
            .clone()
            .reshape(&[self.sites(), self.channels()])
            .expect("same element count")
    }
}

/// Folds non-overlapping 2×2 pixel patches into `d = 4` channels, channel
/// index `2·dy + dx`.
pub fn patch_embed(img: &Grid) -> Result<LatentGrid> {
    let &[h, w] = img.shape() else {
        return Err(Error::input(format!(
            "expected an [H, W] image, got {:?}",
            img.shape()
        )));
    };
    if h % PATCH != 0 || w % PATCH != 0 || h == 0 || w == 0 {
        return Err(Error::input(format!(
            "{h}×{w} image is not divisible into 2×2 patches"
        )));
    }
    let (lh, lw) = (h / PATCH, w / PATCH);
    let d = PATCH * PATCH;
    let mut out = Grid::zeros(&[lh, lw, d]);
    for y in 0..h {
        for x in 0..w {
            let c = (y % PATCH) * PATCH + x % PATCH;
            out.set(&[y / PATCH, x / PATCH, c], img.get(&[y, x]));
        }
    }
    LatentGrid::new(out, 0)
}

/// Exact inverse of [`patch_embed`].
pub fn patch_unembed(latent: &LatentGrid) -> Result<Grid> {
    if latent.channels() != PATCH * PATCH {
        return Err(Error::input(format!(
            "patch latents carry {} channels, got {}",
            PATCH * PATCH,
            latent.channels()
        )));
    }
    let (h, w) = (latent.height() * PATCH, latent.width() * PATCH);
    let mut img = Grid::zeros(&[h, w]);
    for y in 0..h {
        for x in 0..w {
            let c = (y % PATCH) * PATCH + x % PATCH;
            img.set(&[y, x], latent.values.get(&[y / PATCH, x / PATCH, c]));
        }
    }
    Ok(img)
}
