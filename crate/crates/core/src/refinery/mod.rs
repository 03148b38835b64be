//! Coarse-to-fine residual tokenization of a latent pyramid and its
//! scale-by-scale categorical generator.

mod embed;
mod model;
mod train;

pub use embed::{patch_embed, patch_unembed, LatentGrid, PATCH};
pub use model::{
    context_patches, scale_ladder, Generated, RefineryConfig, RefineryModel, TokenMap,
    TokenPyramid, CONTEXT_WINDOW,
};
pub use train::{nll_per_site, train_refinery, RefineryTrace, RefineryTrainConfig};
