use super::embed::{patch_unembed, LatentGrid};
use crate::error::{Error, Result};
use crate::ndtensor::{Grid, RngStream};
use crate::nn::{log_softmax, Mlp};
use crate::pyramid::{down, reflect101, up};
use crate::quantize::{assign, dequantize, kmeans_fit, Codebook};

/// Side of the square context window each predictor sees.
pub const CONTEXT_WINDOW: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenMap {
    pub height: usize,
    pub width: usize,
    pub codes: Vec<usize>,
}

impl TokenMap {
    pub fn new(height: usize, width: usize, codes: Vec<usize>) -> Result<Self> {
        if codes.len() != height * width {
            return Err(Error::dim(
                "TokenMap",
                format!("{} codes for a {height}×{width} map", codes.len()),
            ));
        }
        Ok(Self {
            height,
            width,
            codes,
        })
    }

    pub fn sites(&self) -> usize {
        self.codes.len()
    }
}

/// Base codes `b^(S)` plus residual maps `r^(S−1) … r^(0)`, finest last.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenPyramid {
    pub base: TokenMap,
    pub residuals: Vec<TokenMap>,
}

impl TokenPyramid {
    pub fn scales(&self) -> usize {
        self.residuals.len()
    }

    /// Residual map `r^(level)`, `level` in `0..S`.
    pub fn residual(&self, level: usize) -> &TokenMap {
        &self.residuals[self.scales() - 1 - level]
    }

    pub fn total_sites(&self) -> usize {
        self.base.sites() + self.residuals.iter().map(TokenMap::sites).sum::<usize>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineryConfig {
    /// Latent spatial size at scale 0.
    pub latent_height: usize,
    pub latent_width: usize,
    /// Channels `d`, shared by every scale.
    pub channels: usize,
    /// Number of residual scales `S`.
    pub scales: usize,
    /// Codebook size for the base and for every residual scale.
    pub codes: usize,
    pub hidden: usize,
}

impl Default for RefineryConfig {
    fn default() -> Self {
        Self {
            latent_height: 14,
            latent_width: 14,
            channels: 4,
            scales: 1,
            codes: 64,
            hidden: 128,
        }
    }
}

/// Coarse-to-fine categorical generator over a Laplacian latent pyramid.
///
/// Scale `k` runs from `0` (finest latent) to `S` (base). Index `k − 1` of
/// `residual_codebooks` and `predictors` belongs to the step that produces
/// `r^(k−1)` from the context `C^(k−1) = up(L^(k))`.
#[derive(Clone, Debug)]
pub struct RefineryModel {
    config: RefineryConfig,
    ladder: Vec<(usize, usize)>,
    pub base_codebook: Option<Codebook>,
    pub residual_codebooks: Option<Vec<Codebook>>,
    /// Per-site log-probabilities `[sites_S × V_S]` of the base prior.
    pub base_log_prior: Option<Grid>,
    pub predictors: Vec<Mlp>,
}

/// Spatial sizes of scales `0..=S` under ceil-halving.
pub fn scale_ladder(h: usize, w: usize, scales: usize) -> Vec<(usize, usize)> {
    let mut out = vec![(h, w)];
    for _ in 0..scales {
        let (ph, pw) = *out.last().unwrap();
        out.push((ph.div_ceil(2), pw.div_ceil(2)));
    }
    out
}

impl RefineryModel {
    /// Untrained model with freshly initialized predictors and no codebooks.
    pub fn new(config: RefineryConfig, rng: &mut RngStream) -> Result<Self> {
        let RefineryConfig {
            latent_height: h,
            latent_width: w,
            channels,
            scales,
            codes,
            hidden,
        } = config;
        if h == 0 || w == 0 || channels == 0 || codes == 0 || hidden == 0 {
            return Err(Error::input(format!(
                "degenerate refinery config {config:?}"
            )));
        }
        let max = crate::pyramid::max_levels(h, w);
        if scales > max {
            return Err(Error::input(format!(
                "{scales} scales requested but a {h}×{w} latent supports at most {max}"
            )));
        }
        let input = CONTEXT_WINDOW * CONTEXT_WINDOW * channels;
        let predictors = (0..scales)
            .map(|_| Mlp::new(input, hidden, codes, rng))
            .collect();
        Ok(Self {
            config,
            ladder: scale_ladder(h, w, scales),
            base_codebook: None,
            residual_codebooks: None,
            base_log_prior: None,
            predictors,
        })
    }

    /// Assembles a model from fitted parts; shapes are validated.
    pub fn from_parts(
        config: RefineryConfig,
        base_codebook: Codebook,
        residual_codebooks: Vec<Codebook>,
        base_log_prior: Grid,
        predictors: Vec<Mlp>,
    ) -> Result<Self> {
        let ladder = scale_ladder(config.latent_height, config.latent_width, config.scales);
        let d = config.channels;
        let (bh, bw) = ladder[config.scales];
        let bad = |m: String| Err(Error::input(m));
        if base_codebook.dim() != d || residual_codebooks.iter().any(|c| c.dim() != d) {
            return bad(format!("every codebook must have dim {d}"));
        }
        if residual_codebooks.len() != config.scales || predictors.len() != config.scales {
            return bad(format!(
                "{} scales need as many residual codebooks and predictors, got {} and {}",
                config.scales,
                residual_codebooks.len(),
                predictors.len()
            ));
        }
        if base_log_prior.shape() != [bh * bw, base_codebook.size()] {
            return bad(format!(
                "base prior shape {:?}, expected [{}, {}]",
                base_log_prior.shape(),
                bh * bw,
                base_codebook.size()
            ));
        }
        let input = CONTEXT_WINDOW * CONTEXT_WINDOW * d;
        for (i, (p, cb)) in predictors.iter().zip(&residual_codebooks).enumerate() {
            if p.input_dim() != input || p.output_dim() != cb.size() {
                return bad(format!(
                    "predictor {} maps {}→{}, expected {input}→{}",
                    i + 1,
                    p.input_dim(),
                    p.output_dim(),
                    cb.size()
                ));
            }
        }
        Ok(Self {
            config,
            ladder,
            base_codebook: Some(base_codebook),
            residual_codebooks: Some(residual_codebooks),
            base_log_prior: Some(base_log_prior),
            predictors,
        })
    }

    pub fn config(&self) -> &RefineryConfig {
        &self.config
    }

    pub fn scales(&self) -> usize {
        self.config.scales
    }

    pub fn ladder(&self) -> &[(usize, usize)] {
        &self.ladder
    }

    fn codebooks(&self) -> Result<(&Codebook, &[Codebook])> {
        match (&self.base_codebook, &self.residual_codebooks) {
            (Some(b), Some(r)) => Ok((b, r)),
            _ => Err(Error::State("refinery codebooks are not fitted".into())),
        }
    }

    fn prior(&self) -> Result<&Grid> {
        self.base_log_prior
            .as_ref()
            .ok_or_else(|| Error::State("base prior is not fitted".into()))
    }

    /// Gaussian ladder `L^(0..=S)` of a latent: `L^(k) = down(L^(k−1))`.
    pub fn gaussian_ladder(&self, l0: &LatentGrid) -> Result<Vec<Grid>> {
        self.check_latent(l0)?;
        let mut levels = vec![l0.values.clone()];
        for k in 1..=self.scales() {
            let next = down(&levels[k - 1])?;
            levels.push(next);
        }
        Ok(levels)
    }

    /// Open-loop residuals `R^(k−1) = L^(k−1) − up(L^(k))` for `k = 1..=S`,
    /// indexed by `k − 1`.
    pub fn residuals(&self, levels: &[Grid]) -> Result<Vec<Grid>> {
        (1..=self.scales())
            .map(|k| {
                let (h, w) = self.ladder[k - 1];
                levels[k - 1].sub(&up(&levels[k], (h, w))?)
            })
            .collect()
    }

    fn check_latent(&self, l0: &LatentGrid) -> Result<()> {
        let (h, w) = self.ladder[0];
        let want = [h, w, self.config.channels];
        if l0.values.shape() != want {
            return Err(Error::dim(
                "refinery",
                format!("latent {:?}, model expects {want:?}", l0.values.shape()),
            ));
        }
        Ok(())
    }

    /// Fits the base codebook on `L^(S)` vectors and one residual codebook
    /// per scale on `R^(k−1)` vectors, each from at most `max_points`
    /// randomly chosen site vectors.
    pub fn fit_codebooks(
        &mut self,
        latents: &[LatentGrid],
        max_points: usize,
        rng: &mut RngStream,
    ) -> Result<()> {
        let d = self.config.channels;
        let s = self.scales();
        let mut base_pts = Vec::new();
        let mut res_pts = vec![Vec::new(); s];
        for l0 in latents {
            let levels = self.gaussian_ladder(l0)?;
            base_pts.extend_from_slice(levels[s].data());
            for (k, r) in self.residuals(&levels)?.into_iter().enumerate() {
                res_pts[k].extend(r.into_data());
            }
        }
        let mut fit = |pts: Vec<f64>| -> Result<Codebook> {
            let n = pts.len() / d;
            let all = Grid::new(vec![n, d], pts)?;
            let sample = if max_points > 0 && n > max_points {
                let mut idx = rng.permutation(n);
                idx.truncate(max_points);
                idx.sort_unstable();
                all.select_rows(&idx)
            } else {
                all
            };
            kmeans_fit(&sample, self.config.codes, rng)
        };
        let base = fit(base_pts)?;
        let residual = res_pts
            .into_iter()
            .map(&mut fit)
            .collect::<Result<Vec<_>>>()?;
        self.base_codebook = Some(base);
        self.residual_codebooks = Some(residual);
        Ok(())
    }

    /// Per-site empirical code frequencies with add-one smoothing.
    pub fn fit_base_prior(&mut self, data: &[TokenPyramid]) -> Result<()> {
        let (base_cb, _) = self.codebooks()?;
        let v = base_cb.size();
        let (bh, bw) = self.ladder[self.scales()];
        let sites = bh * bw;
        let mut counts = Grid::full(&[sites, v], 1.0);
        for t in data {
            self.check_tokens(t)?;
            for (i, &c) in t.base.codes.iter().enumerate() {
                counts.row_mut(i)[c] += 1.0;
            }
        }
        let total = (data.len() + v) as f64;
        self.base_log_prior = Some(counts.map(|c| (c / total).ln()));
        Ok(())
    }

    /// Deterministic tokenization: Gaussian ladder, open-loop Laplacian
    /// residuals, nearest-code assignment per site.
    pub fn forward_tokenize(&self, l0: &LatentGrid) -> Result<TokenPyramid> {
        let (base_cb, res_cbs) = self.codebooks()?;
        let levels = self.gaussian_ladder(l0)?;
        let d = self.config.channels;
        let s = self.scales();
        let flat = |g: &Grid| g.clone().reshape(&[g.len() / d, d]);
        let (bh, bw) = self.ladder[s];
        let base = TokenMap::new(bh, bw, assign(base_cb, &flat(&levels[s])?)?)?;
        let residual_grids = self.residuals(&levels)?;
        let mut residuals = Vec::with_capacity(s);
        for k in (1..=s).rev() {
            let (h, w) = self.ladder[k - 1];
            let codes = assign(&res_cbs[k - 1], &flat(&residual_grids[k - 1])?)?;
            residuals.push(TokenMap::new(h, w, codes)?);
        }
        Ok(TokenPyramid { base, residuals })
    }

    fn check_tokens(&self, t: &TokenPyramid) -> Result<()> {
        let (base_cb, res_cbs) = self.codebooks()?;
        let s = self.scales();
        if t.scales() != s {
            return Err(Error::input(format!(
                "token pyramid has {} residual maps, model has {s} scales",
                t.scales()
            )));
        }
        let check = |m: &TokenMap, (h, w): (usize, usize), v: usize, what: &str| {
            if (m.height, m.width) != (h, w) {
                return Err(Error::input(format!(
                    "{what} map is {}×{}, expected {h}×{w}",
                    m.height, m.width
                )));
            }
            if let Some(&bad) = m.codes.iter().find(|&&c| c >= v) {
                return Err(Error::input(format!("{what} code {bad} outside [0, {v})")));
            }
            Ok(())
        };
        check(&t.base, self.ladder[s], base_cb.size(), "base")?;
        for k in 1..=s {
            check(
                t.residual(k - 1),
                self.ladder[k - 1],
                res_cbs[k - 1].size(),
                "residual",
            )?;
        }
        Ok(())
    }

    fn embed(&self, cb: &Codebook, map: &TokenMap) -> Result<Grid> {
        dequantize(cb, &map.codes)?.reshape(&[map.height, map.width, self.config.channels])
    }

    /// `L^(S)` from the base codes.
    pub fn base_latent(&self, t: &TokenPyramid) -> Result<Grid> {
        let (base_cb, _) = self.codebooks()?;
        self.embed(base_cb, &t.base)
    }

    /// `C^(k−1) = up(L^(k))`.
    pub fn upscale_context(&self, coarse: &Grid, k: usize) -> Result<LatentGrid> {
        LatentGrid::new(up(coarse, self.ladder[k - 1])?, k - 1)
    }

    /// `L^(k−1) = C^(k−1) + emb(r^(k−1))`.
    pub fn refine(&self, context: &LatentGrid, codes: &TokenMap) -> Result<Grid> {
        let (_, res_cbs) = self.codebooks()?;
        let k = context.scale + 1;
        context.values.add(&self.embed(&res_cbs[k - 1], codes)?)
    }

    /// Teacher-forced contexts `C^(S−1) … C^(0)` rebuilt from the tokens,
    /// together with the reconstructed `L^(0)`.
    pub fn contexts(&self, t: &TokenPyramid) -> Result<(Vec<LatentGrid>, LatentGrid)> {
        self.check_tokens(t)?;
        let mut current = self.base_latent(t)?;
        let mut out = Vec::with_capacity(self.scales());
        for k in (1..=self.scales()).rev() {
            let ctx = self.upscale_context(&current, k)?;
            current = self.refine(&ctx, t.residual(k - 1))?;
            out.push(ctx);
        }
        Ok((out, LatentGrid::new(current, 0)?))
    }

    /// Upsample-and-add reconstruction of `L^(0)` from tokens.
    pub fn detokenize(&self, t: &TokenPyramid) -> Result<LatentGrid> {
        self.contexts(t).map(|(_, l0)| l0)
    }

    /// Logits `[sites × V_k]` for the residual map at `context.scale`.
    pub fn site_logits(&self, context: &LatentGrid) -> Result<Grid> {
        let k = context.scale + 1;
        if k > self.scales() {
            return Err(Error::input(format!(
                "context scale {} has no predictor (model has {} scales)",
                context.scale,
                self.scales()
            )));
        }
        let (h, w) = self.ladder[k - 1];
        if (context.height(), context.width(), context.channels()) != (h, w, self.config.channels) {
            return Err(Error::dim(
                "predict_scale",
                format!(
                    "context {:?} at scale {}",
                    context.values.shape(),
                    context.scale
                ),
            ));
        }
        self.predictors[k - 1].forward(&context_patches(&context.values))
    }

    /// Logits `[H_{k−1} × W_{k−1} × V_k]`; each site sees only its 3×3
    /// neighbourhood of the context, so sites are independent.
    pub fn predict_scale(&self, context: &LatentGrid) -> Result<Grid> {
        let logits = self.site_logits(context)?;
        let v = logits.cols();
        logits.reshape(&[context.height(), context.width(), v])
    }

    /// Exact `log p(tokens)`: base prior plus every scale's teacher-forced
    /// categorical factors.
    pub fn log_likelihood(&self, t: &TokenPyramid) -> Result<f64> {
        let prior = self.prior()?;
        let (contexts, _) = self.contexts(t)?;
        let mut total: f64 = t
            .base
            .codes
            .iter()
            .enumerate()
            .map(|(i, &c)| prior.row(i)[c])
            .sum();
        for ctx in &contexts {
            let logp = log_softmax(&self.site_logits(ctx)?);
            let codes = &t.residual(ctx.scale).codes;
            total += codes
                .iter()
                .enumerate()
                .map(|(i, &c)| logp.row(i)[c])
                .sum::<f64>();
        }
        Ok(total)
    }

    /// Samples base codes from the prior, then each residual map sitewise
    /// from `softmax(logits / temperature)`, coarse to fine.
    pub fn generate(&self, rng: &mut RngStream, temperature: f64) -> Result<Generated> {
        if !(temperature > 0.0) {
            return Err(Error::input(format!(
                "temperature must be > 0, got {temperature}"
            )));
        }
        let prior = self.prior()?;
        let s = self.scales();
        let (bh, bw) = self.ladder[s];
        let mut stages = 0;
        let base_codes: Vec<usize> = (0..bh * bw)
            .map(|i| {
                let w: Vec<f64> = prior.row(i).iter().map(|lp| lp.exp()).collect();
                rng.categorical(&w)
            })
            .collect();
        stages += 1;
        let base = TokenMap::new(bh, bw, base_codes)?;
        let mut residuals = Vec::with_capacity(s);
        let mut current = {
            let (base_cb, _) = self.codebooks()?;
            self.embed(base_cb, &base)?
        };
        for k in (1..=s).rev() {
            let ctx = self.upscale_context(&current, k)?;
            let logits = self.site_logits(&ctx)?;
            let codes: Vec<usize> = (0..logits.rows())
                .map(|i| rng.categorical(&tempered_weights(logits.row(i), temperature)))
                .collect();
            stages += 1;
            let map = TokenMap::new(ctx.height(), ctx.width(), codes)?;
            current = self.refine(&ctx, &map)?;
            residuals.push(map);
        }
        let latent = LatentGrid::new(current, 0)?;
        let image = if self.config.channels == super::embed::PATCH * super::embed::PATCH {
            Some(patch_unembed(&latent)?)
        } else {
            None
        };
        Ok(Generated {
            tokens: TokenPyramid { base, residuals },
            latent,
            image,
            stages,
        })
    }
}

/// Output of [`RefineryModel::generate`].
#[derive(Clone, Debug)]
pub struct Generated {
    pub tokens: TokenPyramid,
    pub latent: LatentGrid,
    /// Decoded pixels when the latent came from 2×2 patch embedding.
    pub image: Option<Grid>,
    /// Categorical sampling stages executed: one base plus one per scale.
    pub stages: usize,
}

fn tempered_weights(logits: &[f64], temperature: f64) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    logits
        .iter()
        .map(|z| ((z - m) / temperature).exp())
        .collect()
}

/// Reflect-101 padded 3×3 neighbourhoods of `[h × w × d]`, one row per
/// site, laid out `(dy, dx, channel)`.
pub fn context_patches(ctx: &Grid) -> Grid {
    let (h, w, d) = (ctx.shape()[0], ctx.shape()[1], ctx.shape()[2]);
    let r = (CONTEXT_WINDOW / 2) as isize;
    let width = CONTEXT_WINDOW * CONTEXT_WINDOW * d;
    let src = ctx.data();
    let mut out = Vec::with_capacity(h * w * width);
    for y in 0..h as isize {
        for x in 0..w as isize {
            for dy in -r..=r {
                let yy = reflect101(y + dy, h);
                for dx in -r..=r {
                    let xx = reflect101(x + dx, w);
                    let o = (yy * w + xx) * d;
                    out.extend_from_slice(&src[o..o + d]);
                }
            }
        }
    }
    Grid::new(vec![h * w, width], out).expect("patch count")
}
