//! C ABI over `refinery-core`.
//!
//! Every object crosses the boundary as an opaque handle created by a
//! `rfny_*_new`/`load`/`build` call and released with the matching
//! `rfny_*_free`. Fallible calls return an [`RfnyStatus`]; on failure the
//! message is kept per thread and can be read with
//! [`rfny_last_error_message`]. Results are written through out-pointers,
//! which are set to NULL on entry.

#![allow(clippy::missing_safety_doc)]

use refinery_core::checkpoint::{load_refinery, Checkpoint};
use refinery_core::pyramid::Pyramid;
use refinery_core::refinery::{
    patch_embed, patch_unembed, LatentGrid, RefineryModel, TokenMap, TokenPyramid,
};
use refinery_core::{Error, Grid, ParseError, RngStream};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RfnyStatus {
    Ok = 0,
    NullPointer = 1,
    Dimension = 2,
    Input = 3,
    State = 4,
    Contract = 5,
    Parse = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Dense f64 array, row-major.
pub struct RfnyGrid(Grid);

/// Gaussian and Laplacian levels of one image.
pub struct RfnyPyramid(Pyramid);

/// A fitted coarse-to-fine token model loaded from a checkpoint.
pub struct RfnyModel(RefineryModel);

/// Token maps of one latent: residual levels `0..S` plus the base at level `S`.
pub struct RfnyTokens(TokenPyramid);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Fail {
    Null(&'static str),
    Buffer { needed: usize, capacity: usize },
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

impl From<ParseError> for Fail {
    fn from(e: ParseError) -> Self {
        Fail::Core(e.into())
    }
}

fn remember(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RfnyStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return RfnyStatus::Ok,
        Ok(Err(Fail::Null(what))) => (RfnyStatus::NullPointer, format!("{what} is NULL")),
        Ok(Err(Fail::Buffer { needed, capacity })) => (
            RfnyStatus::BufferTooSmall,
            format!("buffer holds {capacity} elements, {needed} needed"),
        ),
        Ok(Err(Fail::Core(e))) => {
            let s = match e {
                Error::Dimension { .. } => RfnyStatus::Dimension,
                Error::Input(_) => RfnyStatus::Input,
                Error::State(_) => RfnyStatus::State,
                Error::Contract(_) => RfnyStatus::Contract,
                Error::Parse(_) => RfnyStatus::Parse,
                Error::Io(_) => RfnyStatus::Io,
            };
            (s, e.to_string())
        }
        Err(payload) => {
            let text = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            (RfnyStatus::Panic, format!("panic: {text}"))
        }
    };
    remember(msg);
    status
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn clear_out<T>(out: *mut *mut T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = ptr::null_mut();
    Ok(())
}

unsafe fn emit<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn fill<T: Copy>(src: &[T], out: *mut T, capacity: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    if capacity < src.len() {
        return Err(Fail::Buffer {
            needed: src.len(),
            capacity,
        });
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// NUL-terminated crate version. Static storage.
#[no_mangle]
pub extern "C" fn rfny_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// NUL-terminated name of a status code. Static storage.
#[no_mangle]
pub extern "C" fn rfny_status_name(status: RfnyStatus) -> *const c_char {
    let s: &'static str = match status {
        RfnyStatus::Ok => "ok\0",
        RfnyStatus::NullPointer => "null pointer\0",
        RfnyStatus::Dimension => "dimension mismatch\0",
        RfnyStatus::Input => "invalid input\0",
        RfnyStatus::State => "invalid state\0",
        RfnyStatus::Contract => "contract violation\0",
        RfnyStatus::Parse => "parse error\0",
        RfnyStatus::Io => "io error\0",
        RfnyStatus::BufferTooSmall => "buffer too small\0",
        RfnyStatus::Panic => "panic\0",
    };
    s.as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// always NUL-terminated when `capacity > 0`). Returns the byte length the
/// full message needs including its NUL, or 0 if the last call succeeded.
#[no_mangle]
pub unsafe extern "C" fn rfny_last_error_message(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let Some(msg) = slot.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && capacity > 0 {
            let n = (bytes.len() - 1).min(capacity - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Copies `len` values shaped by `shape[0..ndim]` into a new grid.
#[no_mangle]
pub unsafe extern "C" fn rfny_grid_new(
    shape: *const usize,
    ndim: usize,
    data: *const f64,
    len: usize,
    out: *mut *mut RfnyGrid,
) -> RfnyStatus {
    guard(|| {
        clear_out(out)?;
        let shape = slice(shape, ndim, "shape")?.to_vec();
        let data = slice(data, len, "data")?.to_vec();
        emit(out, RfnyGrid(Grid::new(shape, data)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rfny_grid_free(grid: *mut RfnyGrid) {
    free(grid)
}

/// Number of axes; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn rfny_grid_ndim(grid: *const RfnyGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.ndim())
}

/// Number of elements; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn rfny_grid_len(grid: *const RfnyGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.len())
}

#[no_mangle]
pub unsafe extern "C" fn rfny_grid_shape(
    grid: *const RfnyGrid,
    out: *mut usize,
    capacity: usize,
) -> RfnyStatus {
    guard(|| fill(get(grid, "grid")?.0.shape(), out, capacity))
}

/// Row-major values. Borrowed: valid until the grid is freed.
#[no_mangle]
pub unsafe extern "C" fn rfny_grid_data(grid: *const RfnyGrid) -> *const f64 {
    grid.as_ref().map_or(ptr::null(), |g| g.0.data().as_ptr())
}

/// `levels`-level pyramid of an `[H, W]` or `[H, W, C]` grid.
#[no_mangle]
pub unsafe extern "C" fn rfny_pyramid_build(
    image: *const RfnyGrid,
    levels: usize,
    out: *mut *mut RfnyPyramid,
) -> RfnyStatus {
    guard(|| {
        clear_out(out)?;
        emit(
            out,
            RfnyPyramid(Pyramid::build(&get(image, "image")?.0, levels)?),
        );
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rfny_pyramid_free(pyramid: *mut RfnyPyramid) {
    free(pyramid)
}

/// Number of Laplacian bands `S`; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn rfny_pyramid_levels(pyramid: *const RfnyPyramid) -> usize {
    pyramid.as_ref().map_or(0, |p| p.0.levels())
}

/// Copy of Gaussian level `k` in `0..=S`.
#[no_mangle]
pub unsafe extern "C" fn rfny_pyramid_gaussian(
    pyramid: *const RfnyPyramid,
    k: usize,
    out: *mut *mut RfnyGrid,
) -> RfnyStatus {
    guard(|| {
        clear_out(out)?;
        let p = &get(pyramid, "pyramid")?.0;
        let g = p
            .gaussians
            .get(k)
            .ok_or_else(|| Error::Input(format!("level {k} out of range 0..={}", p.levels())))?;
        emit(out, RfnyGrid(g.clone()));
        Ok(())
    })
}

/// Copy of Laplacian band `k` in `0..S`.
#[no_mangle]
pub unsafe extern "C" fn rfny_pyramid_laplacian(
    pyramid: *const RfnyPyramid,
    k: usize,
    out: *mut *mut RfnyGrid,
) -> RfnyStatus {
    guard(|| {
        clear_out(out)?;
        let p = &get(pyramid, "pyramid")?.0;
        let g = p
            .laplacians
            .get(k)
            .ok_or_else(|| Error::Input(format!("band {k} out of range 0..{}", p.levels())))?;
        emit(out, RfnyGrid(g.clone()));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rfny_pyramid_reconstruct(
    pyramid: *const RfnyPyramid,
    out: *mut *mut RfnyGrid,
) -> RfnyStatus {
    guard(|| {
        clear_out(out)?;
        emit(out, RfnyGrid(get(pyramid, "pyramid")?.0.reconstruct()?));
        Ok(())
    })
}

/// `[28, 28]` image to its `[14, 14, 4]` space-to-depth latent.
#[no_mangle]
pub unsafe extern "C" fn rfny_patch_embed(
    image: *const RfnyGrid,
    out: *mut *mut RfnyGrid,
) -> RfnyStatus {
    guard(|| {
        clear_out(out)?;
        emit(out, RfnyGrid(patch_embed(&get(image, "image")?.0)?.values));
        Ok(())
    })
}

/// Inverse of [`rfny_patch_embed`].
#[no_mangle]
pub unsafe extern "C" fn rfny_patch_unembed(
    latent: *const RfnyGrid,
    out: *mut *mut RfnyGrid,
) -> RfnyStatus {
    guard(|| {
        clear_out(out)?;
        let l = LatentGrid::new(get(latent, "latent")?.0.clone(), 0)?;
        emit(out, RfnyGrid(patch_unembed(&l)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rfny_model_load_file(
    path: *const c_char,
    out: *mut *mut RfnyModel,
) -> RfnyStatus {
    guard(|| {
        clear_out(out)?;
        if path.is_null() {
            return Err(Fail::Null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Error::Input("path is not UTF-8".into()))?;
        let ck = Checkpoint::read_file(Path::new(path))?;
        emit(out, RfnyModel(load_refinery(&ck)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rfny_model_load_bytes(
    bytes: *const u8,
    len: usize,
    out: *mut *mut RfnyModel,
) -> RfnyStatus {
    guard(|| {
        clear_out(out)?;
        let ck = Checkpoint::from_bytes(slice(bytes, len, "bytes")?)?;
        emit(out, RfnyModel(load_refinery(&ck)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rfny_model_free(model: *mut RfnyModel) {
    free(model)
}

/// Number of residual scales `S`; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn rfny_model_scales(model: *const RfnyModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.scales())
}

/// Codebook size `V`; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn rfny_model_codes(model: *const RfnyModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.config().codes)
}

/// Tokenizes a finest-scale `[H, W, d]` latent.
#[no_mangle]
pub unsafe extern "C" fn rfny_model_tokenize(
    model: *const RfnyModel,
    latent: *const RfnyGrid,
    out: *mut *mut RfnyTokens,
) -> RfnyStatus {
    guard(|| {
        clear_out(out)?;
        let m = &get(model, "model")?.0;
        let l = LatentGrid::new(get(latent, "latent")?.0.clone(), 0)?;
        emit(out, RfnyTokens(m.forward_tokenize(&l)?));
        Ok(())
    })
}

/// Finest-scale `[H, W, d]` latent rebuilt from tokens.
#[no_mangle]
pub unsafe extern "C" fn rfny_model_detokenize(
    model: *const RfnyModel,
    tokens: *const RfnyTokens,
    out: *mut *mut RfnyGrid,
) -> RfnyStatus {
    guard(|| {
        clear_out(out)?;
        let m = &get(model, "model")?.0;
        emit(
            out,
            RfnyGrid(m.detokenize(&get(tokens, "tokens")?.0)?.values),
        );
        Ok(())
    })
}

/// Exact teacher-forced log-likelihood in nats.
#[no_mangle]
pub unsafe extern "C" fn rfny_model_log_likelihood(
    model: *const RfnyModel,
    tokens: *const RfnyTokens,
    out: *mut f64,
) -> RfnyStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let m = &get(model, "model")?.0;
        *out = m.log_likelihood(&get(tokens, "tokens")?.0)?;
        Ok(())
    })
}

/// Samples one token pyramid coarse to fine. Any of the out-pointers may be
/// NULL to skip that result; `out_stages` receives the number of
/// categorical stages run.
#[no_mangle]
pub unsafe extern "C" fn rfny_model_generate(
    model: *const RfnyModel,
    seed: u64,
    temperature: f64,
    out_tokens: *mut *mut RfnyTokens,
    out_latent: *mut *mut RfnyGrid,
    out_stages: *mut usize,
) -> RfnyStatus {
    guard(|| {
        if !out_tokens.is_null() {
            *out_tokens = ptr::null_mut();
        }
        if !out_latent.is_null() {
            *out_latent = ptr::null_mut();
        }
        let m = &get(model, "model")?.0;
        let g = m.generate(&mut RngStream::new(seed, 0), temperature)?;
        if !out_stages.is_null() {
            *out_stages = g.stages;
        }
        if !out_latent.is_null() {
            emit(out_latent, RfnyGrid(g.latent.values));
        }
        if !out_tokens.is_null() {
            emit(out_tokens, RfnyTokens(g.tokens));
        }
        Ok(())
    })
}

/// Builds a token pyramid from `scales + 1` maps: residual levels
/// `0..scales` finest first, then the base. Map `i` is
/// `heights[i] × widths[i]` and its codes follow the previous map's in
/// `codes`.
#[no_mangle]
pub unsafe extern "C" fn rfny_tokens_new(
    scales: usize,
    heights: *const usize,
    widths: *const usize,
    codes: *const usize,
    codes_len: usize,
    out: *mut *mut RfnyTokens,
) -> RfnyStatus {
    guard(|| {
        clear_out(out)?;
        let hs = slice(heights, scales + 1, "heights")?;
        let ws = slice(widths, scales + 1, "widths")?;
        let all = slice(codes, codes_len, "codes")?;
        let need: usize = hs.iter().zip(ws).map(|(h, w)| h * w).sum();
        if need != codes_len {
            return Err(Error::Input(format!("maps hold {need} codes, {codes_len} given")).into());
        }
        let mut maps = Vec::with_capacity(scales + 1);
        let mut at = 0;
        for (&h, &w) in hs.iter().zip(ws) {
            maps.push(TokenMap::new(h, w, all[at..at + h * w].to_vec())?);
            at += h * w;
        }
        let base = maps.pop().expect("scales + 1 maps");
        maps.reverse();
        emit(
            out,
            RfnyTokens(TokenPyramid {
                base,
                residuals: maps,
            }),
        );
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rfny_tokens_free(tokens: *mut RfnyTokens) {
    free(tokens)
}

/// Number of residual maps `S`; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn rfny_tokens_scales(tokens: *const RfnyTokens) -> usize {
    tokens.as_ref().map_or(0, |t| t.0.scales())
}

unsafe fn level_map<'a>(tokens: *const RfnyTokens, level: usize) -> Result<&'a TokenMap, Fail> {
    let t = &get(tokens, "tokens")?.0;
    let s = t.scales();
    match level {
        l if l < s => Ok(t.residual(l)),
        l if l == s => Ok(&t.base),
        l => Err(Error::Input(format!("level {l} out of range 0..={s}")).into()),
    }
}

/// Height and width of the map at `level` (`S` is the base).
#[no_mangle]
pub unsafe extern "C" fn rfny_tokens_map_shape(
    tokens: *const RfnyTokens,
    level: usize,
    height: *mut usize,
    width: *mut usize,
) -> RfnyStatus {
    guard(|| {
        if height.is_null() || width.is_null() {
            return Err(Fail::Null("height/width"));
        }
        let m = level_map(tokens, level)?;
        *height = m.height;
        *width = m.width;
        Ok(())
    })
}

/// Copies the row-major codes of the map at `level` (`S` is the base).
#[no_mangle]
pub unsafe extern "C" fn rfny_tokens_codes(
    tokens: *const RfnyTokens,
    level: usize,
    out: *mut usize,
    capacity: usize,
) -> RfnyStatus {
    guard(|| fill(&level_map(tokens, level)?.codes, out, capacity))
}
