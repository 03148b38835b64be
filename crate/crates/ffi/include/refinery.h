#ifndef REFINERY_H
#define REFINERY_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum RfnyStatus {
  RFNY_STATUS_OK = 0,
  RFNY_STATUS_NULL_POINTER = 1,
  RFNY_STATUS_DIMENSION = 2,
  RFNY_STATUS_INPUT = 3,
  RFNY_STATUS_STATE = 4,
  RFNY_STATUS_CONTRACT = 5,
  RFNY_STATUS_PARSE = 6,
  RFNY_STATUS_IO = 7,
  RFNY_STATUS_BUFFER_TOO_SMALL = 8,
  RFNY_STATUS_PANIC = 9,
} RfnyStatus;

/**
 * Dense f64 array, row-major.
 */
typedef struct RfnyGrid RfnyGrid;

/**
 * A fitted coarse-to-fine token model loaded from a checkpoint.
 */
typedef struct RfnyModel RfnyModel;

/**
 * Gaussian and Laplacian levels of one image.
 */
typedef struct RfnyPyramid RfnyPyramid;

/**
 * Token maps of one latent: residual levels `0..S` plus the base at level `S`.
 */
typedef struct RfnyTokens RfnyTokens;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * NUL-terminated crate version. Static storage.
 */
const char *rfny_version(void);

/**
 * NUL-terminated name of a status code. Static storage.
 */
const char *rfny_status_name(enum RfnyStatus status);

/**
 * Copies the calling thread's last error message into `buf` (truncated and
 * always NUL-terminated when `capacity > 0`). Returns the byte length the
 * full message needs including its NUL, or 0 if the last call succeeded.
 */
size_t rfny_last_error_message(char *buf, size_t capacity);

/**
 * Copies `len` values shaped by `shape[0..ndim]` into a new grid.
 */
enum RfnyStatus rfny_grid_new(const size_t *shape,
                              size_t ndim,
                              const double *data,
                              size_t len,
                              struct RfnyGrid **out);

void rfny_grid_free(struct RfnyGrid *grid);

/**
 * Number of axes; 0 for NULL.
 */
size_t rfny_grid_ndim(const struct RfnyGrid *grid);

/**
 * Number of elements; 0 for NULL.
 */
size_t rfny_grid_len(const struct RfnyGrid *grid);

enum RfnyStatus rfny_grid_shape(const struct RfnyGrid *grid, size_t *out, size_t capacity);

/**
 * Row-major values. Borrowed: valid until the grid is freed.
 */
const double *rfny_grid_data(const struct RfnyGrid *grid);

/**
 * `levels`-level pyramid of an `[H, W]` or `[H, W, C]` grid.
 */
enum RfnyStatus rfny_pyramid_build(const struct RfnyGrid *image,
                                   size_t levels,
                                   struct RfnyPyramid **out);

void rfny_pyramid_free(struct RfnyPyramid *pyramid);

/**
 * Number of Laplacian bands `S`; 0 for NULL.
 */
size_t rfny_pyramid_levels(const struct RfnyPyramid *pyramid);

/**
 * Copy of Gaussian level `k` in `0..=S`.
 */
enum RfnyStatus rfny_pyramid_gaussian(const struct RfnyPyramid *pyramid,
                                      size_t k,
                                      struct RfnyGrid **out);

/**
 * Copy of Laplacian band `k` in `0..S`.
 */
enum RfnyStatus rfny_pyramid_laplacian(const struct RfnyPyramid *pyramid,
                                       size_t k,
                                       struct RfnyGrid **out);

enum RfnyStatus rfny_pyramid_reconstruct(const struct RfnyPyramid *pyramid, struct RfnyGrid **out);

/**
 * `[28, 28]` image to its `[14, 14, 4]` space-to-depth latent.
 */
enum RfnyStatus rfny_patch_embed(const struct RfnyGrid *image, struct RfnyGrid **out);

/**
 * Inverse of [`rfny_patch_embed`].
 */
enum RfnyStatus rfny_patch_unembed(const struct RfnyGrid *latent, struct RfnyGrid **out);

enum RfnyStatus rfny_model_load_file(const char *path, struct RfnyModel **out);

enum RfnyStatus rfny_model_load_bytes(const uint8_t *bytes, size_t len, struct RfnyModel **out);

void rfny_model_free(struct RfnyModel *model);

/**
 * Number of residual scales `S`; 0 for NULL.
 */
size_t rfny_model_scales(const struct RfnyModel *model);

/**
 * Codebook size `V`; 0 for NULL.
 */
size_t rfny_model_codes(const struct RfnyModel *model);

/**
 * Tokenizes a finest-scale `[H, W, d]` latent.
 */
enum RfnyStatus rfny_model_tokenize(const struct RfnyModel *model,
                                    const struct RfnyGrid *latent,
                                    struct RfnyTokens **out);

/**
 * Finest-scale `[H, W, d]` latent rebuilt from tokens.
 */
enum RfnyStatus rfny_model_detokenize(const struct RfnyModel *model,
                                      const struct RfnyTokens *tokens,
                                      struct RfnyGrid **out);

/**
 * Exact teacher-forced log-likelihood in nats.
 */
enum RfnyStatus rfny_model_log_likelihood(const struct RfnyModel *model,
                                          const struct RfnyTokens *tokens,
                                          double *out);

/**
 * Samples one token pyramid coarse to fine. Any of the out-pointers may be
 * NULL to skip that result; `out_stages` receives the number of
 * categorical stages run.
 */
enum RfnyStatus rfny_model_generate(const struct RfnyModel *model,
                                    uint64_t seed,
                                    double temperature,
                                    struct RfnyTokens **out_tokens,
                                    struct RfnyGrid **out_latent,
                                    size_t *out_stages);

/**
 * Builds a token pyramid from `scales + 1` maps: residual levels
 * `0..scales` finest first, then the base. Map `i` is
 * `heights[i] × widths[i]` and its codes follow the previous map's in
 * `codes`.
 */
enum RfnyStatus rfny_tokens_new(size_t scales,
                                const size_t *heights,
                                const size_t *widths,
                                const size_t *codes,
                                size_t codes_len,
                                struct RfnyTokens **out);

void rfny_tokens_free(struct RfnyTokens *tokens);

/**
 * Number of residual maps `S`; 0 for NULL.
 */
size_t rfny_tokens_scales(const struct RfnyTokens *tokens);

/**
 * Height and width of the map at `level` (`S` is the base).
 */
enum RfnyStatus rfny_tokens_map_shape(const struct RfnyTokens *tokens,
                                      size_t level,
                                      size_t *height,
                                      size_t *width);

/**
 * Copies the row-major codes of the map at `level` (`S` is the base).
 */
enum RfnyStatus rfny_tokens_codes(const struct RfnyTokens *tokens,
                                  size_t level,
                                  size_t *out,
                                  size_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REFINERY_H */
