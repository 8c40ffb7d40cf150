/* C interface for the prototype-attention segmentation pipeline. */

#ifndef DPAT_H
#define DPAT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum DpatStatus {
  DPAT_STATUS_OK = 0,
  /**
   * An argument was out of range or otherwise unusable.
   */
  DPAT_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Filesystem failure; details go to stderr.
   */
  DPAT_STATUS_IO = 2,
  /**
   * On-disk data failed validation.
   */
  DPAT_STATUS_VALIDATION = 3,
  /**
   * An API contract was violated.
   */
  DPAT_STATUS_CONTRACT = 4,
  /**
   * A required pointer was NULL.
   */
  DPAT_STATUS_NULL_POINTER = 5,
  /**
   * A string argument was not valid UTF-8.
   */
  DPAT_STATUS_UTF8 = 6,
  /**
   * The callee panicked; state may be inconsistent.
   */
  DPAT_STATUS_PANIC = 7,
} DpatStatus;

/**
 * Opaque trained-model handle.
 */
typedef struct DpatModel DpatModel;

/**
 * Model architecture and initialization knobs. `height`/`width` must be
 * divisible by 16 and match the data the model will consume.
 */
typedef struct DpatModelConfig {
  uint32_t height;
  uint32_t width;
  bool use_ima;
  bool use_ifa;
  bool ima_prototypes;
  bool ifa_prototypes;
  bool channel_softmax;
  bool ima_channel_fc;
  bool fuse_relu;
  uint32_t n_refs;
  uint64_t seed;
} DpatModelConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code.
 */
const char *dpat_status_message(enum DpatStatus status);

/**
 * Library version as a static string.
 */
const char *dpat_version(void);

/**
 * Fills `out` with the default 64×64 configuration (all blocks enabled,
 * prototypes on, 4 reference frames).
 *
 * # Safety
 * `out` must be valid for writes of one `DpatModelConfig`.
 */
enum DpatStatus dpat_model_config_default(struct DpatModelConfig *out);

/**
 * Creates a freshly initialized model.
 *
 * # Safety
 * `cfg` and `out` must be valid; on success `*out` owns the handle.
 */
enum DpatStatus dpat_model_create(const struct DpatModelConfig *cfg, struct DpatModel **out);

/**
 * Creates a model of the given configuration and loads checkpoint weights
 * into it. The configuration must match the one the checkpoint was trained
 * with; mismatches surface as `Validation`.
 *
 * # Safety
 * `path`, `cfg` and `out` must be valid; on success `*out` owns the handle.
 */
enum DpatStatus dpat_model_load(const char *path,
                                const struct DpatModelConfig *cfg,
                                struct DpatModel **out);

/**
 * Saves the model's parameters as a checkpoint.
 *
 * # Safety
 * `model` must be a live handle from this library; `path` a valid string.
 */
enum DpatStatus dpat_model_save(const struct DpatModel *model, const char *path);

/**
 * Total trainable scalar count; 0 for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
uint64_t dpat_model_param_count(const struct DpatModel *model);

/**
 * Frees a model handle; NULL is a no-op.
 *
 * # Safety
 * `model` must be NULL or an unfreed handle from this library.
 */
void dpat_model_free(struct DpatModel *model);

/**
 * Uniformly spaced reference-frame indices (first frame only for n = 1).
 * `out` receives `n_refs` values.
 *
 * # Safety
 * `out` must be valid for `n_refs` writes.
 */
enum DpatStatus dpat_sample_frame_indices(uint32_t video_len, uint32_t n_refs, uint32_t *out);

/**
 * Renders a synthetic dataset to `root` (see the on-disk layout in the
 * project README). Deterministic in `seed`.
 *
 * # Safety
 * `root` must be a valid string.
 */
enum DpatStatus dpat_generate_dataset(const char *root,
                                      uint64_t seed,
                                      uint32_t n_videos,
                                      uint32_t len,
                                      uint32_t height,
                                      uint32_t width,
                                      double difficulty);

/**
 * Number of videos listed in a dataset manifest.
 *
 * # Safety
 * `root` and `out` must be valid.
 */
enum DpatStatus dpat_dataset_video_count(const char *root, uint32_t *out);

/**
 * Manifest entry for one video: id (NUL-terminated, truncated to the
 * buffer) plus frame count and resolution.
 *
 * # Safety
 * `id_buf` must be valid for `id_buf_len` bytes; the out pointers for one
 * write each.
 */
enum DpatStatus dpat_dataset_video_info(const char *root,
                                        uint32_t index,
                                        char *id_buf,
                                        uint32_t id_buf_len,
                                        uint32_t *out_len,
                                        uint32_t *out_height,
                                        uint32_t *out_width);

/**
 * Segments one dataset video. `masks_out` receives `len·height·width`
 * bytes of 0/1, frame-major; `masks_capacity` must be at least that.
 *
 * # Safety
 * `model`, `root`, `video_id` must be valid; `masks_out` writable for
 * `masks_capacity` bytes.
 */
enum DpatStatus dpat_infer_video(const struct DpatModel *model,
                                 const char *root,
                                 const char *video_id,
                                 uint32_t n_refs,
                                 uint8_t *masks_out,
                                 uint64_t masks_capacity);

/**
 * Scores a predicted mask sequence against ground truth. Both buffers hold
 * `frames·height·width` bytes of 0/1, frame-major. Writes mean region
 * similarity J, boundary accuracy F, and their mean G.
 *
 * # Safety
 * The mask buffers must be valid for the stated size, the out pointers for
 * one write each.
 */
enum DpatStatus dpat_evaluate_masks(const uint8_t *pred,
                                    const uint8_t *gt,
                                    uint32_t frames,
                                    uint32_t height,
                                    uint32_t width,
                                    double *out_j,
                                    double *out_f,
                                    double *out_g);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPAT_H */
