#ifndef FLOWSEG_H
#define FLOWSEG_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FsStatus {
  FS_STATUS_OK = 0,
  FS_STATUS_NULL_POINTER = 1,
  FS_STATUS_INVALID_ARGUMENT = 2,
  FS_STATUS_INVALID_LABEL = 3,
  FS_STATUS_SHAPE = 4,
  FS_STATUS_FORMAT = 5,
  FS_STATUS_UNSUPPORTED = 6,
  FS_STATUS_LENGTH = 7,
  FS_STATUS_DATA = 8,
  FS_STATUS_IO = 9,
  /**
   * The requested quantity is undefined, e.g. a mean over no classes.
   */
  FS_STATUS_UNDEFINED = 10,
  FS_STATUS_PANIC = 11,
  FS_STATUS_OTHER = 12,
} FsStatus;

/**
 * Confusion matrix handle.
 */
typedef struct FsConfusion FsConfusion;

/**
 * Optical flow handle.
 */
typedef struct FsFlow FsFlow;

/**
 * Label map handle.
 */
typedef struct FsLabelMap FsLabelMap;

/**
 * Float plane handle, used for per-pixel confidences.
 */
typedef struct FsPlane FsPlane;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *fs_last_error(void);

/**
 * Creates a label map from `width * height` row-major bytes.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` must be writable.
 */
enum FsStatus fs_label_map_new(size_t width,
                               size_t height,
                               const uint8_t *data,
                               size_t len,
                               uint8_t num_classes,
                               struct FsLabelMap **out);

/**
 * Reads an 8-bit grayscale PNG label map.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum FsStatus fs_label_map_read_png(const char *path, uint8_t num_classes, struct FsLabelMap **out);

/**
 * # Safety
 * `map` must be a live handle and `path` a NUL-terminated string.
 */
enum FsStatus fs_label_map_write_png(const struct FsLabelMap *map, const char *path);

/**
 * Width, height and a borrowed pointer to the row-major labels. The data
 * pointer is valid until the handle is freed.
 *
 * # Safety
 * `map` must be a live handle; each output pointer may be null.
 */
enum FsStatus fs_label_map_view(const struct FsLabelMap *map,
                                size_t *width,
                                size_t *height,
                                const uint8_t **data);

/**
 * # Safety
 * `map` must be null or a handle not yet freed.
 */
void fs_label_map_free(struct FsLabelMap *map);

/**
 * Creates a flow field from `len = width * height` displacements per axis.
 *
 * # Safety
 * `dx` and `dy` must each point to `len` floats and `out` be writable.
 */
enum FsStatus fs_flow_new(size_t width,
                          size_t height,
                          const float *dx,
                          const float *dy,
                          size_t len,
                          struct FsFlow **out);

/**
 * Reads a Middlebury `.flo` file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum FsStatus fs_flow_read(const char *path, struct FsFlow **out);

/**
 * # Safety
 * `flow` must be a live handle and `path` a NUL-terminated string.
 */
enum FsStatus fs_flow_write(const struct FsFlow *flow, const char *path);

/**
 * # Safety
 * `flow` must be null or a handle not yet freed.
 */
void fs_flow_free(struct FsFlow *flow);

/**
 * # Safety
 * `data` must point to `len` floats and `out` be writable.
 */
enum FsStatus fs_plane_new(size_t width,
                           size_t height,
                           const float *data,
                           size_t len,
                           struct FsPlane **out);

/**
 * Reads a grayscale little-endian PFM file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum FsStatus fs_plane_read_pfm(const char *path, struct FsPlane **out);

/**
 * # Safety
 * `plane` must be a live handle and `path` a NUL-terminated string.
 */
enum FsStatus fs_plane_write_pfm(const struct FsPlane *plane, const char *path);

/**
 * # Safety
 * `plane` must be null or a handle not yet freed.
 */
void fs_plane_free(struct FsPlane *plane);

/**
 * Warps `labels` with nearest sampling. When `validity` is non-null it
 * receives one byte per pixel, 1 where the sample stayed in bounds.
 *
 * # Safety
 * Handles must be live; `validity` must be null or hold `width * height`
 * writable bytes; `out` must be writable.
 */
enum FsStatus fs_propagate_labels(const struct FsLabelMap *labels,
                                  const struct FsFlow *flow,
                                  struct FsLabelMap **out,
                                  uint8_t *validity);

/**
 * # Safety
 * Handles must be live and `out` writable.
 */
enum FsStatus fs_refine_consistency(const struct FsLabelMap *pl_t,
                                    const struct FsLabelMap *pl_tpk,
                                    const struct FsFlow *flow,
                                    struct FsLabelMap **out);

/**
 * # Safety
 * Handles must be live and `out` writable.
 */
enum FsStatus fs_refine_max_confidence(const struct FsLabelMap *pl_t,
                                       const struct FsPlane *conf_t,
                                       const struct FsLabelMap *pl_tpk,
                                       const struct FsPlane *conf_tpk,
                                       const struct FsFlow *flow,
                                       struct FsLabelMap **out);

/**
 * Warps the neighbouring labels onto frame `t`; pass forward or backward
 * flow to choose the direction.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum FsStatus fs_refine_warp_frame(const struct FsLabelMap *pl_tpk,
                                   const struct FsFlow *flow,
                                   struct FsLabelMap **out);

/**
 * # Safety
 * Handles must be live and `out` writable.
 */
enum FsStatus fs_refine_oracle(const struct FsLabelMap *pl_t,
                               const struct FsLabelMap *gt_t,
                               struct FsLabelMap **out);

/**
 * Fraction of pixels that are not ignore.
 *
 * # Safety
 * `map` must be live and `out` writable.
 */
enum FsStatus fs_retained_fraction(const struct FsLabelMap *map, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum FsStatus fs_confusion_new(uint8_t num_classes, struct FsConfusion **out);

/**
 * Adds the pixels of `pred` against `gt` to `acc`.
 *
 * # Safety
 * Handles must be live and `acc` not aliased by another call.
 */
enum FsStatus fs_confusion_accumulate(struct FsConfusion *acc,
                                      const struct FsLabelMap *pred,
                                      const struct FsLabelMap *gt);

/**
 * A new matrix holding the sum of `a` and `b`.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum FsStatus fs_confusion_merge(const struct FsConfusion *a,
                                 const struct FsConfusion *b,
                                 struct FsConfusion **out);

/**
 * Mean IoU and class-average accuracy, in percent, over the `n` classes in
 * `universe`, or over every class when `universe` is null. Classes with an
 * empty union are skipped. Returns `Undefined` when no class is scored.
 *
 * # Safety
 * `acc` must be live; `universe` null or `n` readable bytes; `miou` and
 * `class_avg_acc` writable or null.
 */
enum FsStatus fs_confusion_miou(const struct FsConfusion *acc,
                                const uint8_t *universe,
                                size_t n,
                                double *miou,
                                double *class_avg_acc);

/**
 * # Safety
 * `acc` must be null or a handle not yet freed.
 */
void fs_confusion_free(struct FsConfusion *acc);

/**
 * Rare-class sampling probabilities for `n` class frequencies, written to
 * `out`.
 *
 * # Safety
 * `freqs` must hold `n` readable doubles and `out` `n` writable doubles.
 */
enum FsStatus fs_rcs_distribution(const double *freqs, size_t n, double temperature, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWSEG_H */
