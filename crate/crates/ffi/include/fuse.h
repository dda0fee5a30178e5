#ifndef FUSE_H
#define FUSE_H

/* Generated by cbindgen from crates/ffi. Do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Spectral reduction selector for [`fuse_spectral_features`].
typedef enum FuseReduction {
  FUSE_REDUCTION_AXIS_PROFILES = 0,
  FUSE_REDUCTION_SCALAR_STATS = 1,
} FuseReduction;

// Result codes shared by every entry point.
typedef enum FuseStatus {
  FUSE_STATUS_OK = 0,
  FUSE_STATUS_NULL_ARGUMENT = 1,
  FUSE_STATUS_INVALID_ARGUMENT = 2,
  FUSE_STATUS_IO = 3,
  FUSE_STATUS_CORRUPT_CHECKPOINT = 4,
  FUSE_STATUS_CONFIG_MISMATCH = 5,
  FUSE_STATUS_IMAGE_DECODE = 6,
  FUSE_STATUS_ENCODER = 7,
  FUSE_STATUS_BUFFER_TOO_SMALL = 8,
  FUSE_STATUS_RUNTIME = 9,
} FuseStatus;

// A loaded checkpoint plus its encoder.
typedef struct FuseDetector FuseDetector;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *fuse_version(void);

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next call into the library from the same thread.
const char *fuse_last_error_message(void);

// Loads a checkpoint and the encoder recorded in it.
//
// # Safety
// `checkpoint_path` must be a NUL-terminated string; `out` must be writable.
enum FuseStatus fuse_detector_open(const char *checkpoint_path, struct FuseDetector **out);

// Releases a detector. NULL is ignored.
//
// # Safety
// `det` must come from [`fuse_detector_open`] and not be used afterwards.
void fuse_detector_free(struct FuseDetector *det);

// Length of the fused feature vector the detector's classifier expects.
//
// # Safety
// `det` must be a live detector or NULL (returns 0).
uintptr_t fuse_detector_input_dim(const struct FuseDetector *det);

// Scores a PNG/JPEG file: probability in `[0, 1]` that it is generated.
//
// # Safety
// `det` must be live, `path` NUL-terminated, `out_score` writable.
enum FuseStatus fuse_detector_score_file(const struct FuseDetector *det,
                                         const char *path,
                                         double *out_score);

// Scores an 8-bit image held in memory (row-major, interleaved, 1 or 3
// channels). The image is resized to the model resolution first.
//
// # Safety
// `data` must hold `width * height * channels` bytes; `out_score` writable.
enum FuseStatus fuse_detector_score_pixels(const struct FuseDetector *det,
                                           const uint8_t *data,
                                           uintptr_t width,
                                           uintptr_t height,
                                           uintptr_t channels,
                                           double *out_score);

// Spectral feature vector of an 8-bit image after standardization.
// `*out_len` receives the number of values; when `out` is NULL or
// `capacity` is too small only the length is reported.
//
// # Safety
// `data` must hold `width * height * channels` bytes; `out` (if not NULL)
// must have room for `capacity` doubles; `out_len` must be writable.
enum FuseStatus fuse_spectral_features(const uint8_t *data,
                                       uintptr_t width,
                                       uintptr_t height,
                                       uintptr_t channels,
                                       enum FuseReduction reduction,
                                       double *out,
                                       uintptr_t capacity,
                                       uintptr_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUSE_H */
