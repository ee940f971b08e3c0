#ifndef VQVC_H
#define VQVC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VqvcStatus {
  VQVC_STATUS_OK = 0,
  VQVC_STATUS_NULL_ARGUMENT = 1,
  VQVC_STATUS_INVALID_ARGUMENT = 2,
  VQVC_STATUS_IO = 3,
  VQVC_STATUS_FORMAT = 4,
  VQVC_STATUS_CONTRACT = 5,
  VQVC_STATUS_NUMERIC = 6,
  VQVC_STATUS_BUFFER_TOO_SMALL = 7,
  VQVC_STATUS_PANIC = 8,
} VqvcStatus;

// A trained converter and the postprocessing it was trained with.
typedef struct VqvcConverter VqvcConverter;

// Converted acoustic frames, `frames × dim`, row-major.
typedef struct VqvcFeatures VqvcFeatures;

// Quantizer indices for one signal, frame-level, `frames × groups`.
typedef struct VqvcIndices VqvcIndices;

// A trained quantizer.
typedef struct VqvcQuantizer VqvcQuantizer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *vqvc_last_error(void);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum VqvcStatus vqvc_quantizer_load(const char *path, struct VqvcQuantizer **out);

// # Safety
// `q` must come from [`vqvc_quantizer_load`] and not be used afterwards. Null is ignored.
void vqvc_quantizer_free(struct VqvcQuantizer *q);

// Quantizer indices of `signal[..len]`.
//
// # Safety
// `q` must be a live handle, `signal` must point to `len` floats and `out` be valid.
enum VqvcStatus vqvc_quantize(const struct VqvcQuantizer *q,
                              const float *signal,
                              size_t len,
                              struct VqvcIndices **out);

// # Safety
// `idx` must be a live handle; `frames` and `groups` may be null.
enum VqvcStatus vqvc_indices_shape(const struct VqvcIndices *idx, size_t *frames, size_t *groups);

// Copies the indices, frame-major, into `buf[..cap]`. `needed` (nullable)
// receives the required length; a short buffer yields `BufferTooSmall`.
//
// # Safety
// `idx` must be a live handle and `buf` writable for `cap` values.
enum VqvcStatus vqvc_indices_copy(const struct VqvcIndices *idx,
                                  uint32_t *buf,
                                  size_t cap,
                                  size_t *needed);

// # Safety
// `idx` must come from [`vqvc_quantize`] and not be used afterwards. Null is ignored.
void vqvc_indices_free(struct VqvcIndices *idx);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum VqvcStatus vqvc_converter_load(const char *path, struct VqvcConverter **out);

// Name of the postprocessing the converter was trained with
// (`none`, `separate`, `combine` or `combine+separate`). Static storage.
//
// # Safety
// `c` must be a live handle or null (which yields null).
const char *vqvc_converter_postprocess(const struct VqvcConverter *c);

// # Safety
// `c` must come from [`vqvc_converter_load`] and not be used afterwards. Null is ignored.
void vqvc_converter_free(struct VqvcConverter *c);

// Converts `signal[..len]` to target-voice frames. The quantizer must have
// the codebook shape the converter was trained on (`Contract` otherwise).
//
// # Safety
// Handles must be live, `signal` must point to `len` floats and `out` be valid.
enum VqvcStatus vqvc_convert(const struct VqvcConverter *c,
                             const struct VqvcQuantizer *q,
                             const float *signal,
                             size_t len,
                             struct VqvcFeatures **out);

// Shape of converted frames; `truncated` is set to 1 when decoding hit the
// length cap without predicting a stop. Any output pointer may be null.
//
// # Safety
// `f` must be a live handle.
enum VqvcStatus vqvc_features_shape(const struct VqvcFeatures *f,
                                    size_t *frames,
                                    size_t *dim,
                                    int32_t *truncated);

// Copies the frames, row-major, into `buf[..cap]`. `needed` (nullable)
// receives the required length; a short buffer yields `BufferTooSmall`.
//
// # Safety
// `f` must be a live handle and `buf` writable for `cap` values.
enum VqvcStatus vqvc_features_copy(const struct VqvcFeatures *f,
                                   float *buf,
                                   size_t cap,
                                   size_t *needed);

// # Safety
// `f` must come from [`vqvc_convert`] and not be used afterwards. Null is ignored.
void vqvc_features_free(struct VqvcFeatures *f);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VQVC_H */
