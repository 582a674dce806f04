#ifndef EDITJPEG_H
#define EDITJPEG_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EjStatus {
  EJ_STATUS_OK = 0,
  EJ_STATUS_NULL_POINTER = 1,
  EJ_STATUS_INVALID_ARGUMENT = 2,
  EJ_STATUS_IO = 3,
  EJ_STATUS_FORMAT = 4,
  EJ_STATUS_INTERNAL = 5,
} EjStatus;

/**
 * A trained model loaded from a checkpoint.
 */
typedef struct EjModel EjModel;

/**
 * Bytes owned by the library.
 */
typedef struct EjBuffer {
  uint8_t *data;
  size_t len;
} EjBuffer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the last failure on this thread; empty after success.
 * The pointer stays valid until the next library call on this thread.
 */
const char *ej_last_error(void);

/**
 * Encodes interleaved RGB (`width * height * 3` bytes) with the standard
 * tables scaled to `quality` (1 to 100).
 *
 * # Safety
 * `rgb` must point to `width * height * 3` readable bytes and `out` to a
 * writable `EjBuffer`.
 */
enum EjStatus ej_encode_rgb(const uint8_t *rgb,
                            size_t width,
                            size_t height,
                            uint8_t quality,
                            struct EjBuffer *out);

/**
 * Decodes a baseline JPEG into interleaved RGB.
 *
 * # Safety
 * `jpeg` must point to `len` readable bytes; the remaining pointers must
 * be writable.
 */
enum EjStatus ej_decode_rgb(const uint8_t *jpeg,
                            size_t len,
                            struct EjBuffer *out,
                            size_t *width,
                            size_t *height);

/**
 * Releases a buffer returned by the library and resets it to empty.
 * Passing an empty or null buffer is a no-op.
 *
 * # Safety
 * `buf` must be null or hold a buffer returned by this library that has
 * not been freed.
 */
void ej_buffer_free(struct EjBuffer *buf);

/**
 * Loads a checkpoint written by the trainer.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum EjStatus ej_model_load(const char *path, struct EjModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`ej_model_load`] not yet freed.
 */
void ej_model_free(struct EjModel *model);

/**
 * Encodes interleaved RGB with the model's edits and learned tables. The
 * result is an ordinary baseline JPEG.
 *
 * # Safety
 * As for [`ej_encode_rgb`]; `model` must be a live handle.
 */
enum EjStatus ej_model_encode_rgb(const struct EjModel *model,
                                  const uint8_t *rgb,
                                  size_t width,
                                  size_t height,
                                  struct EjBuffer *out);

/**
 * Copies the exported luma and chroma tables, 64 entries each in natural
 * row-major order.
 *
 * # Safety
 * `luma` and `chroma` must each point to 64 writable bytes.
 */
enum EjStatus ej_model_qtables(const struct EjModel *model, uint8_t *luma, uint8_t *chroma);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EDITJPEG_H */
