/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef EKVNET_H
#define EKVNET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EkvStatus {
  EKV_STATUS_OK = 0,
  EKV_STATUS_NULL_POINTER = 1,
  EKV_STATUS_INVALID_ARGUMENT = 2,
  EKV_STATUS_IO = 3,
  EKV_STATUS_PARSE = 4,
  EKV_STATUS_INVALID_MODEL = 5,
  EKV_STATUS_BUFFER_TOO_SMALL = 6,
  EKV_STATUS_PANIC = 7,
} EkvStatus;

/**
 * Opaque model handle.
 */
typedef struct EkvModel EkvModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a model file. On success `*out` owns a new handle.
 */
enum EkvStatus ekv_model_load(const char *path, struct EkvModel **out);

/**
 * Parses a model from its JSON text.
 */
enum EkvStatus ekv_model_from_json(const char *json, struct EkvModel **out);

/**
 * Releases a handle. Null is ignored.
 */
void ekv_model_free(struct EkvModel *model);

/**
 * Drain current (A), transconductance and output conductance (A/V).
 * Any of the output pointers may be null.
 */
enum EkvStatus ekv_model_ids(const struct EkvModel *model,
                             double v_gs,
                             double v_ds,
                             double *i_ds,
                             double *g_m,
                             double *g_ds);

/**
 * The neural correction factor alone.
 */
enum EkvStatus ekv_model_eps(const struct EkvModel *model, double v_gs, double v_ds, double *eps);

/**
 * Core-model current for explicit parameters.
 */
enum EkvStatus ekv_core_ids(double p,
                            double v_ss,
                            double v_t,
                            double beta,
                            double v_gs,
                            double v_ds,
                            double *i_ds);

/**
 * Writes the VerilogA text, NUL-terminated, into `buf`. `*needed` (if not
 * null) receives the buffer size required including the terminator; when
 * `len` is smaller the call returns `BUFFER_TOO_SMALL` and writes nothing.
 * `exp_tanh` nonzero selects the exp-based tanh.
 */
enum EkvStatus ekv_model_export_veriloga(const struct EkvModel *model,
                                         const char *module_name,
                                         int exp_tanh,
                                         char *buf,
                                         size_t len,
                                         size_t *needed);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`) and returns its full length plus one.
 */
size_t ekv_last_error_message(char *buf, size_t len);

/**
 * Library version, a static NUL-terminated string.
 */
const char *ekv_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EKVNET_H */
