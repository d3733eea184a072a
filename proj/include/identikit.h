/* C interface to the identikit library.
 *
 * Every function returns an ik_status. On failure the message is available
 * from ik_last_error() in the calling thread until the next call on that
 * thread. Handles are opaque and must be released with their _free function.
 * Handles are immutable after creation and may be read from several threads.
 */
#ifndef IDENTIKIT_H
#define IDENTIKIT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define IK_API __declspec(dllexport)
#elif defined(__GNUC__)
#define IK_API __attribute__((visibility("default")))
#else
#define IK_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ik_status {
  IK_OK = 0,
  IK_ERR_ARGUMENT = 1,
  IK_ERR_CONFIG = 2,
  IK_ERR_IDENTIFICATION = 3,
  IK_ERR_NUMERICAL = 4,
  IK_ERR_IO = 5,
  IK_ERR_INTERNAL = 6
} ik_status;

IK_API const char* ik_version(void);
IK_API const char* ik_last_error(void);
/* Process exit code for a status: 0, 2 (config), 3 (identification),
 * 4 (numerical). Argument and I/O failures map to 2. */
IK_API int ik_exit_code(ik_status status);

typedef struct ik_config ik_config;

IK_API ik_status ik_config_load(const char* path, ik_config** out);
IK_API ik_status ik_config_parse(const char* json_text, ik_config** out);
IK_API void ik_config_free(ik_config* config);
/* Resolved configuration (defaults expanded) as JSON; valid while the handle
 * lives. */
IK_API const char* ik_config_resolved(const ik_config* config);

typedef struct ik_run_options {
  const char* out_dir;   /* NULL: the config's output directory */
  int has_seed;
  uint64_t seed;
  size_t threads;        /* 0: IDENTIKIT_THREADS, else 1 */
  size_t simulate;       /* estimate only; 0: none */
  const char* data_path; /* estimate only; NULL: none */
} ik_run_options;

IK_API void ik_run_options_init(ik_run_options* options);

/* Runs diagnose | estimate | rates | path | dump-operator. On success the
 * summary (JSON with the written files) is available from ik_last_result(). */
IK_API ik_status ik_run(const char* command, const ik_config* config, const ik_run_options* options);
IK_API const char* ik_last_result(void);

typedef struct ik_operator ik_operator;

IK_API ik_status ik_operator_build(const ik_config* config, int fine, ik_operator** out);
IK_API ik_status ik_operator_load(const char* path, ik_operator** out);
IK_API ik_status ik_operator_save(const ik_operator* op, const char* path);
IK_API void ik_operator_free(ik_operator* op);

IK_API ik_status ik_operator_shape(const ik_operator* op, size_t* rows, size_t* cols);
/* out = S b, with b of length cols and out of length rows. */
IK_API ik_status ik_operator_apply(const ik_operator* op, const double* b, size_t b_len, double* out, size_t out_len);
/* out = S* g in the weighted inner products, g of length rows. */
IK_API ik_status ik_operator_apply_adjoint(const ik_operator* op, const double* g, size_t g_len, double* out,
                                           size_t out_len);
IK_API ik_status ik_operator_weights(const ik_operator* op, int codomain, double* out, size_t out_len);
/* Writes up to `capacity` singular values in decreasing order; *count
 * receives min(rows, cols). */
IK_API ik_status ik_operator_singular_values(const ik_operator* op, double* out, size_t capacity, size_t* count);

#ifdef __cplusplus
}
#endif

#endif /* IDENTIKIT_H */
