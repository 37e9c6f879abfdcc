/* C API for the IET super-resolution library.
 *
 * Every function returns an iet_status; IET_OK is 0. On failure,
 * iet_last_error() returns a thread-local message describing what went
 * wrong. Handles are opaque and must be released with the matching _free
 * call. All functions are safe to call from multiple threads as long as a
 * given handle is used by one thread at a time.
 */
#ifndef IET_C_H
#define IET_C_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define IET_API __declspec(dllexport)
#else
#define IET_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum iet_status {
  IET_OK = 0,
  IET_ERR_INVALID_ARG = 1,
  IET_ERR_CONFIG = 2,
  IET_ERR_DIMENSION = 3,
  IET_ERR_PARSE = 4,
  IET_ERR_IO = 5,
  IET_ERR_CANDIDATE = 6,
  IET_ERR_NUMERIC = 7,
  IET_ERR_USAGE = 8,
  IET_ERR_VERIFY_FAILED = 9,
  IET_ERR_INTERNAL = 10
} iet_status;

IET_API const char* iet_status_name(iet_status s);
IET_API const char* iet_last_error(void);

/* Worker threads for internal parallel loops. 0 forces the sequential
 * reference mode; results are bit-identical either way. The IEA_THREADS
 * environment variable sets the initial value. */
IET_API void iet_set_threads(int n);
IET_API int iet_threads(void);

/* ---- candidate sets ---------------------------------------------------- */

typedef struct iet_candidates_s iet_candidates;

IET_API iet_status iet_dlsg_init(int height, int width, int window,
                                 int dilation, iet_candidates** out);
IET_API iet_status iet_candidates_load(const char* path, iet_candidates** out);
IET_API iet_status iet_candidates_save(const iet_candidates* c,
                                       const char* path);
IET_API int iet_candidates_rows(const iet_candidates* c);
IET_API int iet_candidates_width(const iet_candidates* c);
IET_API int iet_candidates_length(const iet_candidates* c, int row);
/* Copies row indices into out (capacity cap); *written gets the count. */
IET_API iet_status iet_candidates_row(const iet_candidates* c, int row,
                                      int32_t* out, int cap, int* written);
IET_API uint64_t iet_candidates_hash(const iet_candidates* c);
/* Length histogram as "length count" lines; truncates to cap-1 chars. */
IET_API iet_status iet_candidates_stats(const iet_candidates* c, char* buf,
                                        size_t cap);
IET_API void iet_candidates_free(iet_candidates* c);

/* ---- model ------------------------------------------------------------- */

typedef struct iet_model_s iet_model;

/* config_text is flat key=value lines (see README); later keys override
 * earlier ones, so append CLI overrides to the file contents. */
IET_API iet_status iet_model_create(const char* config_text, uint64_t seed,
                                    iet_model** out);
IET_API iet_status iet_model_load(const char* checkpoint_path,
                                  iet_model** out);
IET_API iet_status iet_model_save(const iet_model* m, const char* path);
IET_API int64_t iet_model_param_count(const iet_model* m);
IET_API iet_status iet_model_config_json(const iet_model* m, char* buf,
                                         size_t cap);

/* Super-resolve an image file at the given dilation (0 = config default). */
IET_API iet_status iet_model_sr_file(iet_model* m, const char* lr_path,
                                     int dilation, const char* out_path);

/* Train on one image (treated as the HR target; LR is synthesized by the
 * pinned bicubic downscale) for `steps` deterministic steps. Writes a JSON
 * report when report_json_path is non-NULL. Outputs may be NULL. */
IET_API iet_status iet_model_train_toy(iet_model* m, const char* image_path,
                                       int steps, const char* report_json_path,
                                       double* final_psnr_db,
                                       double* bicubic_psnr_db);

IET_API void iet_model_free(iet_model* m);

/* ---- verification ------------------------------------------------------ */

/* Runs a named property suite ("dense", "expand", "sparsify", "dlsg",
 * "grad", "threading", "io", "all"). tol_overrides is a comma-separated
 * key=value list (e.g. "dense_tol=1e-9") or NULL. Writes a JSON report when
 * report_json_path is non-NULL; human-readable lines land in text_out.
 * Returns IET_ERR_VERIFY_FAILED when any property fails; first_fail then
 * names the first failing property. */
IET_API iet_status iet_verify(const char* suite, uint64_t seed,
                              const char* tol_overrides,
                              const char* report_json_path, char* text_out,
                              size_t text_cap, char* first_fail,
                              size_t first_fail_cap);

/* ---- benchmark ---------------------------------------------------------- */

IET_API iet_status iet_bench(const int32_t* n_values, int n_count,
                             const int32_t* k_values, int k_count,
                             int head_dim, int reps, int use_f32,
                             const char* report_json_path, char* table_out,
                             size_t table_cap);

/* ---- visualization ------------------------------------------------------ */

IET_API iet_status iet_visualize_dump(const char* dump_path, int token_r,
                                      int token_c, const char* out_image);
/* Writes one raster per layer under out_prefix; *files_written gets the
 * count. */
IET_API iet_status iet_visualize_model(iet_model* m, const char* image_path,
                                       int dilation, int token_r, int token_c,
                                       const char* out_prefix,
                                       int* files_written);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* IET_C_H */
