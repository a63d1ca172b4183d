#ifndef MBOLAB_H
#define MBOLAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MBOLAB_API __declspec(dllexport)
#else
#define MBOLAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Nonzero values match the library's error categories. */
typedef enum mbolab_status {
  MBOLAB_OK = 0,
  MBOLAB_ERR_INVALID_ARGUMENT = 1,
  MBOLAB_ERR_CONFIG = 2,
  MBOLAB_ERR_NUMERICAL = 3,
  MBOLAB_ERR_INFEASIBLE = 4,
  MBOLAB_ERR_IO = 5,
  MBOLAB_ERR_UNSUPPORTED = 6,
  MBOLAB_ERR_CACHE = 7,
  MBOLAB_ERR_INTERNAL = 99
} mbolab_status;

typedef struct mbolab_cloud mbolab_cloud;
typedef struct mbolab_graph mbolab_graph;
typedef struct mbolab_spectrum mbolab_spectrum;

MBOLAB_API const char* mbolab_version(void);
/* Message of the last failed call on this thread; empty after a success. */
MBOLAB_API const char* mbolab_last_error(void);
/* Process exit code for a status: 0, 2 (config), 3 (numerical/io/cache), 4 (infeasible). */
MBOLAB_API int mbolab_exit_code(mbolab_status status);
MBOLAB_API const char* mbolab_status_name(mbolab_status status);

/* Strings returned through char** are malloc'd; release them with mbolab_string_free. */
MBOLAB_API void mbolab_string_free(char* s);

/* Sampling domain. manifold: "torus" | "sphere"; density: "uniform" | "cosine". */
typedef struct mbolab_domain {
  const char* manifold;
  double side;      /* torus side, ignored for the sphere */
  const char* density;
  double amplitude; /* cosine density only */
  int axis;         /* cosine density only, 0-based */
} mbolab_domain;

MBOLAB_API void mbolab_domain_default(mbolab_domain* d);

MBOLAB_API mbolab_status mbolab_cloud_sample(const mbolab_domain* domain, size_t n, uint64_t seed, mbolab_cloud** out);
MBOLAB_API mbolab_status mbolab_cloud_load(const char* path, mbolab_cloud** out);
/* CSV plus `path.meta.json`. */
MBOLAB_API mbolab_status mbolab_cloud_save(const mbolab_cloud* cloud, const char* path);
MBOLAB_API size_t mbolab_cloud_size(const mbolab_cloud* cloud);
/* Embedding coordinates; the torus fills out[0..1] and sets out[2] = 0. */
MBOLAB_API mbolab_status mbolab_cloud_point(const mbolab_cloud* cloud, size_t i, double out[3]);
MBOLAB_API void mbolab_cloud_free(mbolab_cloud* cloud);

/* kernel: "indicator" | "triangular" | "quadratic"; k is the intrinsic dimension (1..3). */
MBOLAB_API mbolab_status mbolab_kernel_constants(const char* kernel, int k, double* c1, double* c2, double* kappa);

MBOLAB_API mbolab_status mbolab_graph_build(const mbolab_cloud* cloud, double eps, const char* kernel,
                                            mbolab_graph** out);
MBOLAB_API size_t mbolab_graph_size(const mbolab_graph* g);
MBOLAB_API size_t mbolab_graph_edges(const mbolab_graph* g);
MBOLAB_API size_t mbolab_graph_components(const mbolab_graph* g);
MBOLAB_API uint64_t mbolab_graph_hash(const mbolab_graph* g);
MBOLAB_API mbolab_status mbolab_graph_degrees(const mbolab_graph* g, double* out, size_t capacity);
/* Edge list `i,j,w`, degrees `i,d`, JSON metadata. */
MBOLAB_API mbolab_status mbolab_graph_save(const mbolab_graph* g, const char* edges_path, const char* degrees_path,
                                           const char* meta_path);
/* y = e^{-t Delta} u with the full operator; u and y hold mbolab_graph_size values. */
MBOLAB_API mbolab_status mbolab_graph_heat(const mbolab_graph* g, double t, const double* u, double* y);
MBOLAB_API void mbolab_graph_free(mbolab_graph* g);

MBOLAB_API mbolab_status mbolab_spectrum_compute(const mbolab_graph* g, size_t K, double tol, mbolab_spectrum** out);
/* Loads from `cache_dir` when an entry for (graph, K, tol) exists, else computes and stores it. */
MBOLAB_API mbolab_status mbolab_spectrum_cached(const mbolab_graph* g, size_t K, double tol, const char* cache_dir,
                                                int* hit, mbolab_spectrum** out);
MBOLAB_API mbolab_status mbolab_spectrum_save(const mbolab_spectrum* s, const char* path);
/* `g` may be NULL; otherwise the file must belong to that graph. */
MBOLAB_API mbolab_status mbolab_spectrum_load(const char* path, const mbolab_graph* g, mbolab_spectrum** out);
MBOLAB_API size_t mbolab_spectrum_count(const mbolab_spectrum* s);
MBOLAB_API size_t mbolab_spectrum_nodes(const mbolab_spectrum* s);
MBOLAB_API mbolab_status mbolab_spectrum_eigenvalues(const mbolab_spectrum* s, double* out, size_t capacity);
MBOLAB_API mbolab_status mbolab_spectrum_residuals(const mbolab_spectrum* s, double* out, size_t capacity);
/* Eigenvector l (0-based) at all nodes. */
MBOLAB_API mbolab_status mbolab_spectrum_vector(const mbolab_spectrum* s, size_t l, double* out, size_t capacity);
MBOLAB_API void mbolab_spectrum_free(mbolab_spectrum* s);

/* Config-driven run. On failure `<output>/error.json` is written when the output directory is known. */
MBOLAB_API mbolab_status mbolab_run_config(const char* config_path, const char* const* overrides, size_t count);
MBOLAB_API mbolab_status mbolab_study(const char* config_path, const char* const* overrides, size_t count);
MBOLAB_API mbolab_status mbolab_report(const char* const* inputs, size_t count, const char* output);

typedef struct mbolab_schedule_params {
  int k;
  double s;
  double q;
  double c_h;
  double c_eps;
  double delta;
  int desk; /* nonzero: eps just above the corollary lower rate */
} mbolab_schedule_params;

MBOLAB_API void mbolab_schedule_default(mbolab_schedule_params* p);

/* Report for each n. Inadmissible parameters: MBOLAB_ERR_CONFIG and no report. Any infeasible n:
   the report is still produced and the call returns MBOLAB_ERR_INFEASIBLE. */
MBOLAB_API mbolab_status mbolab_validate_schedule(const mbolab_schedule_params* p, const size_t* ns, size_t count,
                                                  int csv_only, char** report);

/* Checks user-chosen (eps, h, K) against the proven and practical inequalities. */
MBOLAB_API mbolab_status mbolab_practical_check(size_t n, double eps, double h, size_t K, int k, int csv_only,
                                                char** report, int* proven, int* practical);

#ifdef __cplusplus
}
#endif

#endif
