#ifndef UNIMOD_H
#define UNIMOD_H

/* C interface to the unimod core. All handles are opaque; every call returns a status code and,
 * on failure, leaves a message retrievable with unimod_last_error() on the calling thread. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define UNIMOD_API __declspec(dllexport)
#else
#define UNIMOD_API __attribute__((visibility("default")))
#endif

typedef enum unimod_status {
    UNIMOD_OK = 0,
    UNIMOD_ERR_INVALID_ARGUMENT = 1,
    UNIMOD_ERR_PARSE = 2,
    UNIMOD_ERR_VALIDATION = 3,
    UNIMOD_ERR_UNSUPPORTED_GENUS = 4,
    UNIMOD_ERR_CHART = 5,
    UNIMOD_ERR_RELATION_MISMATCH = 6,
    UNIMOD_ERR_SOLVER = 7,
    UNIMOD_ERR_DENSE_CAP = 8,
    UNIMOD_ERR_IO = 9,
    UNIMOD_ERR_CONFIG = 10,
    UNIMOD_ERR_INTERNAL = 99
} unimod_status;

typedef enum unimod_system { UNIMOD_UNIVERSAL = 0, UNIMOD_FIBERED = 1, UNIMOD_DIFFERENCE = 2 } unimod_system;

typedef struct unimod_center unimod_center;
typedef struct unimod_tangent unimod_tangent;

typedef struct unimod_center_info {
    int genus;
    int vertices;
    int faces;
    int rank;
    int degree;
    int commutant_dim;
    int kernel_dim;
} unimod_center_info;

UNIMOD_API const char* unimod_version(void);
UNIMOD_API const char* unimod_last_error(void);
UNIMOD_API const char* unimod_status_name(unimod_status s);

/* Genus-2 polygon gluing refined `refinements` times, hyperbolic density, preset bundle. */
UNIMOD_API unimod_status unimod_center_create_preset(const char* preset, int refinements, unimod_center** out);
/* Center described by a JSON config using the same mesh/bundle/solver keys as unimod_run. */
UNIMOD_API unimod_status unimod_center_create_config(const char* config_json, unimod_center** out);
UNIMOD_API void unimod_center_destroy(unimod_center* c);
UNIMOD_API unimod_status unimod_center_info_get(const unimod_center* c, unimod_center_info* out);

/* Harmonic representative drawn from `seed`. */
UNIMOD_API unimod_status unimod_tangent_random(const unimod_center* c, uint64_t seed, double scale, int traceless,
                                               unimod_tangent** out);
UNIMOD_API void unimod_tangent_destroy(unimod_tangent* t);

UNIMOD_API unimod_status unimod_metric(const unimod_center* c, const unimod_tangent* v1, const unimod_tangent* v2,
                                       double* re, double* im);

/* Second variation in the chosen system. `report_json` is optional; free it with unimod_string_free. */
UNIMOD_API unimod_status unimod_second_variation(const unimod_center* c, unimod_system system, const unimod_tangent* v1,
                                                 const unimod_tangent* v2, const unimod_tangent* v3,
                                                 const unimod_tangent* v4, double* re, double* im, char** report_json);

/* Positivity certificate for (mu of v2, nu of v1). */
UNIMOD_API unimod_status unimod_positivity(const unimod_center* c, const unimod_tangent* v2, const unimod_tangent* v1,
                                           double* term_a, double* term_b, double* total);

/* Runs a batch command (check_operators, second_variation, positivity, projector_derivative).
 * `out_json` receives {"report": ..., "artifacts": {file: contents}}; `passed` is 1 when every assertion held. */
UNIMOD_API unimod_status unimod_run(const char* command, const char* config_json, char** out_json, int* passed);

UNIMOD_API void unimod_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif
