#ifndef BODYFIT_H
#define BODYFIT_H

/* C interface to the bodyfit library. All entry points are exception safe:
 * failures come back as a status code and the message is kept in a
 * thread-local buffer readable through bf_last_error(). Out parameters are
 * written only on BF_OK. Handles are freed with the matching *_free call;
 * freeing NULL is a no-op. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BF_API __declspec(dllexport)
#else
#define BF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

enum {
    BF_JOINT_COUNT = 24,
    BF_PARAM_DIM = 85,  /* theta 69 | beta 10 | rot 3 | trans 2 | scale 1 */
    BF_TARGET_DIM = 72  /* per joint: u, v, visibility flag */
};

typedef enum bf_status {
    BF_OK = 0,
    BF_ERR_INVALID_ARGUMENT = 1,
    BF_ERR_CONFIG = 2,
    BF_ERR_DATA = 3,
    BF_ERR_IO = 4,
    BF_ERR_SHAPE_MISMATCH = 5,
    BF_ERR_INVALID_STATE = 6,
    BF_ERR_UNFITTABLE = 7,
    BF_ERR_DEGENERATE = 8,
    BF_ERR_DIVERGENCE = 9,
    BF_ERR_INTERNAL = 10
} bf_status;

typedef struct bf_skeleton bf_skeleton;
typedef struct bf_network bf_network;
typedef struct bf_trace bf_trace;

BF_API const char* bf_version(void);

/* Message for the most recent failing call on this thread. Never NULL;
 * empty string when nothing failed yet. */
BF_API const char* bf_last_error(void);

/* ---- skeleton ------------------------------------------------------- */

BF_API bf_status bf_skeleton_default(uint64_t seed, bf_skeleton** out);
BF_API bf_status bf_skeleton_load(const char* path, bf_skeleton** out);
BF_API bf_status bf_skeleton_save(const bf_skeleton* skel, const char* path);
BF_API bf_status bf_skeleton_joint_count(const bf_skeleton* skel, int32_t* out);
BF_API void bf_skeleton_free(bf_skeleton* skel);

/* ---- update network -------------------------------------------------- */

/* Default architecture, weights drawn from seed. */
BF_API bf_status bf_network_create(uint64_t seed, bf_network** out);
BF_API bf_status bf_network_load(const char* path, bf_network** out);
BF_API bf_status bf_network_save(const bf_network* net, const char* path);
BF_API bf_status bf_network_param_count(const bf_network* net, uint64_t* out);
BF_API void bf_network_free(bf_network* net);

/* ---- model math ------------------------------------------------------ */

/* params85 uses the flatten order noted at BF_PARAM_DIM. Joints come back
 * root-centred, x0 y0 z0 x1 y1 z1 ... */
BF_API bf_status bf_pose_joints(const bf_skeleton* skel, const double* params85,
                                double* out_joints /* 3*BF_JOINT_COUNT */);

/* Weak-perspective projection of the posed skeleton, u0 v0 u1 v1 ... */
BF_API bf_status bf_project(const bf_skeleton* skel, const double* params85,
                            double* out_points /* 2*BF_JOINT_COUNT */);

/* Reprojection loss (mean squared 2D error over visible joints) and its
 * gradient. target72 is u v vis per joint. out_grad may be NULL when only
 * the loss is wanted. */
BF_API bf_status bf_reproj_loss(const bf_skeleton* skel, const double* params85,
                                const double* target72, double* out_loss,
                                double* out_grad /* BF_PARAM_DIM or NULL */);

/* PA-MPJPE / MPJPE between the joints two parameter vectors pose. */
BF_API bf_status bf_pa_mpjpe(const bf_skeleton* skel, const double* pred85,
                             const double* gt85, double* out);
BF_API bf_status bf_mpjpe(const bf_skeleton* skel, const double* pred85,
                          const double* gt85, double* out);

/* ---- fitting --------------------------------------------------------- */

/* Iterative learned fit from the zero state. On BF_ERR_DIVERGENCE no trace
 * is returned. Fewer than 6 visible joints is BF_ERR_UNFITTABLE. */
BF_API bf_status bf_fit(const bf_network* net, const bf_skeleton* skel,
                        const double* target72, int32_t iters, bf_trace** out);

/* Trace indexing: state 0 is the zero start, state iterations is the final
 * estimate. */
BF_API bf_status bf_trace_iterations(const bf_trace* trace, int32_t* out);
BF_API bf_status bf_trace_params(const bf_trace* trace, int32_t state,
                                 double* out_params85);
BF_API bf_status bf_trace_loss(const bf_trace* trace, int32_t state,
                               double* out_loss);
BF_API void bf_trace_free(bf_trace* trace);

/* ---- commands -------------------------------------------------------- */

/* JSON in, JSON out. The returned string is heap allocated; release it with
 * bf_string_free. Key sets match the bodyfit CLI subcommands. */
BF_API bf_status bf_cmd_generate_data(const char* config_json, char** out_json);
BF_API bf_status bf_cmd_train(const char* config_json, char** out_json);
BF_API bf_status bf_cmd_fit(const char* config_json, char** out_json);
BF_API bf_status bf_cmd_eval(const char* config_json, char** out_json);
BF_API bf_status bf_cmd_gradcheck(const char* config_json, char** out_json);
BF_API bf_status bf_cmd_ablate(const char* config_json, char** out_json);
BF_API void bf_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* BODYFIT_H */
