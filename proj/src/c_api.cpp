#include "bodyfit.h"

#include <cstring>
#include <new>
#include <string>

#include "bodyfit/camera.hpp"
#include "bodyfit/commands.hpp"
#include "bodyfit/diffcore.hpp"
#include "bodyfit/error.hpp"
#include "bodyfit/fitter.hpp"
#include "bodyfit/kinematics.hpp"
#include "bodyfit/metrics.hpp"
#include "bodyfit/skeleton.hpp"
#include "bodyfit/updatenet.hpp"

using namespace bodyfit;

struct bf_skeleton {
    SkeletonModel model;
};

struct bf_network {
    UpdateNetwork net;
};

struct bf_trace {
    FitTrace trace;
};

namespace {

thread_local std::string g_last_error;

bf_status code_to_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return BF_ERR_INVALID_ARGUMENT;
        case ErrorCode::config: return BF_ERR_CONFIG;
        case ErrorCode::data: return BF_ERR_DATA;
        case ErrorCode::io: return BF_ERR_IO;
        case ErrorCode::shape_mismatch: return BF_ERR_SHAPE_MISMATCH;
        case ErrorCode::invalid_state: return BF_ERR_INVALID_STATE;
        case ErrorCode::unfittable: return BF_ERR_UNFITTABLE;
        case ErrorCode::degenerate: return BF_ERR_DEGENERATE;
        case ErrorCode::divergence: return BF_ERR_DIVERGENCE;
        case ErrorCode::internal: return BF_ERR_INTERNAL;
    }
    return BF_ERR_INTERNAL;
}

// Runs a callable, translating exceptions into status codes and stashing
// the message for bf_last_error.
template <typename Fn>
bf_status guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        g_last_error = e.what();
        return code_to_status(e.code());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return BF_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return BF_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return BF_ERR_INTERNAL;
    }
}

bf_status bad_arg(const char* msg) {
    g_last_error = msg;
    return BF_ERR_INVALID_ARGUMENT;
}

ModelParams params_from_raw(const double* raw) {
    VecX v(kParamDim);
    std::memcpy(v.data(), raw, sizeof(double) * kParamDim);
    return ModelParams::unflatten(v);
}

Keypoints2D target_from_raw(const double* raw) {
    Keypoints2D kp;
    kp.points.resize(kJointCount, 2);
    kp.visibility.resize(kJointCount);
    for (int j = 0; j < kJointCount; ++j) {
        kp.points(j, 0) = raw[3 * j];
        kp.points(j, 1) = raw[3 * j + 1];
        kp.visibility[j] = raw[3 * j + 2] != 0.0 ? 1 : 0;
    }
    kp.zero_invisible();
    return kp;
}

bf_status run_command(std::string (*cmd)(const std::string&),
                      const char* config_json, char** out_json) {
    if (config_json == nullptr || out_json == nullptr) {
        return bad_arg("config_json and out_json must not be NULL");
    }
    return guarded([&]() {
        const std::string result = cmd(config_json);
        char* buffer = static_cast<char*>(::operator new(result.size() + 1));
        std::memcpy(buffer, result.c_str(), result.size() + 1);
        *out_json = buffer;
        return BF_OK;
    });
}

}  // namespace

extern "C" {

const char* bf_version(void) { return "0.1.0"; }

const char* bf_last_error(void) { return g_last_error.c_str(); }

/* ---- skeleton ------------------------------------------------------- */

bf_status bf_skeleton_default(uint64_t seed, bf_skeleton** out) {
    if (out == nullptr) return bad_arg("out must not be NULL");
    return guarded([&]() {
        auto* handle = new bf_skeleton{make_default_skeleton(seed)};
        *out = handle;
        return BF_OK;
    });
}

bf_status bf_skeleton_load(const char* path, bf_skeleton** out) {
    if (path == nullptr || out == nullptr) {
        return bad_arg("path and out must not be NULL");
    }
    return guarded([&]() {
        auto* handle = new bf_skeleton{load_skeleton(path)};
        *out = handle;
        return BF_OK;
    });
}

bf_status bf_skeleton_save(const bf_skeleton* skel, const char* path) {
    if (skel == nullptr || path == nullptr) {
        return bad_arg("skel and path must not be NULL");
    }
    return guarded([&]() {
        save_skeleton(skel->model, path);
        return BF_OK;
    });
}

bf_status bf_skeleton_joint_count(const bf_skeleton* skel, int32_t* out) {
    if (skel == nullptr || out == nullptr) {
        return bad_arg("skel and out must not be NULL");
    }
    *out = skel->model.joint_count;
    return BF_OK;
}

void bf_skeleton_free(bf_skeleton* skel) { delete skel; }

/* ---- update network -------------------------------------------------- */

bf_status bf_network_create(uint64_t seed, bf_network** out) {
    if (out == nullptr) return bad_arg("out must not be NULL");
    return guarded([&]() {
        auto* handle = new bf_network{UpdateNetwork(NetworkArch{}, seed)};
        *out = handle;
        return BF_OK;
    });
}

bf_status bf_network_load(const char* path, bf_network** out) {
    if (path == nullptr || out == nullptr) {
        return bad_arg("path and out must not be NULL");
    }
    return guarded([&]() {
        auto* handle = new bf_network{load_network(path)};
        *out = handle;
        return BF_OK;
    });
}

bf_status bf_network_save(const bf_network* net, const char* path) {
    if (net == nullptr || path == nullptr) {
        return bad_arg("net and path must not be NULL");
    }
    return guarded([&]() {
        save_network(net->net, path);
        return BF_OK;
    });
}

bf_status bf_network_param_count(const bf_network* net, uint64_t* out) {
    if (net == nullptr || out == nullptr) {
        return bad_arg("net and out must not be NULL");
    }
    *out = net->net.param_count();
    return BF_OK;
}

void bf_network_free(bf_network* net) { delete net; }

/* ---- model math ------------------------------------------------------ */

bf_status bf_pose_joints(const bf_skeleton* skel, const double* params85,
                         double* out_joints) {
    if (skel == nullptr || params85 == nullptr || out_joints == nullptr) {
        return bad_arg("skel, params85, and out_joints must not be NULL");
    }
    return guarded([&]() {
        const JointSet joints =
            posed_joints(params_from_raw(params85), skel->model);
        for (int j = 0; j < joints.rows(); ++j) {
            out_joints[3 * j] = joints(j, 0);
            out_joints[3 * j + 1] = joints(j, 1);
            out_joints[3 * j + 2] = joints(j, 2);
        }
        return BF_OK;
    });
}

bf_status bf_project(const bf_skeleton* skel, const double* params85,
                     double* out_points) {
    if (skel == nullptr || params85 == nullptr || out_points == nullptr) {
        return bad_arg("skel, params85, and out_points must not be NULL");
    }
    return guarded([&]() {
        const ModelParams params = params_from_raw(params85);
        const JointSet joints = forward_kinematics(
            skel->model, params.pose_shape.theta, params.pose_shape.beta);
        const Points2D projected = project_unchecked(joints, params.camera);
        for (int j = 0; j < projected.rows(); ++j) {
            out_points[2 * j] = projected(j, 0);
            out_points[2 * j + 1] = projected(j, 1);
        }
        return BF_OK;
    });
}

bf_status bf_reproj_loss(const bf_skeleton* skel, const double* params85,
                         const double* target72, double* out_loss,
                         double* out_grad) {
    if (skel == nullptr || params85 == nullptr || target72 == nullptr ||
        out_loss == nullptr) {
        return bad_arg("skel, params85, target72, and out_loss must not be NULL");
    }
    return guarded([&]() {
        const ModelParams params = params_from_raw(params85);
        const Keypoints2D target = target_from_raw(target72);
        if (out_grad == nullptr) {
            *out_loss = reproj_loss(params, target, skel->model);
        } else {
            VecX grad;
            GradWorkspace ws;
            const double loss =
                reproj_loss_and_grad(params, target, skel->model, grad, ws);
            std::memcpy(out_grad, grad.data(), sizeof(double) * kParamDim);
            *out_loss = loss;
        }
        return BF_OK;
    });
}

bf_status bf_pa_mpjpe(const bf_skeleton* skel, const double* pred85,
                      const double* gt85, double* out) {
    if (skel == nullptr || pred85 == nullptr || gt85 == nullptr ||
        out == nullptr) {
        return bad_arg("skel, pred85, gt85, and out must not be NULL");
    }
    return guarded([&]() {
        *out = pa_mpjpe(posed_joints(params_from_raw(pred85), skel->model),
                        posed_joints(params_from_raw(gt85), skel->model));
        return BF_OK;
    });
}

bf_status bf_mpjpe(const bf_skeleton* skel, const double* pred85,
                   const double* gt85, double* out) {
    if (skel == nullptr || pred85 == nullptr || gt85 == nullptr ||
        out == nullptr) {
        return bad_arg("skel, pred85, gt85, and out must not be NULL");
    }
    return guarded([&]() {
        *out = mpjpe(posed_joints(params_from_raw(pred85), skel->model),
                     posed_joints(params_from_raw(gt85), skel->model));
        return BF_OK;
    });
}

/* ---- fitting --------------------------------------------------------- */

bf_status bf_fit(const bf_network* net, const bf_skeleton* skel,
                 const double* target72, int32_t iters, bf_trace** out) {
    if (net == nullptr || skel == nullptr || target72 == nullptr ||
        out == nullptr) {
        return bad_arg("net, skel, target72, and out must not be NULL");
    }
    return guarded([&]() {
        const Keypoints2D target = target_from_raw(target72);
        auto* handle =
            new bf_trace{fit_learned(net->net, target, skel->model, iters)};
        *out = handle;
        return BF_OK;
    });
}

bf_status bf_trace_iterations(const bf_trace* trace, int32_t* out) {
    if (trace == nullptr || out == nullptr) {
        return bad_arg("trace and out must not be NULL");
    }
    *out = trace->trace.iterations_run;
    return BF_OK;
}

bf_status bf_trace_params(const bf_trace* trace, int32_t state,
                          double* out_params85) {
    if (trace == nullptr || out_params85 == nullptr) {
        return bad_arg("trace and out_params85 must not be NULL");
    }
    if (state < 0 ||
        static_cast<std::size_t>(state) >= trace->trace.records.size()) {
        return bad_arg("state index out of range");
    }
    return guarded([&]() {
        const VecX flat = trace->trace.records[state].params.flatten();
        std::memcpy(out_params85, flat.data(), sizeof(double) * kParamDim);
        return BF_OK;
    });
}

bf_status bf_trace_loss(const bf_trace* trace, int32_t state,
                        double* out_loss) {
    if (trace == nullptr || out_loss == nullptr) {
        return bad_arg("trace and out_loss must not be NULL");
    }
    if (state < 0 ||
        static_cast<std::size_t>(state) >= trace->trace.records.size()) {
        return bad_arg("state index out of range");
    }
    *out_loss = trace->trace.records[state].loss;
    return BF_OK;
}

void bf_trace_free(bf_trace* trace) { delete trace; }

/* ---- commands -------------------------------------------------------- */

bf_status bf_cmd_generate_data(const char* config_json, char** out_json) {
    return run_command(cmd_generate_data, config_json, out_json);
}

bf_status bf_cmd_train(const char* config_json, char** out_json) {
    return run_command(cmd_train, config_json, out_json);
}

bf_status bf_cmd_fit(const char* config_json, char** out_json) {
    return run_command(cmd_fit, config_json, out_json);
}

bf_status bf_cmd_eval(const char* config_json, char** out_json) {
    return run_command(cmd_eval, config_json, out_json);
}

bf_status bf_cmd_gradcheck(const char* config_json, char** out_json) {
    return run_command(cmd_gradcheck, config_json, out_json);
}

bf_status bf_cmd_ablate(const char* config_json, char** out_json) {
    return run_command(cmd_ablate, config_json, out_json);
}

void bf_string_free(char* s) { ::operator delete(s); }

}  // extern "C"
