#include "bodyfit/fitter.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "bodyfit/diffcore.hpp"
#include "bodyfit/metrics.hpp"

namespace bodyfit {

namespace {

void check_fittable(const Keypoints2D& target, const SkeletonModel& model) {
    if (target.joint_count() != model.joint_count ||
        static_cast<int>(target.visibility.size()) != model.joint_count) {
        throw Error(ErrorCode::shape_mismatch,
                    "target joint count does not match the skeleton");
    }
    if (target.visible_count() < kMinVisibleToFit) {
        throw Error(ErrorCode::unfittable,
                    "only " + std::to_string(target.visible_count()) +
                        " joints visible; need " +
                        std::to_string(kMinVisibleToFit));
    }
}

std::int64_t elapsed_us(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::microseconds>(
               std::chrono::steady_clock::now() - t0)
        .count();
}

}  // namespace

FitTrace fit_learned(const UpdateNetwork& net, const Keypoints2D& target,
                     const SkeletonModel& model, int n_iters) {
    if (n_iters < 0) {
        throw Error(ErrorCode::invalid_argument, "n_iters must be non-negative");
    }
    check_fittable(target, model);

    FitTrace trace;
    trace.records.reserve(n_iters + 1);
    GradWorkspace ws;
    VecX grad;

    ModelParams params = ModelParams::zero();
    VecX flat = params.flatten();
    trace.records.push_back(
        {params, reproj_loss(params, target, model), 0.0, 0});

    for (int n = 0; n < n_iters; ++n) {
        const auto t0 = std::chrono::steady_clock::now();
        reproj_loss_and_grad(params, target, model, grad, ws);
        const NetInput in = make_net_input(grad, flat, target);
        const VecX delta = net.forward(in.concat());
        flat += delta;
        double loss = std::numeric_limits<double>::quiet_NaN();
        if (flat.allFinite()) {
            params = ModelParams::unflatten(flat);
            loss = reproj_loss(params, target, model);
        }
        if (!std::isfinite(loss)) {
            trace.iterations_run = n;
            throw FitDivergenceError(
                std::move(trace), n + 1,
                "fit diverged at iteration " + std::to_string(n + 1));
        }
        trace.records.push_back({params, loss, delta.norm(), elapsed_us(t0)});
        trace.iterations_run = n + 1;
    }
    return trace;
}

FitTrace fit_vanilla_gd(const Keypoints2D& target, const SkeletonModel& model,
                        double step_size, int n_iters,
                        const std::optional<ParamMask>& mask) {
    // step_size 0 is allowed and leaves the state parked at zero.
    if (!(step_size >= 0.0) || !std::isfinite(step_size)) {
        throw Error(ErrorCode::invalid_argument,
                    "step size must be finite and non-negative");
    }
    if (n_iters < 0) {
        throw Error(ErrorCode::invalid_argument, "n_iters must be non-negative");
    }
    check_fittable(target, model);

    FitTrace trace;
    trace.records.reserve(n_iters + 1);
    GradWorkspace ws;
    VecX grad;

    ModelParams params = ModelParams::zero();
    VecX flat = params.flatten();
    trace.records.push_back(
        {params, reproj_loss(params, target, model), 0.0, 0});

    for (int n = 0; n < n_iters; ++n) {
        const auto t0 = std::chrono::steady_clock::now();
        reproj_loss_and_grad(params, target, model, grad, ws);
        if (mask) {
            for (int i = 0; i < kParamDim; ++i) {
                if (!(*mask)[i]) grad(i) = 0.0;
            }
        }
        flat -= step_size * grad;
        double loss = std::numeric_limits<double>::quiet_NaN();
        if (flat.allFinite()) {
            params = ModelParams::unflatten(flat);
            loss = reproj_loss(params, target, model);
        }
        if (!std::isfinite(loss)) {
            trace.iterations_run = n;
            throw FitDivergenceError(
                std::move(trace), n + 1,
                "gradient descent diverged at iteration " + std::to_string(n + 1));
        }
        trace.records.push_back(
            {params, loss, step_size * grad.norm(), elapsed_us(t0)});
        trace.iterations_run = n + 1;
    }
    return trace;
}

ModelParams fit_direct_lifting(const UpdateNetwork& liftnet,
                               const Keypoints2D& target) {
    if (liftnet.arch().input_mode != InputMode::target_only) {
        throw Error(ErrorCode::invalid_state,
                    "direct lifting requires a target_only network");
    }
    if (target.joint_count() != kJointCount) {
        throw Error(ErrorCode::shape_mismatch, "target must have 24 joints");
    }
    if (target.visible_count() < kMinVisibleToFit) {
        throw Error(ErrorCode::unfittable,
                    "only " + std::to_string(target.visible_count()) +
                        " joints visible; need " +
                        std::to_string(kMinVisibleToFit));
    }

    const NetInput in = make_net_input(VecX::Zero(kParamDim),
                                       VecX::Zero(kParamDim), target);
    const VecX out = liftnet.forward(in.concat());
    if (!out.allFinite()) {
        throw Error(ErrorCode::divergence, "lifting network produced "
                                           "non-finite parameters");
    }
    return ModelParams::unflatten(out);
}

double pick_gd_step_size(const SkeletonModel& model,
                         std::span<const Keypoints2D> targets,
                         std::span<const ModelParams> gt,
                         std::span<const double> grid, int n_iters) {
    if (grid.empty() || targets.empty() || targets.size() != gt.size()) {
        throw Error(ErrorCode::invalid_argument,
                    "step-size search needs candidates and matched targets");
    }
    double best_lambda = grid[0];
    double best_score = std::numeric_limits<double>::infinity();
    for (const double lambda : grid) {
        double sum = 0.0;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            ModelParams fitted;
            try {
                fitted = fit_vanilla_gd(targets[i], model, lambda, n_iters)
                             .final_params();
            } catch (const FitDivergenceError&) {
                sum = std::numeric_limits<double>::infinity();
                break;
            }
            sum += pa_mpjpe(posed_joints(fitted, model),
                            posed_joints(gt[i], model));
        }
        const double score = sum / static_cast<double>(targets.size());
        if (score < best_score) {
            best_score = score;
            best_lambda = lambda;
        }
    }
    return best_lambda;
}

}  // namespace bodyfit
