#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>

#include "bodyfit/error.hpp"
#include "bodyfit/skeleton.hpp"
#include "bodyfit/types.hpp"
#include "bodyfit/updatenet.hpp"

namespace bodyfit {

struct FitRecord {
    ModelParams params;
    double loss = 0.0;       // reprojection loss at these parameters
    double step_norm = 0.0;  // ||delta theta|| applied to reach this state
    std::int64_t wall_us = 0;
};

// Per-iteration history of one fit. records[0] is always the zero start, so
// records.size() == iterations_run + 1.
struct FitTrace {
    std::vector<FitRecord> records;
    int iterations_run = 0;

    const ModelParams& final_params() const { return records.back().params; }
    double final_loss() const { return records.back().loss; }
};

// Carries the partial trace when a fit produced non-finite state.
class FitDivergenceError : public Error {
public:
    FitDivergenceError(FitTrace trace, int iteration, const std::string& what)
        : Error(ErrorCode::divergence, what),
          trace_(std::move(trace)),
          iteration_(iteration) {}

    const FitTrace& trace() const { return trace_; }
    int iteration() const { return iteration_; }

private:
    FitTrace trace_;
    int iteration_;
};

inline constexpr int kMinVisibleToFit = 6;

// Learned iterative fit: theta_{n+1} = theta_n + N_w(grad_n, theta_n, x),
// starting from zero. n_iters may exceed the network's training window.
// The network's stored input mode is applied to each input.
FitTrace fit_learned(const UpdateNetwork& net, const Keypoints2D& target,
                     const SkeletonModel& model, int n_iters = 4);

using ParamMask = std::array<bool, kParamDim>;

// Plain gradient descent on the reprojection loss, no prior term. The
// optional mask freezes parameters outside a subproblem (all-true default).
FitTrace fit_vanilla_gd(const Keypoints2D& target, const SkeletonModel& model,
                        double step_size, int n_iters,
                        const std::optional<ParamMask>& mask = std::nullopt);

// One-shot regression from the target alone; the network must have been
// trained in target_only mode. Equivalent to a single learned update from
// zero with the gradient and state channels suppressed.
ModelParams fit_direct_lifting(const UpdateNetwork& liftnet,
                               const Keypoints2D& target);

// Grid search for the vanilla-GD step size: fits every target at each
// candidate and keeps the lowest mean PA-MPJPE against the ground truth.
double pick_gd_step_size(const SkeletonModel& model,
                         std::span<const Keypoints2D> targets,
                         std::span<const ModelParams> gt,
                         std::span<const double> grid, int n_iters);

}  // namespace bodyfit
