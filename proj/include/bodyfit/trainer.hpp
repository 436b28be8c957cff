#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bodyfit/dataset.hpp"
#include "bodyfit/sampler.hpp"
#include "bodyfit/skeleton.hpp"
#include "bodyfit/types.hpp"
#include "bodyfit/updatenet.hpp"

namespace bodyfit {

struct CameraRanges {
    double s_min = 0.5;
    double s_max = 1.5;
    double t_min = -0.5;
    double t_max = 0.5;
    double max_rot_angle = 1.0471975511965976;  // 60 degrees

    void validate() const;
};

struct TrainConfig {
    int unroll_iters = 4;  // N
    int batch_size = 64;
    int steps = 20000;
    double learning_rate = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double dropout_prob = 0.1;
    int min_visible = 6;
    CameraRanges camera;
    PoseSampler sampler;
    std::uint64_t seed = 0;
    InputMode input_mode = InputMode::full;
    int eval_every = 500;
    int eval_count = 200;
    int checkpoint_every = 5000;

    // Optional pose source replacing the synthetic sampler; cameras are
    // still drawn from the ranges above.
    std::shared_ptr<const PoseDataset> dataset;

    void validate() const;
    static TrainConfig from_json(const std::string& text);
    std::string to_json() const;
};

struct TrainInstance {
    ModelParams gt;
    Keypoints2D target;
};

// Draws (pose, shape, camera), projects to the ground-truth 2D target, and
// drops joints independently with probability p. Dropout masks leaving
// fewer than min_visible joints are redrawn whole.
TrainInstance sample_instance(const SkeletonModel& model,
                              const TrainConfig& config, Rng& rng);

// One unrolled pass over a batch: from theta_0 = 0, run N learned updates,
// sum the L1 parameter loss over the post-update states, and backpropagate
// through the unroll. The reprojection-gradient input is treated as a
// constant (no second-order terms). Returns the batch-mean loss.
struct UnrollResult {
    double loss = 0.0;
    NetGradients grads;
};
UnrollResult unrolled_loss_and_grads(const UpdateNetwork& net,
                                     const SkeletonModel& model,
                                     std::span<const TrainInstance> batch,
                                     const TrainConfig& config);

struct TrainLogRow {
    int step = 0;             // 1-based, row written after the update
    double train_loss = 0.0;
    double heldout_pa_mpjpe = -1.0;  // < 0 when not evaluated this step
    double wall_ms = 0.0;
};

struct TrainResult {
    std::vector<TrainLogRow> log;
    int steps_run = 0;
};

struct TrainHooks {
    // Called after each step with the freshly written log row.
    std::function<void(const TrainLogRow&)> on_step;
    // Called when a periodic or final checkpoint should be persisted.
    std::function<void(const UpdateNetwork&, int step)> on_checkpoint;
};

// Adam over the unrolled loss. Instance streams are seeded per (step,
// sample), so results do not depend on evaluation order. Divergence aborts
// with DivergenceError; the caller keeps the last good checkpoint.
TrainResult train(UpdateNetwork& net, const SkeletonModel& model,
                  const TrainConfig& config, const TrainHooks& hooks = {});

// Held-out instances for periodic evaluation, drawn from a seed stream
// disjoint from training. all_visible disables dropout.
std::vector<TrainInstance> make_heldout_set(const SkeletonModel& model,
                                            const TrainConfig& config,
                                            int count, bool all_visible);

// Mean PA-MPJPE of n_iters-step learned fits over a fixed instance set.
// Diverging fits are scored at their last finite state.
double heldout_pa_mpjpe(const UpdateNetwork& net, const SkeletonModel& model,
                        std::span<const TrainInstance> heldout, int n_iters);

void write_metrics_csv(const std::string& path,
                       std::span<const TrainLogRow> rows, std::uint64_t seed);

}  // namespace bodyfit
