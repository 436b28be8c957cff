#pragma once

#include <string>
#include <vector>

#include "bodyfit/types.hpp"

namespace bodyfit {

// Command layer shared by the CLI and the C API. Every command takes a JSON
// config string; unknown keys are rejected so typos fail loudly. Paths are
// resolved as given (relative to the process cwd).

// Keys: out (required), count, seed, skeleton (path, default built in),
// joint_std (array, optional), beta_std, beta_clip. The dataset records the
// skeleton's name.
std::string cmd_generate_data(const std::string& config_json);

// Keys: out (required, checkpoint path), metrics_out (csv, optional),
// dataset (path, optional; samples fresh poses when absent), skeleton,
// resume (checkpoint to continue from), verbose (progress to stderr), plus
// every TrainConfig field (steps, batch_size, unroll_iters, learning_rate,
// dropout_prob, seed, input_mode, eval_every, eval_count, checkpoint_every,
// camera {...}, sampler {...}). Periodic checkpoints are written next to
// `out`. Returns a JSON summary (final loss, heldout metric, steps).
std::string cmd_train(const std::string& config_json);

// Keys: keypoints (required), out (required, params file), skeleton, iters,
// fitter ("learned" | "gd" | "lift", default learned), network (required
// unless fitter is gd), step_size (gd only), trace_out (csv of per-iteration
// losses, optional). Frames with too few visible joints are recorded as
// skipped, frames that diverge as diverged; fitting continues and the
// summary counts both.
std::string cmd_fit(const std::string& config_json);

// Keys: params (required), gt_params (required), skeleton, out (csv,
// optional). Returns JSON with mean/median MPJPE and PA-MPJPE.
std::string cmd_eval(const std::string& config_json);

// Keys: count, step, seed, skeleton, tolerance. Returns JSON with
// max_rel_err, worst_coord, failures, count, elapsed_s.
std::string cmd_gradcheck(const std::string& config_json);

// Keys: same as train (minus resume/metrics_out) plus modes (array of input
// mode names) and unrolls (array of iteration counts). Defaults to the five
// component modes with no unroll sweep. Trains one network per variant with
// identical seeds and budgets and returns JSON mapping variant -> heldout
// PA-MPJPE, mm-equivalent. When out is given each network is saved to
// "<out>.<variant>".
std::string cmd_ablate(const std::string& config_json);

}  // namespace bodyfit
