#include "bodyfit/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "json.hpp"

#include "bodyfit/camera.hpp"
#include "bodyfit/diffcore.hpp"
#include "bodyfit/error.hpp"
#include "bodyfit/fitter.hpp"
#include "bodyfit/metrics.hpp"
#include "text_util.hpp"

namespace bodyfit {

namespace {

using nlohmann::json;

// Seed stream tags, mixed with the config seed so training, held-out
// evaluation, and other consumers never share an instance stream.
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kHeldoutStream = 2;

}  // namespace

void CameraRanges::validate() const {
    if (!(s_min > 0.0) || !(s_max >= s_min)) {
        throw Error(ErrorCode::config, "camera scale range must be positive");
    }
    if (!(t_max >= t_min)) {
        throw Error(ErrorCode::config, "camera translation range is inverted");
    }
    if (!(max_rot_angle >= 0.0) || max_rot_angle > std::numbers::pi) {
        throw Error(ErrorCode::config,
                    "camera rotation angle must lie in [0, pi]");
    }
}

void TrainConfig::validate() const {
    if (unroll_iters < 1) {
        throw Error(ErrorCode::config, "unroll_iters must be at least 1");
    }
    if (batch_size < 1) {
        throw Error(ErrorCode::config, "batch_size must be at least 1");
    }
    if (steps < 0) {
        throw Error(ErrorCode::config, "steps must be non-negative");
    }
    if (!(learning_rate > 0.0)) {
        throw Error(ErrorCode::config, "learning_rate must be positive");
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
        !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
        throw Error(ErrorCode::config, "Adam hyperparameters out of range");
    }
    if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) {
        throw Error(ErrorCode::config, "dropout_prob must lie in [0, 1)");
    }
    if (min_visible < 1 || min_visible > kJointCount) {
        throw Error(ErrorCode::config, "min_visible out of range");
    }
    camera.validate();
    sampler.validate(kArticulatedJoints);
    if (dataset && dataset->size() == 0) {
        throw Error(ErrorCode::config, "pose dataset is empty");
    }
}

namespace {

void check_no_unknown_keys(const json& j, std::initializer_list<const char*> keys,
                           const std::string& ctx) {
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : keys) {
            if (item.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw Error(ErrorCode::config,
                        ctx + ": unknown key '" + item.key() + "'");
        }
    }
}

template <typename T>
void maybe_get(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) {
        out = it->get<T>();
    }
}

}  // namespace

TrainConfig TrainConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config, std::string("train config: ") + e.what());
    }
    if (!j.is_object()) {
        throw Error(ErrorCode::config, "train config must be a JSON object");
    }
    check_no_unknown_keys(
        j,
        {"unroll_iters", "batch_size", "steps", "learning_rate", "adam_beta1",
         "adam_beta2", "adam_eps", "dropout_prob", "min_visible", "camera",
         "sampler", "seed", "input_mode", "eval_every", "eval_count",
         "checkpoint_every"},
        "train config");

    TrainConfig c;
    try {
        maybe_get(j, "unroll_iters", c.unroll_iters);
        maybe_get(j, "batch_size", c.batch_size);
        maybe_get(j, "steps", c.steps);
        maybe_get(j, "learning_rate", c.learning_rate);
        maybe_get(j, "adam_beta1", c.adam_beta1);
        maybe_get(j, "adam_beta2", c.adam_beta2);
        maybe_get(j, "adam_eps", c.adam_eps);
        maybe_get(j, "dropout_prob", c.dropout_prob);
        maybe_get(j, "min_visible", c.min_visible);
        maybe_get(j, "seed", c.seed);
        maybe_get(j, "eval_every", c.eval_every);
        maybe_get(j, "eval_count", c.eval_count);
        maybe_get(j, "checkpoint_every", c.checkpoint_every);
        if (j.contains("input_mode")) {
            c.input_mode = input_mode_from_string(j["input_mode"].get<std::string>());
        }
        if (j.contains("camera")) {
            const json& cj = j["camera"];
            check_no_unknown_keys(
                cj, {"s_min", "s_max", "t_min", "t_max", "max_rot_angle"},
                "camera ranges");
            maybe_get(cj, "s_min", c.camera.s_min);
            maybe_get(cj, "s_max", c.camera.s_max);
            maybe_get(cj, "t_min", c.camera.t_min);
            maybe_get(cj, "t_max", c.camera.t_max);
            maybe_get(cj, "max_rot_angle", c.camera.max_rot_angle);
        }
        if (j.contains("sampler")) {
            const json& sj = j["sampler"];
            check_no_unknown_keys(
                sj, {"joint_std", "beta_std", "beta_clip", "seed"}, "sampler");
            if (sj.contains("joint_std")) {
                const auto stds = sj["joint_std"].get<std::vector<double>>();
                c.sampler.joint_std.resize(static_cast<Eigen::Index>(stds.size()));
                for (std::size_t i = 0; i < stds.size(); ++i) {
                    c.sampler.joint_std(static_cast<Eigen::Index>(i)) = stds[i];
                }
            }
            maybe_get(sj, "beta_std", c.sampler.beta_std);
            maybe_get(sj, "beta_clip", c.sampler.beta_clip);
            maybe_get(sj, "seed", c.sampler.seed);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config, std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string TrainConfig::to_json() const {
    json j;
    j["unroll_iters"] = unroll_iters;
    j["batch_size"] = batch_size;
    j["steps"] = steps;
    j["learning_rate"] = learning_rate;
    j["adam_beta1"] = adam_beta1;
    j["adam_beta2"] = adam_beta2;
    j["adam_eps"] = adam_eps;
    j["dropout_prob"] = dropout_prob;
    j["min_visible"] = min_visible;
    j["camera"] = {{"s_min", camera.s_min},
                   {"s_max", camera.s_max},
                   {"t_min", camera.t_min},
                   {"t_max", camera.t_max},
                   {"max_rot_angle", camera.max_rot_angle}};
    std::vector<double> stds(sampler.joint_std.data(),
                             sampler.joint_std.data() + sampler.joint_std.size());
    j["sampler"] = {{"joint_std", stds},
                    {"beta_std", sampler.beta_std},
                    {"beta_clip", sampler.beta_clip},
                    {"seed", sampler.seed}};
    j["seed"] = seed;
    j["input_mode"] = to_string(input_mode);
    j["eval_every"] = eval_every;
    j["eval_count"] = eval_count;
    j["checkpoint_every"] = checkpoint_every;
    return j.dump(2);
}

TrainInstance sample_instance(const SkeletonModel& model,
                              const TrainConfig& config, Rng& rng) {
    TrainInstance inst;

    // Draw order is part of the determinism contract: pose, camera axis,
    // camera angle, translation, scale, then dropout.
    if (config.dataset && config.dataset->size() > 0) {
        const std::uint64_t idx = rng.next_u64() % config.dataset->size();
        inst.gt.pose_shape = config.dataset->records[idx];
    } else {
        inst.gt.pose_shape = config.sampler.sample(rng);
    }

    const Vec3 axis = rng.unit_vector();
    const double angle = rng.uniform(0.0, config.camera.max_rot_angle);
    inst.gt.camera.rotation = angle * axis;
    inst.gt.camera.translation =
        Vec2(rng.uniform(config.camera.t_min, config.camera.t_max),
             rng.uniform(config.camera.t_min, config.camera.t_max));
    inst.gt.camera.scale = rng.uniform(config.camera.s_min, config.camera.s_max);

    const JointSet joints = forward_kinematics(
        model, inst.gt.pose_shape.theta, inst.gt.pose_shape.beta);
    inst.target.points = project(joints, inst.gt.camera);
    inst.target.visibility.assign(model.joint_count, 1);

    if (config.dropout_prob > 0.0) {
        // Redraw whole masks until enough joints stay visible; a frame with
        // fewer is unfittable and would be discarded anyway.
        while (true) {
            int visible = 0;
            for (int jnt = 0; jnt < model.joint_count; ++jnt) {
                const bool drop = rng.uniform() < config.dropout_prob;
                inst.target.visibility[jnt] = drop ? 0 : 1;
                if (!drop) ++visible;
            }
            if (visible >= config.min_visible) break;
        }
        inst.target.zero_invisible();
    }
    return inst;
}

std::vector<TrainInstance> make_heldout_set(const SkeletonModel& model,
                                            const TrainConfig& config,
                                            int count, bool all_visible) {
    TrainConfig cfg = config;
    if (all_visible) cfg.dropout_prob = 0.0;
    std::vector<TrainInstance> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        Rng rng(mix_seed(config.seed, kHeldoutStream, static_cast<std::uint64_t>(i)));
        out.push_back(sample_instance(model, cfg, rng));
    }
    return out;
}

UnrollResult unrolled_loss_and_grads(const UpdateNetwork& net,
                                     const SkeletonModel& model,
                                     std::span<const TrainInstance> batch,
                                     const TrainConfig& config) {
    if (batch.empty()) {
        throw Error(ErrorCode::invalid_argument, "empty training batch");
    }
    const int b_count = static_cast<int>(batch.size());
    const int n_iters = config.unroll_iters;

    // Ground truth and (constant) target channels, one column per sample.
    MatX gts(kParamDim, b_count);
    MatX targets(kTargetDim, b_count);
    for (int b = 0; b < b_count; ++b) {
        gts.col(b) = batch[b].gt.flatten();
        targets.col(b) = batch[b].target.flatten();
    }

    std::vector<MatX> states(n_iters + 1);
    states[0] = MatX::Zero(kParamDim, b_count);
    std::vector<ForwardCache> caches(n_iters);

    GradWorkspace ws;
    VecX grad;
    MatX input(kNetInputDim, b_count);
    double loss = 0.0;
    for (int n = 0; n < n_iters; ++n) {
        for (int b = 0; b < b_count; ++b) {
            const ModelParams p = ModelParams::unflatten(states[n].col(b));
            reproj_loss_and_grad(p, batch[b].target, model, grad, ws);
            input.col(b).head(kParamDim) = grad / (1.0 + grad.norm());
            input.col(b).segment(kParamDim, kParamDim) = states[n].col(b);
            input.col(b).tail(kTargetDim) = targets.col(b);
        }
        const MatX delta = net.forward_batch(input, &caches[n]);
        states[n + 1] = states[n] + delta;
        if (!states[n + 1].allFinite()) {
            throw Error(ErrorCode::divergence,
                        "unrolled state became non-finite at iteration " +
                            std::to_string(n + 1));
        }
        loss += (states[n + 1] - gts).cwiseAbs().sum();
    }
    loss /= b_count;
    if (!std::isfinite(loss)) {
        throw Error(ErrorCode::divergence, "unrolled loss is non-finite");
    }

    UnrollResult result;
    result.loss = loss;
    result.grads = net.zero_gradients();

    // Backward through the unroll. The adjoint of a state feeds the network
    // both as output gradient (its update produced the next state) and
    // through the parameter input channel; the reprojection-gradient channel
    // is a constant by the stop-gradient rule.
    const double inv_b = 1.0 / b_count;
    MatX adj = inv_b * (states[n_iters] - gts).cwiseSign();
    MatX input_grad;
    for (int n = n_iters - 1; n >= 0; --n) {
        net.backward_batch(caches[n], adj, result.grads, &input_grad);
        adj += input_grad.middleRows(kParamDim, kParamDim);
        if (n >= 1) {
            adj += inv_b * (states[n] - gts).cwiseSign();
        }
    }
    return result;
}

namespace {

// In-place Adam over the layer gradient arrays.
struct AdamState {
    NetGradients m;
    NetGradients v;

    static void update_layer(Layer& m, Layer& v, const Layer& g, Layer& out,
                             const TrainConfig& c, double bc1, double bc2) {
        m.weight = c.adam_beta1 * m.weight + (1.0 - c.adam_beta1) * g.weight;
        m.bias = c.adam_beta1 * m.bias + (1.0 - c.adam_beta1) * g.bias;
        v.weight = c.adam_beta2 * v.weight +
                   (1.0 - c.adam_beta2) * g.weight.cwiseProduct(g.weight);
        v.bias = c.adam_beta2 * v.bias +
                 (1.0 - c.adam_beta2) * g.bias.cwiseProduct(g.bias);
        out.weight = -c.learning_rate *
                     ((m.weight / bc1).array() /
                      ((v.weight / bc2).array().sqrt() + c.adam_eps))
                         .matrix();
        out.bias = -c.learning_rate *
                   ((m.bias / bc1).array() /
                    ((v.bias / bc2).array().sqrt() + c.adam_eps))
                       .matrix();
    }

    // Turns raw gradients into the (negative) parameter delta.
    void step(NetGradients& grads, const TrainConfig& c, int t) {
        const double bc1 = 1.0 - std::pow(c.adam_beta1, t);
        const double bc2 = 1.0 - std::pow(c.adam_beta2, t);
        update_layer(m.input, v.input, grads.input, grads.input, c, bc1, bc2);
        for (std::size_t i = 0; i < m.blocks.size(); ++i) {
            update_layer(m.blocks[i], v.blocks[i], grads.blocks[i],
                         grads.blocks[i], c, bc1, bc2);
        }
        update_layer(m.output, v.output, grads.output, grads.output, c, bc1, bc2);
    }
};

}  // namespace

double heldout_pa_mpjpe(const UpdateNetwork& net, const SkeletonModel& model,
                        std::span<const TrainInstance> heldout, int n_iters) {
    double sum = 0.0;
    for (const TrainInstance& inst : heldout) {
        ModelParams fitted;
        try {
            fitted = fit_learned(net, inst.target, model, n_iters).final_params();
        } catch (const FitDivergenceError& e) {
            // Score the last finite state; a diverging net should see the
            // damage in its metric rather than abort the whole run.
            fitted = e.trace().final_params();
        }
        sum += pa_mpjpe(posed_joints(fitted, model), posed_joints(inst.gt, model));
    }
    return sum / static_cast<double>(heldout.size());
}

TrainResult train(UpdateNetwork& net, const SkeletonModel& model,
                  const TrainConfig& config, const TrainHooks& hooks) {
    config.validate();
    TrainResult result;
    if (config.steps == 0) {
        return result;
    }
    if (net.arch().input_dim != kNetInputDim ||
        net.arch().output_dim != kParamDim) {
        throw Error(ErrorCode::shape_mismatch,
                    "network does not match the parameter vector layout");
    }
    net.set_input_mode(config.input_mode);

    AdamState adam;
    adam.m = net.zero_gradients();
    adam.v = net.zero_gradients();

    std::vector<TrainInstance> heldout;
    const bool want_eval = config.eval_every > 0 && config.eval_count > 0;
    if (want_eval) {
        heldout = make_heldout_set(model, config, config.eval_count, true);
    }

    std::vector<TrainInstance> batch(config.batch_size);
    for (int step = 1; step <= config.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        for (int b = 0; b < config.batch_size; ++b) {
            const std::uint64_t idx =
                static_cast<std::uint64_t>(step - 1) * config.batch_size + b;
            Rng rng(mix_seed(config.seed, kTrainStream, idx));
            batch[b] = sample_instance(model, config, rng);
        }

        UnrollResult unroll;
        try {
            unroll = unrolled_loss_and_grads(net, model, batch, config);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::divergence) {
                throw DivergenceError(static_cast<std::size_t>(step), e.what());
            }
            throw;
        }

        adam.step(unroll.grads, config, step);
        net.apply_update(unroll.grads);

        TrainLogRow row;
        row.step = step;
        row.train_loss = unroll.loss;
        if (want_eval && (step % config.eval_every == 0 || step == config.steps)) {
            row.heldout_pa_mpjpe =
                heldout_pa_mpjpe(net, model, heldout, config.unroll_iters);
        }
        row.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        result.log.push_back(row);
        result.steps_run = step;
        if (hooks.on_step) hooks.on_step(row);
        if (hooks.on_checkpoint && config.checkpoint_every > 0 &&
            step % config.checkpoint_every == 0 && step != config.steps) {
            hooks.on_checkpoint(net, step);
        }
    }
    return result;
}

void write_metrics_csv(const std::string& path,
                       std::span<const TrainLogRow> rows, std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::io, "cannot open " + path + " for writing");
    }
    out << "# bodyfit-metrics v1 seed=" << seed << "\n";
    out << "step,train_loss,heldout_pa_mpjpe,wall_ms\n";
    for (const TrainLogRow& r : rows) {
        out << r.step << ',' << detail::fmt_double(r.train_loss) << ',';
        if (r.heldout_pa_mpjpe >= 0.0) {
            out << detail::fmt_double(r.heldout_pa_mpjpe);
        }
        out << ',' << detail::fmt_double(r.wall_ms) << "\n";
    }
    if (!out) {
        throw Error(ErrorCode::io, "failed writing " + path);
    }
}

}  // namespace bodyfit
