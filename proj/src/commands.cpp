#include "bodyfit/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "bodyfit/dataset.hpp"
#include "bodyfit/diffcore.hpp"
#include "bodyfit/error.hpp"
#include "bodyfit/fitter.hpp"
#include "bodyfit/keypoints_io.hpp"
#include "bodyfit/metrics.hpp"
#include "bodyfit/sampler.hpp"
#include "bodyfit/skeleton.hpp"
#include "bodyfit/trainer.hpp"
#include "bodyfit/updatenet.hpp"
#include "text_util.hpp"

namespace bodyfit {

namespace {

using json = nlohmann::json;

// Seed stream tags; 1 and 2 belong to the trainer.
constexpr std::uint64_t kDatasetStream = 3;
constexpr std::uint64_t kGradcheckStream = 4;

json parse_config(const std::string& text, const char* ctx) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config, std::string(ctx) + ": " + e.what());
    }
    if (!j.is_object()) {
        throw Error(ErrorCode::config,
                    std::string(ctx) + ": config must be a JSON object");
    }
    return j;
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys,
                    const char* ctx) {
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : keys) {
            if (item.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw Error(ErrorCode::config, std::string(ctx) +
                                               ": unknown key '" +
                                               item.key() + "'");
        }
    }
}

std::string require_path(const json& j, const char* key, const char* ctx) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
        throw Error(ErrorCode::config, std::string(ctx) + ": '" + key +
                                           "' (path) is required");
    }
    return it->get<std::string>();
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const char* ctx) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::config, std::string(ctx) + ": bad value for '" +
                                           key + "'");
    }
}

// Loads the skeleton named in the config or falls back to the built-in one.
// Everything downstream assumes the fixed 24-joint parameter layout.
SkeletonModel load_model(const json& j, const char* ctx) {
    SkeletonModel model;
    if (auto it = j.find("skeleton"); it != j.end()) {
        model = load_skeleton(it->get<std::string>());
    } else {
        model = make_default_skeleton();
    }
    if (model.joint_count != kJointCount) {
        throw Error(ErrorCode::config,
                    std::string(ctx) + ": skeleton must have " +
                        std::to_string(kJointCount) + " joints");
    }
    return model;
}

CameraParams sample_camera(const CameraRanges& ranges, Rng& rng) {
    CameraParams cam;
    const Vec3 axis = rng.unit_vector();
    const double angle = rng.uniform(0.0, ranges.max_rot_angle);
    cam.rotation = axis * angle;
    cam.translation(0) = rng.uniform(ranges.t_min, ranges.t_max);
    cam.translation(1) = rng.uniform(ranges.t_min, ranges.t_max);
    cam.scale = rng.uniform(ranges.s_min, ranges.s_max);
    return cam;
}

// Splits a train-style config into command-level keys and the TrainConfig
// remainder, loading the optional pose dataset.
struct TrainSetup {
    TrainConfig config;
    SkeletonModel model;
    std::string out;
    std::string metrics_out;
    std::string resume;
    bool verbose = false;
};

TrainSetup split_train_config(json j, const char* ctx,
                              std::initializer_list<const char*> extra_keys) {
    TrainSetup setup;
    setup.out = require_path(j, "out", ctx);
    setup.metrics_out = get_or<std::string>(j, "metrics_out", "", ctx);
    setup.resume = get_or<std::string>(j, "resume", "", ctx);
    setup.verbose = get_or<bool>(j, "verbose", false, ctx);
    setup.model = load_model(j, ctx);
    std::string dataset_path = get_or<std::string>(j, "dataset", "", ctx);

    j.erase("out");
    j.erase("metrics_out");
    j.erase("resume");
    j.erase("verbose");
    j.erase("skeleton");
    j.erase("dataset");
    for (const char* k : extra_keys) j.erase(k);

    setup.config = TrainConfig::from_json(j.dump());
    if (!dataset_path.empty()) {
        setup.config.dataset =
            std::make_shared<const PoseDataset>(load_dataset(dataset_path));
    }
    return setup;
}

void run_training(UpdateNetwork& net, const TrainSetup& setup,
                  TrainResult& result) {
    TrainHooks hooks;
    hooks.on_checkpoint = [&setup](const UpdateNetwork& snapshot, int step) {
        save_network(snapshot, setup.out + ".step" + std::to_string(step));
    };
    if (setup.verbose) {
        const int total = setup.config.steps;
        hooks.on_step = [total](const TrainLogRow& row) {
            if (row.heldout_pa_mpjpe >= 0.0) {
                std::fprintf(stderr,
                             "step %d/%d loss %.6f heldout pa-mpjpe %.2f mm\n",
                             row.step, total, row.train_loss,
                             row.heldout_pa_mpjpe * 1000.0);
            } else if (row.step % 100 == 0) {
                std::fprintf(stderr, "step %d/%d loss %.6f\n", row.step, total,
                             row.train_loss);
            }
        };
    }
    result = train(net, setup.model, setup.config, hooks);
}

}  // namespace

std::string cmd_generate_data(const std::string& config_json) {
    const char* ctx = "generate-data";
    json j = parse_config(config_json, ctx);
    reject_unknown(j,
                   {"out", "count", "seed", "skeleton", "joint_std",
                    "beta_std", "beta_clip"},
                   ctx);
    const std::string out = require_path(j, "out", ctx);
    const std::int64_t count = get_or<std::int64_t>(j, "count", 10000, ctx);
    if (count < 0) {
        throw Error(ErrorCode::config, "generate-data: count must be >= 0");
    }
    const std::uint64_t seed = get_or<std::uint64_t>(j, "seed", 0, ctx);
    const SkeletonModel model = load_model(j, ctx);

    PoseSampler sampler;
    if (auto it = j.find("joint_std"); it != j.end()) {
        const auto values = it->get<std::vector<double>>();
        sampler.joint_std =
            Eigen::Map<const VecX>(values.data(), values.size());
    }
    sampler.beta_std = get_or<double>(j, "beta_std", sampler.beta_std, ctx);
    sampler.beta_clip = get_or<double>(j, "beta_clip", sampler.beta_clip, ctx);
    sampler.validate(model.articulated_count());

    PoseDataset dataset;
    dataset.name = model.name;
    dataset.seed = seed;
    dataset.records.resize(count);
    for (std::int64_t i = 0; i < count; ++i) {
        Rng rng(mix_seed(seed, kDatasetStream, static_cast<std::uint64_t>(i)));
        dataset.records[i] = sampler.sample(rng);
    }
    save_dataset(dataset, out);

    json summary;
    summary["out"] = out;
    summary["count"] = count;
    summary["seed"] = seed;
    summary["skeleton"] = model.name;
    return summary.dump(2);
}

std::string cmd_train(const std::string& config_json) {
    const char* ctx = "train";
    json j = parse_config(config_json, ctx);
    TrainSetup setup = split_train_config(std::move(j), ctx, {});

    UpdateNetwork net;
    if (!setup.resume.empty()) {
        net = load_network(setup.resume);
    } else {
        net = UpdateNetwork(NetworkArch{}, setup.config.seed);
    }

    const auto t0 = std::chrono::steady_clock::now();
    TrainResult result;
    run_training(net, setup, result);
    const double wall_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();

    save_network(net, setup.out);
    if (!setup.metrics_out.empty()) {
        write_metrics_csv(setup.metrics_out, result.log, setup.config.seed);
    }

    json summary;
    summary["checkpoint"] = setup.out;
    summary["steps_run"] = result.steps_run;
    summary["seed"] = setup.config.seed;
    summary["wall_s"] = wall_s;
    summary["final_train_loss"] =
        result.log.empty() ? json() : json(result.log.back().train_loss);
    json heldout;  // last evaluated row, if any
    for (auto it = result.log.rbegin(); it != result.log.rend(); ++it) {
        if (it->heldout_pa_mpjpe >= 0.0) {
            heldout = it->heldout_pa_mpjpe * 1000.0;
            break;
        }
    }
    summary["final_heldout_pa_mpjpe_mm"] = heldout;
    return summary.dump(2);
}

std::string cmd_fit(const std::string& config_json) {
    const char* ctx = "fit";
    json j = parse_config(config_json, ctx);
    reject_unknown(j,
                   {"network", "keypoints", "out", "skeleton", "iters",
                    "fitter", "step_size", "trace_out"},
                   ctx);
    const std::string keypoints_path = require_path(j, "keypoints", ctx);
    const std::string out = require_path(j, "out", ctx);
    const std::string fitter = get_or<std::string>(j, "fitter", "learned", ctx);
    const int iters = get_or<int>(j, "iters", 4, ctx);
    const double step_size = get_or<double>(j, "step_size", 0.1, ctx);
    const std::string trace_out = get_or<std::string>(j, "trace_out", "", ctx);
    if (fitter != "learned" && fitter != "gd" && fitter != "lift") {
        throw Error(ErrorCode::config,
                    "fit: fitter must be learned, gd, or lift");
    }
    const SkeletonModel model = load_model(j, ctx);

    UpdateNetwork net;
    if (fitter != "gd") {
        net = load_network(require_path(j, "network", ctx));
    }

    const auto frames = load_keypoints(keypoints_path);
    std::vector<ParamsRecord> records;
    records.reserve(frames.size());

    std::ofstream traces;
    if (!trace_out.empty()) {
        traces.open(trace_out);
        if (!traces) {
            throw Error(ErrorCode::io,
                        "cannot open " + trace_out + " for writing");
        }
        traces << "# bodyfit-traces v1 seed=" << net.seed() << '\n';
        traces << "frame_id,iteration,loss,step_norm,wall_us\n";
    }
    auto write_trace = [&](const std::string& frame_id, const FitTrace& trace) {
        if (!traces.is_open()) return;
        for (std::size_t n = 0; n < trace.records.size(); ++n) {
            const FitRecord& r = trace.records[n];
            traces << frame_id << ',' << n << ','
                   << detail::fmt_double(r.loss) << ','
                   << detail::fmt_double(r.step_norm) << ',' << r.wall_us
                   << '\n';
        }
    };

    int ok = 0, skipped = 0, diverged = 0;
    double loss_sum = 0.0;
    for (const KeypointFrame& frame : frames) {
        ParamsRecord rec;
        rec.frame_id = frame.frame_id;
        if (frame.keypoints.visible_count() < kMinVisibleToFit) {
            rec.status = FitStatus::skipped;
            rec.params = VecX::Zero(kParamDim);
            ++skipped;
            records.push_back(std::move(rec));
            continue;
        }
        try {
            if (fitter == "lift") {
                const ModelParams params =
                    fit_direct_lifting(net, frame.keypoints);
                rec.params = params.flatten();
                FitTrace single;
                single.records.push_back(
                    {params, reproj_loss(params, frame.keypoints, model), 0.0,
                     0});
                write_trace(frame.frame_id, single);
                loss_sum += single.records[0].loss;
            } else {
                const FitTrace trace =
                    fitter == "learned"
                        ? fit_learned(net, frame.keypoints, model, iters)
                        : fit_vanilla_gd(frame.keypoints, model, step_size,
                                         iters);
                rec.params = trace.final_params().flatten();
                write_trace(frame.frame_id, trace);
                loss_sum += trace.final_loss();
            }
            rec.status = FitStatus::ok;
            ++ok;
        } catch (const FitDivergenceError& e) {
            rec.status = FitStatus::diverged;
            rec.params = e.trace().final_params().flatten();
            write_trace(frame.frame_id, e.trace());
            ++diverged;
        }
        records.push_back(std::move(rec));
    }
    if (traces.is_open() && !traces) {
        throw Error(ErrorCode::io, "failed writing " + trace_out);
    }
    save_params(records, out);

    json summary;
    summary["out"] = out;
    summary["frames"] = frames.size();
    summary["ok"] = ok;
    summary["skipped"] = skipped;
    summary["diverged"] = diverged;
    summary["mean_final_loss"] =
        ok > 0 ? json(loss_sum / ok) : json();
    return summary.dump(2);
}

std::string cmd_eval(const std::string& config_json) {
    const char* ctx = "eval";
    json j = parse_config(config_json, ctx);
    reject_unknown(j, {"params", "gt_params", "skeleton", "out", "seed"}, ctx);
    const std::string params_path = require_path(j, "params", ctx);
    const std::string gt_path = require_path(j, "gt_params", ctx);
    const std::string out = get_or<std::string>(j, "out", "", ctx);
    const std::uint64_t seed = get_or<std::uint64_t>(j, "seed", 0, ctx);
    const SkeletonModel model = load_model(j, ctx);

    const auto pred_records = load_params(params_path);
    const auto gt_records = load_params(gt_path);
    if (pred_records.size() != gt_records.size()) {
        throw Error(ErrorCode::data,
                    "eval: params files have different frame counts");
    }

    std::vector<ModelParams> pred, gt;
    int excluded = 0;
    for (std::size_t i = 0; i < pred_records.size(); ++i) {
        if (pred_records[i].frame_id != gt_records[i].frame_id) {
            throw Error(ErrorCode::data,
                        "eval: frame id mismatch at row " + std::to_string(i) +
                            ": '" + pred_records[i].frame_id + "' vs '" +
                            gt_records[i].frame_id + "'");
        }
        if (pred_records[i].status != FitStatus::ok ||
            gt_records[i].status != FitStatus::ok) {
            ++excluded;
            continue;
        }
        pred.push_back(ModelParams::unflatten(pred_records[i].params));
        gt.push_back(ModelParams::unflatten(gt_records[i].params));
    }

    const EvalReport report = evaluate_params(pred, gt, model);
    if (!out.empty()) {
        write_report_csv(report, out, seed);
    }

    json summary;
    summary["frames"] = pred.size();
    summary["excluded"] = excluded;
    summary["mean_mpjpe_mm"] = report.mean_mpjpe * 1000.0;
    summary["median_mpjpe_mm"] = report.median_mpjpe * 1000.0;
    summary["mean_pa_mpjpe_mm"] = report.mean_pa_mpjpe * 1000.0;
    summary["median_pa_mpjpe_mm"] = report.median_pa_mpjpe * 1000.0;
    return summary.dump(2);
}

std::string cmd_gradcheck(const std::string& config_json) {
    const char* ctx = "gradcheck";
    json j = parse_config(config_json, ctx);
    reject_unknown(j, {"count", "step", "seed", "skeleton", "tolerance"}, ctx);
    const int count = get_or<int>(j, "count", 100, ctx);
    const double step = get_or<double>(j, "step", 1e-5, ctx);
    const double tolerance = get_or<double>(j, "tolerance", 1e-4, ctx);
    const std::uint64_t seed = get_or<std::uint64_t>(j, "seed", 0, ctx);
    if (count <= 0) {
        throw Error(ErrorCode::config, "gradcheck: count must be positive");
    }
    const SkeletonModel model = load_model(j, ctx);

    const TrainConfig cfg;  // default sampler, camera ranges, dropout
    const auto t0 = std::chrono::steady_clock::now();
    double max_rel = 0.0;
    int worst_coord = -1;
    int worst_instance = -1;
    int failures = 0;
    for (int i = 0; i < count; ++i) {
        Rng rng(mix_seed(seed, kGradcheckStream, static_cast<std::uint64_t>(i)));
        const TrainInstance inst = sample_instance(model, cfg, rng);
        // Check at a generic state, not the ground truth: a fresh pose,
        // shape, and camera drawn from the same stream.
        ModelParams state;
        state.pose_shape = cfg.sampler.sample(rng);
        state.camera = sample_camera(cfg.camera, rng);

        const VecX analytic = reproj_grad(state, inst.target, model);
        const VecX fd = finite_diff_grad(state, inst.target, model, step);
        const VecX diff = (analytic - fd).cwiseAbs();
        int coord = 0;
        const double max_diff = diff.maxCoeff(&coord);
        const double rel = max_diff / (1.0 + fd.cwiseAbs().maxCoeff());
        if (rel > tolerance) ++failures;
        if (rel > max_rel) {
            max_rel = rel;
            worst_coord = coord;
            worst_instance = i;
        }
    }
    const double elapsed_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();

    json summary;
    summary["count"] = count;
    summary["step"] = step;
    summary["tolerance"] = tolerance;
    summary["seed"] = seed;
    summary["max_rel_err"] = max_rel;
    summary["worst_coord"] = worst_coord;
    summary["worst_instance"] = worst_instance;
    summary["failures"] = failures;
    summary["elapsed_s"] = elapsed_s;
    return summary.dump(2);
}

std::string cmd_ablate(const std::string& config_json) {
    const char* ctx = "ablate";
    json j = parse_config(config_json, ctx);
    std::vector<std::string> modes;
    if (auto it = j.find("modes"); it != j.end()) {
        modes = it->get<std::vector<std::string>>();
    } else if (j.find("unrolls") == j.end()) {
        modes = {"full", "no_grad", "no_theta", "no_target", "target_only"};
    }
    std::vector<int> unrolls;
    if (auto it = j.find("unrolls"); it != j.end()) {
        unrolls = it->get<std::vector<int>>();
    }
    if (modes.empty() && unrolls.empty()) {
        throw Error(ErrorCode::config, "ablate: nothing to sweep");
    }
    const std::string out = get_or<std::string>(j, "out", "", ctx);
    if (out.empty()) j["out"] = "unused";  // satisfy the shared parser
    TrainSetup setup = split_train_config(std::move(j), ctx,
                                          {"modes", "unrolls"});
    if (!setup.resume.empty() || !setup.metrics_out.empty()) {
        throw Error(ErrorCode::config,
                    "ablate: resume/metrics_out are not supported");
    }
    if (setup.config.eval_count <= 0) {
        throw Error(ErrorCode::config,
                    "ablate: eval_count must be positive");
    }

    // One fixed heldout set shared by every variant; it only depends on the
    // seed and sampling ranges, which the sweep never touches.
    const std::vector<TrainInstance> heldout = make_heldout_set(
        setup.model, setup.config, setup.config.eval_count, true);

    auto run_variant = [&](const TrainConfig& cfg, const std::string& name) {
        if (setup.verbose) {
            std::fprintf(stderr, "ablate: training variant %s\n", name.c_str());
        }
        UpdateNetwork net(NetworkArch{}, cfg.seed);
        train(net, setup.model, cfg);  // no hooks: final weights only
        if (!out.empty()) {
            save_network(net, out + "." + name);
        }
        return heldout_pa_mpjpe(net, setup.model, heldout, cfg.unroll_iters) *
               1000.0;
    };

    json summary;
    summary["units"] = "mm";
    summary["seed"] = setup.config.seed;
    if (!modes.empty()) {
        json component;
        for (const std::string& mode : modes) {
            TrainConfig cfg = setup.config;
            cfg.input_mode = input_mode_from_string(mode);
            component[mode] = run_variant(cfg, mode);
        }
        summary["component"] = component;
    }
    if (!unrolls.empty()) {
        json unroll;
        for (const int n : unrolls) {
            if (n < 1) {
                throw Error(ErrorCode::config,
                            "ablate: unroll counts must be >= 1");
            }
            TrainConfig cfg = setup.config;
            cfg.unroll_iters = n;
            unroll[std::to_string(n)] = run_variant(cfg, "unroll" +
                                                             std::to_string(n));
        }
        summary["unroll"] = unroll;
    }
    return summary.dump(2);
}

}  // namespace bodyfit
