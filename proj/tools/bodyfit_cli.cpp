// Command-line front end. Everything goes through the C API in bodyfit.h;
// the JSON handling here is only config plumbing.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bodyfit.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int status_to_exit_code(bf_status status) {
    switch (status) {
        case BF_OK: return 0;
        case BF_ERR_CONFIG:
        case BF_ERR_INVALID_ARGUMENT: return 2;
        case BF_ERR_DIVERGENCE: return 4;
        default: return 3;
    }
}

int fail(bf_status status) {
    std::fprintf(stderr, "error: %s\n", bf_last_error());
    return status_to_exit_code(status);
}

int fail_config(const std::string& message) {
    std::fprintf(stderr, "error: %s\n", message.c_str());
    return 2;
}

// Options shared by every subcommand; each maps onto config keys so the
// precedence is simply "flags override the --config file".
struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int iters = 0;
    bool iters_set = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path,
                        "JSON config file; flags override its keys")
            ->check(CLI::ExistingFile);
        cmd->add_option("--out", out_dir, "Output directory for artifacts");
        cmd->add_option("--seed", seed, "Base seed")
            ->each([this](const std::string&) { seed_set = true; });
        cmd->add_option("--iters", iters,
                        "Fit iterations / training unroll length")
            ->each([this](const std::string&) { iters_set = true; });
    }
};

json load_base_config(const CommonOpts& opts) {
    if (opts.config_path.empty()) return json::object();
    std::ifstream in(opts.config_path);
    std::stringstream buf;
    buf << in.rdbuf();
    json j = json::parse(buf.str(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw std::runtime_error("config file " + opts.config_path +
                                 " is not a JSON object");
    }
    return j;
}

// Resolves an artifact path inside --out, creating the directory on first
// use. Explicit config keys win over the default name.
std::string artifact_path(const json& config, const char* key,
                          const CommonOpts& opts, const char* default_name) {
    if (config.contains(key)) return config[key].get<std::string>();
    if (opts.out_dir.empty()) return "";
    fs::create_directories(opts.out_dir);
    return (fs::path(opts.out_dir) / default_name).string();
}

void set_if(json& config, const char* key, const std::string& value) {
    if (!value.empty()) config[key] = value;
}

int run(bf_status (*command)(const char*, char**), const json& config,
        bool quiet = false) {
    char* out_json = nullptr;
    const bf_status status = command(config.dump().c_str(), &out_json);
    if (status != BF_OK) return fail(status);
    if (!quiet) std::printf("%s\n", out_json);
    bf_string_free(out_json);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bodyfit: learned iterative fitting of an articulated body "
                 "model to 2D keypoints"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(bf_version()));

    CommonOpts gen_opts, train_opts, fit_opts, eval_opts, grad_opts, abl_opts;

    auto* gen = app.add_subcommand("generate-data",
                                   "Sample a pose dataset to a binary file");
    gen_opts.attach(gen);
    std::int64_t gen_count = -1;
    gen->add_option("--count", gen_count, "Number of poses");

    auto* train = app.add_subcommand("train", "Train the update network");
    train_opts.attach(train);
    std::string train_dataset, train_resume;
    bool train_verbose = false;
    int train_steps = -1;
    train->add_option("--dataset", train_dataset,
                      "Pose dataset to draw targets from");
    train->add_option("--resume", train_resume, "Checkpoint to continue from");
    train->add_option("--steps", train_steps, "Adam steps");
    train->add_flag("--verbose", train_verbose, "Progress to stderr");

    auto* fit = app.add_subcommand("fit", "Fit parameters to keypoint frames");
    fit_opts.attach(fit);
    std::string fit_network, fit_keypoints, fit_fitter;
    fit->add_option("--network", fit_network, "Trained network checkpoint");
    fit->add_option("--keypoints", fit_keypoints, "Keypoint frames file");
    fit->add_option("--fitter", fit_fitter, "learned, gd, or lift")
        ->check(CLI::IsMember({"learned", "gd", "lift"}));

    auto* eval = app.add_subcommand("eval",
                                    "Score fitted parameters against ground truth");
    eval_opts.attach(eval);
    std::string eval_params, eval_gt;
    eval->add_option("--params", eval_params, "Fitted parameters file");
    eval->add_option("--gt", eval_gt, "Ground-truth parameters file");

    auto* grad = app.add_subcommand("gradcheck",
                                    "Compare analytic and numeric gradients");
    grad_opts.attach(grad);

    auto* ablate = app.add_subcommand("ablate",
                                      "Train and score ablation variants");
    abl_opts.attach(ablate);
    std::string ablation_kind = "inputs";
    ablate->add_option("--ablation", ablation_kind,
                       "inputs, unroll, or all")
        ->check(CLI::IsMember({"inputs", "unroll", "all"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            json config = load_base_config(gen_opts);
            if (gen_count >= 0) config["count"] = gen_count;
            if (gen_opts.seed_set) config["seed"] = gen_opts.seed;
            set_if(config, "out",
                   artifact_path(config, "out", gen_opts, "poses.bfposes"));
            if (!config.contains("out")) {
                return fail_config("generate-data needs --out or an 'out' key");
            }
            return run(bf_cmd_generate_data, config);
        }
        if (train->parsed()) {
            json config = load_base_config(train_opts);
            if (train_opts.seed_set) config["seed"] = train_opts.seed;
            if (train_opts.iters_set) config["unroll_iters"] = train_opts.iters;
            if (train_steps >= 0) config["steps"] = train_steps;
            if (train_verbose) config["verbose"] = true;
            set_if(config, "dataset", train_dataset);
            set_if(config, "resume", train_resume);
            set_if(config, "out",
                   artifact_path(config, "out", train_opts, "checkpoint.bfnet"));
            set_if(config, "metrics_out",
                   artifact_path(config, "metrics_out", train_opts,
                                 "metrics.csv"));
            if (!config.contains("out")) {
                return fail_config("train needs --out or an 'out' key");
            }
            return run(bf_cmd_train, config);
        }
        if (fit->parsed()) {
            json config = load_base_config(fit_opts);
            if (fit_opts.iters_set) config["iters"] = fit_opts.iters;
            set_if(config, "network", fit_network);
            set_if(config, "keypoints", fit_keypoints);
            set_if(config, "fitter", fit_fitter);
            set_if(config, "out",
                   artifact_path(config, "out", fit_opts, "params.txt"));
            set_if(config, "trace_out",
                   artifact_path(config, "trace_out", fit_opts, "traces.csv"));
            if (!config.contains("out")) {
                return fail_config("fit needs --out or an 'out' key");
            }
            return run(bf_cmd_fit, config);
        }
        if (eval->parsed()) {
            json config = load_base_config(eval_opts);
            if (eval_opts.seed_set) config["seed"] = eval_opts.seed;
            set_if(config, "params", eval_params);
            set_if(config, "gt_params", eval_gt);
            set_if(config, "out",
                   artifact_path(config, "out", eval_opts, "report.csv"));
            return run(bf_cmd_eval, config);
        }
        if (grad->parsed()) {
            json config = load_base_config(grad_opts);
            if (grad_opts.seed_set) config["seed"] = grad_opts.seed;
            return run(bf_cmd_gradcheck, config);
        }
        if (ablate->parsed()) {
            json config = load_base_config(abl_opts);
            if (abl_opts.seed_set) config["seed"] = abl_opts.seed;
            if (abl_opts.iters_set) config["unroll_iters"] = abl_opts.iters;
            if (ablation_kind == "unroll") {
                config["modes"] = json::array();
                if (!config.contains("unrolls")) {
                    config["unrolls"] = {1, 2, 3, 4, 5};
                }
            } else if (ablation_kind == "all") {
                if (!config.contains("unrolls")) {
                    config["unrolls"] = {1, 2, 3, 4, 5};
                }
            }
            std::string csv_path;
            if (!abl_opts.out_dir.empty()) {
                set_if(config, "out",
                       artifact_path(config, "out", abl_opts, "nets.bfnet"));
                csv_path =
                    (fs::path(abl_opts.out_dir) / "ablation.csv").string();
            }

            char* out_json = nullptr;
            const bf_status status =
                bf_cmd_ablate(config.dump().c_str(), &out_json);
            if (status != BF_OK) return fail(status);
            std::printf("%s\n", out_json);
            if (!csv_path.empty()) {
                const json summary = json::parse(out_json);
                std::ofstream csv(csv_path);
                csv << "# bodyfit-ablation v1 seed="
                    << summary.value("seed", 0ull) << "\n";
                csv << "kind,variant,pa_mpjpe_mm\n";
                for (const char* kind : {"component", "unroll"}) {
                    if (!summary.contains(kind)) continue;
                    for (const auto& item : summary[kind].items()) {
                        csv << kind << ',' << item.key() << ','
                            << item.value().get<double>() << "\n";
                    }
                }
            }
            bf_string_free(out_json);
            return 0;
        }
    } catch (const std::exception& e) {
        return fail_config(e.what());
    }
    return 2;
}
