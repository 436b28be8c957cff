#include "bodyfit/skeleton.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include "json.hpp"

#include "bodyfit/error.hpp"
#include "bodyfit/sampler.hpp"

namespace bodyfit {

namespace {

using nlohmann::json;

// Bones must stay strictly positive for any |beta| <= kBetaBound, the range
// the pose sampler truncates at.
constexpr double kBetaBound = 3.0;

constexpr int kSkeletonFormatVersion = 1;

}  // namespace

double SkeletonModel::mean_bone_length() const {
    if (joint_count < 2) return 0.0;
    double sum = 0.0;
    for (int j = 1; j < joint_count; ++j) {
        sum += template_offsets.row(j).norm();
    }
    return sum / (joint_count - 1);
}

void SkeletonModel::validate() const {
    if (joint_count < 1) {
        throw Error(ErrorCode::config, "skeleton needs at least one joint");
    }
    if (static_cast<int>(parents.size()) != joint_count) {
        throw Error(ErrorCode::config, "parents length does not match joint_count");
    }
    if (parents[0] != -1) {
        throw Error(ErrorCode::config, "joint 0 must be the root (parent -1)");
    }
    for (int j = 1; j < joint_count; ++j) {
        // parent[j] < j makes the tree acyclic and every joint reachable.
        if (parents[j] < 0 || parents[j] >= j) {
            throw Error(ErrorCode::config,
                        "parent of joint " + std::to_string(j) +
                            " must be a lower index, got " +
                            std::to_string(parents[j]));
        }
    }
    if (template_offsets.rows() != joint_count ||
        static_cast<int>(shape_basis.size()) != joint_count) {
        throw Error(ErrorCode::config, "offsets/basis size does not match joint_count");
    }
    if (!template_offsets.allFinite()) {
        throw Error(ErrorCode::config, "template offsets contain non-finite values");
    }
    if (template_offsets.row(0).norm() != 0.0 || shape_basis[0].norm() != 0.0) {
        throw Error(ErrorCode::config, "root offset and root shape basis must be zero");
    }
    for (int j = 1; j < joint_count; ++j) {
        if (!shape_basis[j].allFinite()) {
            throw Error(ErrorCode::config, "shape basis contains non-finite values");
        }
        const double bone = template_offsets.row(j).norm();
        if (bone <= 0.0) {
            throw Error(ErrorCode::config,
                        "joint " + std::to_string(j) + " has a zero-length bone");
        }
        // Worst-case basis displacement at |beta|_inf <= 3 must not reach the
        // template bone length.
        double reach = 0.0;
        for (int c = 0; c < kBetaDim; ++c) {
            reach += shape_basis[j].col(c).norm();
        }
        if (kBetaBound * reach >= bone) {
            throw Error(ErrorCode::config,
                        "shape basis of joint " + std::to_string(j) +
                            " can collapse its bone");
        }
    }
}

SkeletonModel make_default_skeleton(std::uint64_t seed, const std::string& name) {
    // Pelvis-rooted tree in the usual human layout: spine chain with two
    // legs and two arms, y up, left side on +x. Offsets in metres.
    static const int kParents[kJointCount] = {
        -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17,
        18, 19, 20, 21};
    static const double kOffsets[kJointCount][3] = {
        {0.0, 0.0, 0.0},      // 0  pelvis
        {0.09, -0.09, 0.0},   // 1  hip.L
        {-0.09, -0.09, 0.0},  // 2  hip.R
        {0.0, 0.11, 0.0},     // 3  spine1
        {0.02, -0.38, 0.0},   // 4  knee.L
        {-0.02, -0.38, 0.0},  // 5  knee.R
        {0.0, 0.12, 0.0},     // 6  spine2
        {-0.01, -0.40, 0.0},  // 7  ankle.L
        {0.01, -0.40, 0.0},   // 8  ankle.R
        {0.0, 0.12, 0.0},     // 9  spine3
        {0.02, -0.06, 0.12},  // 10 foot.L
        {-0.02, -0.06, 0.12}, // 11 foot.R
        {0.0, 0.14, 0.0},     // 12 neck
        {0.05, 0.10, 0.0},    // 13 collar.L
        {-0.05, 0.10, 0.0},   // 14 collar.R
        {0.0, 0.12, 0.0},     // 15 head
        {0.11, 0.02, 0.0},    // 16 shoulder.L
        {-0.11, 0.02, 0.0},   // 17 shoulder.R
        {0.26, 0.0, 0.0},     // 18 elbow.L
        {-0.26, 0.0, 0.0},    // 19 elbow.R
        {0.25, 0.0, 0.0},     // 20 wrist.L
        {-0.25, 0.0, 0.0},    // 21 wrist.R
        {0.08, 0.0, 0.0},     // 22 hand.L
        {-0.08, 0.0, 0.0},    // 23 hand.R
    };

    SkeletonModel m;
    m.joint_count = kJointCount;
    m.parents.assign(kParents, kParents + kJointCount);
    m.template_offsets.resize(kJointCount, 3);
    for (int j = 0; j < kJointCount; ++j) {
        m.template_offsets.row(j) << kOffsets[j][0], kOffsets[j][1], kOffsets[j][2];
    }
    m.name = name;
    m.seed = seed;

    // Synthetic shape basis: per joint, ten random offset directions scaled
    // to 2% of the mean bone length per unit beta, capped at 3% of the
    // joint's own bone so |beta|_inf <= 3 can never collapse a short bone.
    const double mean_bone = m.mean_bone_length();
    Rng rng(seed);
    m.shape_basis.resize(kJointCount);
    m.shape_basis[0].setZero();
    for (int j = 1; j < kJointCount; ++j) {
        const double bone = m.template_offsets.row(j).norm();
        const double scale = std::min(0.02 * mean_bone, 0.03 * bone);
        for (int c = 0; c < kBetaDim; ++c) {
            m.shape_basis[j].col(c) = scale * rng.unit_vector();
        }
    }

    m.validate();
    return m;
}

void save_skeleton(const SkeletonModel& model, const std::string& path) {
    model.validate();
    json j;
    j["format"] = "bodyfit-skeleton";
    j["version"] = kSkeletonFormatVersion;
    j["name"] = model.name;
    j["seed"] = model.seed;
    j["joint_count"] = model.joint_count;
    j["parents"] = model.parents;

    json offsets = json::array();
    for (int r = 0; r < model.joint_count; ++r) {
        offsets.push_back({model.template_offsets(r, 0),
                           model.template_offsets(r, 1),
                           model.template_offsets(r, 2)});
    }
    j["template_offsets"] = std::move(offsets);

    json basis = json::array();
    for (int jo = 0; jo < model.joint_count; ++jo) {
        json rows = json::array();
        for (int r = 0; r < 3; ++r) {
            json row = json::array();
            for (int c = 0; c < kBetaDim; ++c) {
                row.push_back(model.shape_basis[jo](r, c));
            }
            rows.push_back(std::move(row));
        }
        basis.push_back(std::move(rows));
    }
    j["shape_basis"] = std::move(basis);

    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::io, "cannot open " + path + " for writing");
    }
    out << j.dump(2) << "\n";
    if (!out) {
        throw Error(ErrorCode::io, "failed writing " + path);
    }
}

SkeletonModel load_skeleton(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open " + path);
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::data, path + ": " + e.what());
    }

    try {
        if (j.at("format").get<std::string>() != "bodyfit-skeleton") {
            throw Error(ErrorCode::data, path + ": not a skeleton file");
        }
        if (j.at("version").get<int>() != kSkeletonFormatVersion) {
            throw Error(ErrorCode::data, path + ": unsupported skeleton version");
        }
        SkeletonModel m;
        m.name = j.at("name").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.joint_count = j.at("joint_count").get<int>();
        m.parents = j.at("parents").get<std::vector<int>>();

        const auto& offsets = j.at("template_offsets");
        if (static_cast<int>(offsets.size()) != m.joint_count) {
            throw Error(ErrorCode::data, path + ": template_offsets size mismatch");
        }
        m.template_offsets.resize(m.joint_count, 3);
        for (int r = 0; r < m.joint_count; ++r) {
            for (int c = 0; c < 3; ++c) {
                m.template_offsets(r, c) = offsets.at(r).at(c).get<double>();
            }
        }

        const auto& basis = j.at("shape_basis");
        if (static_cast<int>(basis.size()) != m.joint_count) {
            throw Error(ErrorCode::data, path + ": shape_basis size mismatch");
        }
        m.shape_basis.resize(m.joint_count);
        for (int jo = 0; jo < m.joint_count; ++jo) {
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < kBetaDim; ++c) {
                    m.shape_basis[jo](r, c) = basis.at(jo).at(r).at(c).get<double>();
                }
            }
        }

        m.validate();
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::data, path + ": " + e.what());
    }
}

}  // namespace bodyfit
