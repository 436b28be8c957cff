#include "bodyfit/sampler.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "bodyfit/error.hpp"

namespace bodyfit {

// All distribution transforms are hand-rolled on top of the raw engine:
// std::normal_distribution and friends are not guaranteed to produce the
// same stream across standard library implementations.

double Rng::uniform() {
    // 53 high bits -> [0, 1).
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    // Box-Muller, cosine branch only. Wasting the sine partner keeps the
    // stream position independent of call history.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
}

Vec3 Rng::unit_vector() {
    const double z = uniform(-1.0, 1.0);
    const double phi = uniform(0.0, 2.0 * std::numbers::pi);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream,
                       std::uint64_t index) {
    return splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index);
}

VecX PoseSampler::default_joint_std(int articulated) {
    if (articulated != kArticulatedJoints) {
        // Non-default trees carry no anatomy; treat every joint as a limb.
        return VecX::Constant(articulated, 0.5);
    }
    // Indexed by articulated joint (tree joint index minus one):
    // spine/neck/collars 0.15, hips/knees/shoulders/elbows 0.5,
    // ankles/feet/head/wrists/hands 0.8.
    static const double kStd[kArticulatedJoints] = {
        0.5,  0.5,  0.15,  // hips, spine1
        0.5,  0.5,  0.15,  // knees, spine2
        0.8,  0.8,  0.15,  // ankles, spine3
        0.8,  0.8,  0.15,  // feet, neck
        0.15, 0.15, 0.8,   // collars, head
        0.5,  0.5,         // shoulders
        0.5,  0.5,         // elbows
        0.8,  0.8,         // wrists
        0.8,  0.8,         // hands
    };
    VecX v(kArticulatedJoints);
    for (int i = 0; i < kArticulatedJoints; ++i) v(i) = kStd[i];
    return v;
}

void PoseSampler::validate(int articulated) const {
    if (joint_std.size() != articulated) {
        throw Error(ErrorCode::config,
                    "joint_std needs " + std::to_string(articulated) +
                        " entries, got " + std::to_string(joint_std.size()));
    }
    if (!joint_std.allFinite() || (joint_std.array() <= 0.0).any()) {
        throw Error(ErrorCode::config, "joint_std entries must be positive");
    }
    if (!(beta_std > 0.0) || !(beta_clip > 0.0)) {
        throw Error(ErrorCode::config, "beta_std and beta_clip must be positive");
    }
}

PoseShape PoseSampler::sample(Rng& rng) const {
    const int articulated = static_cast<int>(joint_std.size());
    PoseShape ps;
    ps.theta.resize(3 * articulated);
    for (int j = 0; j < articulated; ++j) {
        for (int c = 0; c < 3; ++c) {
            // Truncated Gaussians: redraw instead of clamping so the
            // distribution has no mass spikes at the bounds.
            double v = joint_std(j) * rng.normal();
            while (std::abs(v) > std::numbers::pi) {
                v = joint_std(j) * rng.normal();
            }
            ps.theta(3 * j + c) = v;
        }
    }
    ps.beta.resize(kBetaDim);
    for (int c = 0; c < kBetaDim; ++c) {
        double v = beta_std * rng.normal();
        while (std::abs(v) > beta_clip) {
            v = beta_std * rng.normal();
        }
        ps.beta(c) = v;
    }
    return ps;
}

}  // namespace bodyfit
