#pragma once

#include <cstdint>
#include <random>

#include "bodyfit/types.hpp"

namespace bodyfit {

// Deterministic RNG: a standard mt19937_64 engine with fixed transforms on
// top, so streams are reproducible across platforms and library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    double uniform();  // [0, 1)
    double uniform(double lo, double hi);
    double normal();   // Box-Muller, one value per call
    Vec3 unit_vector();

private:
    std::mt19937_64 engine_;
};

// Stable seed derivation for independent per-sample streams.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream,
                       std::uint64_t index);

// Truncated-Gaussian pose distribution standing in for MoCap data. Each
// articulated joint draws axis-angle components at its own standard
// deviation; shape coefficients are unit Gaussians clipped at |beta| <= 3.
struct PoseSampler {
    // One entry per articulated joint, radians.
    VecX joint_std = default_joint_std(kArticulatedJoints);
    double beta_std = 1.0;
    double beta_clip = 3.0;
    std::uint64_t seed = 0;

    // Spine and collars 0.15, hips/knees/shoulders/elbows 0.5, everything
    // past the wrist/ankle plus the head 0.8.
    static VecX default_joint_std(int articulated = kArticulatedJoints);

    PoseShape sample(Rng& rng) const;
    void validate(int articulated) const;
};

}  // namespace bodyfit
