#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"

#include "bodyfit/error.hpp"
#include "bodyfit/sampler.hpp"

using namespace bodyfit;

TEST_CASE("rng streams are deterministic in the seed") {
    Rng a(123);
    Rng b(123);
    Rng c(124);
    bool all_equal = true;
    bool any_differ = false;
    for (int i = 0; i < 1000; ++i) {
        const double va = a.uniform();
        all_equal = all_equal && (va == b.uniform());
        any_differ = any_differ || (va != c.uniform());
    }
    CHECK(all_equal);
    CHECK(any_differ);
}

TEST_CASE("uniform stays in range") {
    Rng rng(7);
    double lo = 1.0;
    double hi = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double v = rng.uniform();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    // The range actually gets exercised, not just its middle.
    CHECK(lo < 0.001);
    CHECK(hi > 0.999);

    for (int i = 0; i < 1000; ++i) {
        const double v = rng.uniform(-2.5, 4.0);
        CHECK(v >= -2.5);
        CHECK(v < 4.0);
    }
}

TEST_CASE("normal has the right first two moments") {
    Rng rng(8);
    const int n = 100000;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        sum += v;
        sum_sq += v * v;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    // Standard error of the mean is ~1/sqrt(n) = 0.003.
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("unit_vector has norm one and covers both hemispheres") {
    Rng rng(9);
    int above = 0;
    for (int i = 0; i < 2000; ++i) {
        const Vec3 v = rng.unit_vector();
        CHECK(std::abs(v.norm() - 1.0) < 1e-12);
        if (v.z() > 0.0) ++above;
    }
    CHECK(above > 700);
    CHECK(above < 1300);
}

TEST_CASE("mix_seed separates streams and indices") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t stream = 0; stream < 8; ++stream) {
        for (std::uint64_t index = 0; index < 64; ++index) {
            seen.insert(mix_seed(42, stream, index));
        }
    }
    CHECK(seen.size() == 8 * 64);
    // Different bases give different derived seeds too.
    CHECK(mix_seed(1, 0, 0) != mix_seed(2, 0, 0));
    // Same arguments, same seed.
    CHECK(mix_seed(42, 3, 17) == mix_seed(42, 3, 17));
}

TEST_CASE("default joint stds pin the anatomy table") {
    const VecX std_table = PoseSampler::default_joint_std();
    REQUIRE(std_table.size() == kArticulatedJoints);
    const double expected[kArticulatedJoints] = {
        0.5,  0.5,  0.15, 0.5, 0.5, 0.15, 0.8, 0.8, 0.15, 0.8, 0.8, 0.15,
        0.15, 0.15, 0.8,  0.5, 0.5, 0.5,  0.5, 0.8, 0.8,  0.8, 0.8,
    };
    for (int i = 0; i < kArticulatedJoints; ++i) {
        CHECK(std_table(i) == expected[i]);
    }
    // Non-default sizes fall back to a flat table.
    const VecX flat = PoseSampler::default_joint_std(5);
    CHECK(flat.size() == 5);
    CHECK((flat.array() == 0.5).all());
}

TEST_CASE("sampled poses follow the per-joint stds and clip bounds") {
    PoseSampler sampler;
    Rng rng(11);
    const int n = 10000;
    VecX sum_sq = VecX::Zero(kThetaDim);
    double beta_max = 0.0;
    double theta_max = 0.0;
    for (int i = 0; i < n; ++i) {
        const PoseShape ps = sampler.sample(rng);
        REQUIRE(ps.theta.size() == kThetaDim);
        REQUIRE(ps.beta.size() == kBetaDim);
        sum_sq += ps.theta.cwiseProduct(ps.theta);
        theta_max = std::max(theta_max, ps.theta.cwiseAbs().maxCoeff());
        beta_max = std::max(beta_max, ps.beta.cwiseAbs().maxCoeff());
    }
    CHECK(theta_max <= std::numbers::pi);
    CHECK(beta_max <= 3.0);

    for (int j = 0; j < kArticulatedJoints; ++j) {
        for (int c = 0; c < 3; ++c) {
            const double sd = std::sqrt(sum_sq(3 * j + c) / n);
            // Truncation at pi clips almost nothing below std 0.8; allow 5%
            // sampling noise on 10k draws.
            CHECK(sd == doctest::Approx(sampler.joint_std(j)).epsilon(0.05));
        }
    }
}

TEST_CASE("sampling is deterministic given the rng state") {
    PoseSampler sampler;
    Rng a(21);
    Rng b(21);
    const PoseShape pa = sampler.sample(a);
    const PoseShape pb = sampler.sample(b);
    CHECK((pa.theta - pb.theta).cwiseAbs().maxCoeff() == 0.0);
    CHECK((pa.beta - pb.beta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sampler validation rejects broken configs") {
    PoseSampler ok;
    CHECK_NOTHROW(ok.validate(kArticulatedJoints));

    PoseSampler wrong_size;
    wrong_size.joint_std = VecX::Constant(4, 0.5);
    CHECK_THROWS_AS(wrong_size.validate(kArticulatedJoints), Error);

    PoseSampler negative;
    negative.joint_std = VecX::Constant(kArticulatedJoints, -0.1);
    CHECK_THROWS_AS(negative.validate(kArticulatedJoints), Error);

    PoseSampler bad_beta;
    bad_beta.beta_std = 0.0;
    CHECK_THROWS_AS(bad_beta.validate(kArticulatedJoints), Error);

    PoseSampler bad_clip;
    bad_clip.beta_clip = -1.0;
    CHECK_THROWS_AS(bad_clip.validate(kArticulatedJoints), Error);
}
