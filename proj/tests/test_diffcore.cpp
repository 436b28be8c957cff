#include <cmath>

#include "doctest.h"

#include "bodyfit/camera.hpp"
#include "bodyfit/diffcore.hpp"
#include "bodyfit/error.hpp"
#include "bodyfit/kinematics.hpp"
#include "bodyfit/sampler.hpp"
#include "bodyfit/skeleton.hpp"

using namespace bodyfit;

namespace {

ModelParams random_state(Rng& rng) {
    ModelParams p;
    for (int i = 0; i < kThetaDim; ++i) {
        p.pose_shape.theta(i) = 0.4 * rng.normal();
    }
    for (int i = 0; i < kBetaDim; ++i) p.pose_shape.beta(i) = rng.normal();
    p.camera.rotation = rng.unit_vector() * rng.uniform(0.0, 1.0);
    p.camera.translation =
        Vec2(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    p.camera.scale = rng.uniform(0.5, 1.5);
    return p;
}

Keypoints2D random_target(Rng& rng, double dropout) {
    Keypoints2D kp;
    kp.points.resize(kJointCount, 2);
    kp.visibility.assign(kJointCount, 1);
    for (int j = 0; j < kJointCount; ++j) {
        kp.points(j, 0) = rng.uniform(-1.0, 1.0);
        kp.points(j, 1) = rng.uniform(-1.0, 1.0);
        if (rng.uniform() < dropout) kp.visibility[j] = 0;
    }
    if (kp.visible_count() == 0) kp.visibility[0] = 1;
    kp.zero_invisible();
    return kp;
}

double rel_err(const VecX& a, const VecX& fd) {
    return (a - fd).cwiseAbs().maxCoeff() / (1.0 + fd.cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("loss is zero when the target comes from the parameters") {
    const SkeletonModel model = make_default_skeleton();
    Rng rng(31);
    const ModelParams params = random_state(rng);
    const JointSet joints = forward_kinematics(
        model, params.pose_shape.theta, params.pose_shape.beta);
    const Points2D projected = project(joints, params.camera);
    Keypoints2D target;
    target.points = projected;
    target.visibility.assign(kJointCount, 1);
    CHECK(reproj_loss(params, target, model) < 1e-24);
    CHECK(reproj_grad(params, target, model).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("single visible joint offset by (0.3, 0.4) gives loss 0.25") {
    const SkeletonModel model = make_default_skeleton();
    // Zero parameters put every projected joint at the origin (s = 0), so a
    // lone visible target at (0.3, 0.4) is a pure offset.
    const ModelParams params = ModelParams::zero();
    Keypoints2D target;
    target.points = Points2D::Zero(kJointCount, 2);
    target.visibility.assign(kJointCount, 0);
    target.visibility[5] = 1;
    target.points(5, 0) = 0.3;
    target.points(5, 1) = 0.4;
    CHECK(reproj_loss(params, target, model) ==
          doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("loss matches the per-joint summation oracle with dropout") {
    const SkeletonModel model = make_default_skeleton();
    Rng rng(32);
    for (int trial = 0; trial < 20; ++trial) {
        const ModelParams params = random_state(rng);
        const Keypoints2D target = random_target(rng, 5.0 / 24.0);
        const JointSet joints = forward_kinematics(
            model, params.pose_shape.theta, params.pose_shape.beta);
        const Points2D projected = project_unchecked(joints, params.camera);
        double sum = 0.0;
        int visible = 0;
        for (int j = 0; j < kJointCount; ++j) {
            if (!target.visibility[j]) continue;
            ++visible;
            sum += (projected.row(j) - target.points.row(j)).squaredNorm();
        }
        CHECK(reproj_loss(params, target, model) ==
              doctest::Approx(sum / visible).epsilon(1e-12));
    }
}

TEST_CASE("analytic gradient matches central finite differences") {
    const SkeletonModel model = make_default_skeleton();
    Rng rng(33);
    for (int trial = 0; trial < 10; ++trial) {
        const ModelParams params = random_state(rng);
        const Keypoints2D target = random_target(rng, 0.15);
        const VecX analytic = reproj_grad(params, target, model);
        const VecX fd = finite_diff_grad(params, target, model, 1e-5);
        CHECK(rel_err(analytic, fd) < 1e-4);
    }
}

TEST_CASE("gradient with respect to t is twice the mean residual") {
    const SkeletonModel model = make_default_skeleton();
    Rng rng(34);
    const ModelParams params = random_state(rng);
    const Keypoints2D target = random_target(rng, 0.2);
    const JointSet joints = forward_kinematics(
        model, params.pose_shape.theta, params.pose_shape.beta);
    const Points2D projected = project_unchecked(joints, params.camera);

    Vec2 expected = Vec2::Zero();
    int visible = 0;
    for (int j = 0; j < kJointCount; ++j) {
        if (!target.visibility[j]) continue;
        ++visible;
        expected += 2.0 *
                    (projected.row(j) - target.points.row(j)).transpose();
    }
    expected /= visible;

    const VecX grad = reproj_grad(params, target, model);
    CHECK(grad(kTransOffset) == doctest::Approx(expected(0)).epsilon(1e-12));
    CHECK(grad(kTransOffset + 1) ==
          doctest::Approx(expected(1)).epsilon(1e-12));
}

TEST_CASE("gradient with respect to s at R = 0, t = 0 matches the formula") {
    const SkeletonModel model = make_default_skeleton();
    Rng rng(35);
    ModelParams params = random_state(rng);
    params.camera.rotation.setZero();
    params.camera.translation.setZero();
    const Keypoints2D target = random_target(rng, 0.1);
    const JointSet joints = forward_kinematics(
        model, params.pose_shape.theta, params.pose_shape.beta);
    const Points2D projected = project_unchecked(joints, params.camera);

    double expected = 0.0;
    int visible = 0;
    for (int j = 0; j < kJointCount; ++j) {
        if (!target.visibility[j]) continue;
        ++visible;
        // With R = I the projected pre-scale point is just (X_x, X_y).
        expected += 2.0 * (projected.row(j) - target.points.row(j))
                              .dot(joints.row(j).head<2>());
    }
    expected /= visible;
    const VecX grad = reproj_grad(params, target, model);
    CHECK(grad(kScaleOffset) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("zero state: only translation and scale see gradient") {
    const SkeletonModel model = make_default_skeleton();
    Rng rng(36);
    const ModelParams params = ModelParams::zero();
    const Keypoints2D target = random_target(rng, 0.0);
    const VecX grad = reproj_grad(params, target, model);
    // s = 0 collapses all joints onto t, killing theta/beta/R influence.
    CHECK(grad.head(kRotOffset + 3).cwiseAbs().maxCoeff() == 0.0);
    CHECK(grad.segment(kTransOffset, 2).cwiseAbs().maxCoeff() > 0.0);
    // The FD oracle also holds at this kink-free degenerate point.
    const VecX fd = finite_diff_grad(params, target, model, 1e-6);
    CHECK(rel_err(grad, fd) < 1e-4);
}

TEST_CASE("invisible joints have no influence on loss or gradient") {
    const SkeletonModel model = make_default_skeleton();
    Rng rng(37);
    const ModelParams params = random_state(rng);
    Keypoints2D target = random_target(rng, 0.0);
    target.visibility[7] = 0;
    target.zero_invisible();
    const double base_loss = reproj_loss(params, target, model);
    const VecX base_grad = reproj_grad(params, target, model);

    // Any coordinates stored at the hidden joint are ignored.
    Keypoints2D tampered = target;
    tampered.points(7, 0) = 999.0;
    tampered.points(7, 1) = -999.0;
    // The flatten contract zeroes them; the loss path must ignore them too.
    CHECK(reproj_loss(params, tampered, model) ==
          doctest::Approx(base_loss).epsilon(1e-15));
    CHECK((reproj_grad(params, tampered, model) - base_grad)
              .cwiseAbs()
              .maxCoeff() == 0.0);
}

TEST_CASE("degenerate and invalid inputs are rejected") {
    const SkeletonModel model = make_default_skeleton();
    Rng rng(38);
    const ModelParams params = random_state(rng);
    Keypoints2D none = random_target(rng, 0.0);
    none.visibility.assign(kJointCount, 0);
    none.zero_invisible();
    CHECK_THROWS_AS(reproj_loss(params, none, model), Error);
    CHECK_THROWS_AS(reproj_grad(params, none, model), Error);

    const Keypoints2D ok = random_target(rng, 0.0);
    CHECK_THROWS_AS(finite_diff_grad(params, ok, model, 0.0), Error);
    CHECK_THROWS_AS(finite_diff_grad(params, ok, model, std::nan("")), Error);

    ModelParams bad = params;
    bad.pose_shape.theta(0) = std::nan("");
    CHECK_THROWS_AS(reproj_loss(bad, ok, model), Error);
}

TEST_CASE("loss_and_grad agrees with the separate entry points") {
    const SkeletonModel model = make_default_skeleton();
    Rng rng(39);
    GradWorkspace ws;
    VecX grad;
    for (int trial = 0; trial < 5; ++trial) {
        const ModelParams params = random_state(rng);
        const Keypoints2D target = random_target(rng, 0.2);
        const double loss =
            reproj_loss_and_grad(params, target, model, grad, ws);
        CHECK(loss == reproj_loss(params, target, model));
        CHECK((grad - reproj_grad(params, target, model))
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
}
