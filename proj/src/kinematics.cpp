#include "bodyfit/kinematics.hpp"

#include <cmath>
#include <string>

#include "bodyfit/error.hpp"

namespace bodyfit {

namespace {

Mat3 cross_matrix(const Vec3& v) {
    Mat3 k;
    k << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
         -v.y(), v.x(), 0.0;
    return k;
}

// Angle below which R = I + K + K^2/2 (with the theta^2 correction) is
// exact to machine precision.
constexpr double kRotTaylorAngle = 1e-8;

// The jacobian's scalar factors a'(t)/t and b'(t)/t suffer catastrophic
// cancellation well before kRotTaylorAngle, so they switch to their series
// earlier. At 1e-4 the series truncation error is ~1e-16 and the direct
// formulas are still good to ~1e-8.
constexpr double kJacTaylorAngle = 1e-4;

}  // namespace

Mat3 rodrigues(const Vec3& axis_angle) {
    if (!axis_angle.allFinite()) {
        throw Error(ErrorCode::invalid_argument,
                    "rodrigues: non-finite axis-angle input");
    }
    const double t2 = axis_angle.squaredNorm();
    const double t = std::sqrt(t2);
    const Mat3 k = cross_matrix(axis_angle);
    double a, b;  // R = I + a K + b K^2
    if (t < kRotTaylorAngle) {
        a = 1.0 - t2 / 6.0;
        b = 0.5 - t2 / 24.0;
    } else {
        a = std::sin(t) / t;
        b = (1.0 - std::cos(t)) / t2;
    }
    return Mat3::Identity() + a * k + b * (k * k);
}

std::array<Mat3, 3> rodrigues_jacobian(const Vec3& axis_angle) {
    if (!axis_angle.allFinite()) {
        throw Error(ErrorCode::invalid_argument,
                    "rodrigues_jacobian: non-finite axis-angle input");
    }
    const double t2 = axis_angle.squaredNorm();
    const double t = std::sqrt(t2);
    const Mat3 k = cross_matrix(axis_angle);
    const Mat3 k2 = k * k;

    // R = I + a(t) K + b(t) K^2 with a = sin t / t, b = (1 - cos t) / t^2.
    // dR/dv_i = (a'/t) v_i K + a E_i + (b'/t) v_i K^2 + b (E_i K + K E_i),
    // E_i being the cross matrix of the i-th basis vector.
    double a, b, da_over_t, db_over_t;
    if (t < kJacTaylorAngle) {
        a = 1.0 - t2 / 6.0;
        b = 0.5 - t2 / 24.0;
        da_over_t = -1.0 / 3.0 + t2 / 30.0;
        db_over_t = -1.0 / 12.0 + t2 / 180.0;
    } else {
        const double s = std::sin(t);
        const double c = std::cos(t);
        a = s / t;
        b = (1.0 - c) / t2;
        da_over_t = (t * c - s) / (t2 * t);
        db_over_t = (t * s - 2.0 * (1.0 - c)) / (t2 * t2);
    }

    std::array<Mat3, 3> out;
    for (int i = 0; i < 3; ++i) {
        Vec3 e = Vec3::Zero();
        e(i) = 1.0;
        const Mat3 ei = cross_matrix(e);
        out[i] = da_over_t * axis_angle(i) * k + a * ei +
                 db_over_t * axis_angle(i) * k2 + b * (ei * k + k * ei);
    }
    return out;
}

namespace {

JointSet blended_offsets(const SkeletonModel& model, const VecX& beta) {
    if (beta.size() != kBetaDim) {
        throw Error(ErrorCode::shape_mismatch,
                    "beta must have " + std::to_string(kBetaDim) + " entries");
    }
    if (!beta.allFinite()) {
        throw Error(ErrorCode::invalid_argument, "beta contains non-finite values");
    }
    JointSet offsets(model.joint_count, 3);
    for (int j = 0; j < model.joint_count; ++j) {
        offsets.row(j) = model.template_offsets.row(j) +
                         (model.shape_basis[j] * beta).transpose();
    }
    return offsets;
}

}  // namespace

JointSet rest_joints(const SkeletonModel& model, const VecX& beta) {
    const JointSet offsets = blended_offsets(model, beta);
    JointSet joints(model.joint_count, 3);
    joints.row(0).setZero();
    for (int j = 1; j < model.joint_count; ++j) {
        joints.row(j) = joints.row(model.parents[j]) + offsets.row(j);
    }
    return joints;
}

void forward_kinematics(const SkeletonModel& model, const VecX& theta,
                        const VecX& beta, FkCache& cache) {
    const int n = model.articulated_count();
    if (theta.size() != 3 * n) {
        throw Error(ErrorCode::shape_mismatch,
                    "theta must have " + std::to_string(3 * n) +
                        " entries, got " + std::to_string(theta.size()));
    }
    if (!theta.allFinite()) {
        throw Error(ErrorCode::invalid_argument, "theta contains non-finite values");
    }

    cache.offsets = blended_offsets(model, beta);
    cache.local_rot.resize(model.joint_count);
    cache.global_rot.resize(model.joint_count);
    cache.joints.resize(model.joint_count, 3);

    // Root: fixed at the origin with identity orientation; the camera module
    // owns the global rotation.
    cache.local_rot[0].setIdentity();
    cache.global_rot[0].setIdentity();
    cache.joints.row(0).setZero();

    for (int j = 1; j < model.joint_count; ++j) {
        const int p = model.parents[j];
        cache.local_rot[j] = rodrigues(theta.segment<3>(3 * (j - 1)));
        cache.global_rot[j] = cache.global_rot[p] * cache.local_rot[j];
        cache.joints.row(j) =
            cache.joints.row(p) +
            (cache.global_rot[j] * cache.offsets.row(j).transpose()).transpose();
    }
}

JointSet forward_kinematics(const SkeletonModel& model, const VecX& theta,
                            const VecX& beta) {
    FkCache cache;
    forward_kinematics(model, theta, beta, cache);
    return cache.joints;
}

}  // namespace bodyfit
