#include "bodyfit/types.hpp"

#include <cmath>
#include <string>

#include "bodyfit/error.hpp"

namespace bodyfit {

namespace {

void require_finite(const VecX& v, const char* name) {
    if (!v.allFinite()) {
        throw Error(ErrorCode::invalid_argument,
                    std::string(name) + " contains non-finite values");
    }
}

}  // namespace

void PoseShape::validate() const {
    if (theta.size() != kThetaDim) {
        throw Error(ErrorCode::shape_mismatch,
                    "theta must have " + std::to_string(kThetaDim) +
                        " entries, got " + std::to_string(theta.size()));
    }
    if (beta.size() != kBetaDim) {
        throw Error(ErrorCode::shape_mismatch,
                    "beta must have " + std::to_string(kBetaDim) +
                        " entries, got " + std::to_string(beta.size()));
    }
    require_finite(theta, "theta");
    require_finite(beta, "beta");
}

void CameraParams::validate() const {
    if (!rotation.allFinite() || !translation.allFinite() ||
        !std::isfinite(scale)) {
        throw Error(ErrorCode::invalid_argument,
                    "camera parameters contain non-finite values");
    }
    if (scale <= 0.0) {
        throw Error(ErrorCode::invalid_argument,
                    "camera scale must be positive, got " +
                        std::to_string(scale));
    }
}

VecX ModelParams::flatten() const {
    if (pose_shape.theta.size() != kThetaDim ||
        pose_shape.beta.size() != kBetaDim) {
        throw Error(ErrorCode::shape_mismatch, "pose/shape dimensions are off");
    }
    VecX v(kParamDim);
    v.segment(kThetaOffset, kThetaDim) = pose_shape.theta;
    v.segment(kBetaOffset, kBetaDim) = pose_shape.beta;
    v.segment<3>(kRotOffset) = camera.rotation;
    v.segment<2>(kTransOffset) = camera.translation;
    v(kScaleOffset) = camera.scale;
    return v;
}

ModelParams ModelParams::unflatten(const VecX& v) {
    if (v.size() != kParamDim) {
        throw Error(ErrorCode::shape_mismatch,
                    "parameter vector must have " + std::to_string(kParamDim) +
                        " entries, got " + std::to_string(v.size()));
    }
    ModelParams p;
    p.pose_shape.theta = v.segment(kThetaOffset, kThetaDim);
    p.pose_shape.beta = v.segment(kBetaOffset, kBetaDim);
    p.camera.rotation = v.segment<3>(kRotOffset);
    p.camera.translation = v.segment<2>(kTransOffset);
    p.camera.scale = v(kScaleOffset);
    return p;
}

ModelParams ModelParams::zero() {
    ModelParams p;
    p.camera.scale = 0.0;
    return p;
}

int Keypoints2D::visible_count() const {
    int n = 0;
    for (std::uint8_t v : visibility) {
        if (v) ++n;
    }
    return n;
}

void Keypoints2D::zero_invisible() {
    if (static_cast<int>(visibility.size()) != joint_count()) {
        throw Error(ErrorCode::shape_mismatch,
                    "visibility length does not match point count");
    }
    for (int j = 0; j < joint_count(); ++j) {
        if (!visibility[j]) points.row(j).setZero();
    }
}

VecX Keypoints2D::flatten() const {
    const int k = joint_count();
    if (static_cast<int>(visibility.size()) != k) {
        throw Error(ErrorCode::shape_mismatch,
                    "visibility length does not match point count");
    }
    VecX v = VecX::Zero(3 * k);
    for (int j = 0; j < k; ++j) {
        if (visibility[j]) {
            v(3 * j + 0) = points(j, 0);
            v(3 * j + 1) = points(j, 1);
            v(3 * j + 2) = 1.0;
        }
        // invisible joints stay (0, 0, 0) whatever the stored coordinates
    }
    return v;
}

}  // namespace bodyfit
