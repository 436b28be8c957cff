#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace bodyfit {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using JointSet = Eigen::Matrix<double, Eigen::Dynamic, 3>;  // one row per joint
using Points2D = Eigen::Matrix<double, Eigen::Dynamic, 2>;

// Full parameter vector layout, fixed everywhere:
//   [ theta (69) | beta (10) | R axis-angle (3) | t (2) | s (1) ]  -> 85
inline constexpr int kJointCount = 24;
inline constexpr int kArticulatedJoints = kJointCount - 1;
inline constexpr int kThetaDim = 3 * kArticulatedJoints;  // 69
inline constexpr int kBetaDim = 10;
inline constexpr int kParamDim = kThetaDim + kBetaDim + 6;  // 85
inline constexpr int kTargetDim = 3 * kJointCount;          // (u, v, vis) per joint
inline constexpr int kNetInputDim = 2 * kParamDim + kTargetDim;  // 242

inline constexpr int kThetaOffset = 0;
inline constexpr int kBetaOffset = kThetaDim;
inline constexpr int kRotOffset = kThetaDim + kBetaDim;    // 79
inline constexpr int kTransOffset = kRotOffset + 3;        // 82
inline constexpr int kScaleOffset = kTransOffset + 2;      // 84

struct PoseShape {
    VecX theta = VecX::Zero(kThetaDim);  // axis-angle per articulated joint
    VecX beta = VecX::Zero(kBetaDim);

    void validate() const;  // dimensions and finiteness
};

// Weak-perspective camera. The global body orientation lives here, not in FK.
struct CameraParams {
    Vec3 rotation = Vec3::Zero();  // axis-angle
    Vec2 translation = Vec2::Zero();
    double scale = 1.0;

    // Observation cameras must have positive scale; optimizer iterates are
    // allowed to wander through s <= 0 and skip this check.
    void validate() const;
};

struct ModelParams {
    PoseShape pose_shape;
    CameraParams camera;

    VecX flatten() const;
    static ModelParams unflatten(const VecX& v);
    static ModelParams zero();  // includes scale = 0, matching zero-initialized fits
};

// 2D target joints with per-joint visibility. Invisible joints carry zeroed
// coordinates; that is the contract consumed by the update network input.
struct Keypoints2D {
    Points2D points;                       // k x 2
    std::vector<std::uint8_t> visibility;  // k

    int joint_count() const { return static_cast<int>(points.rows()); }
    int visible_count() const;
    void zero_invisible();
    VecX flatten() const;  // k*3: (u, v, vis) per joint
};

}  // namespace bodyfit
