#pragma once

#include <array>

#include "bodyfit/skeleton.hpp"
#include "bodyfit/types.hpp"

namespace bodyfit {

// Axis-angle to rotation matrix. Smooth at the zero vector: switches to a
// second-order Taylor expansion below angle 1e-8.
Mat3 rodrigues(const Vec3& axis_angle);

// Derivative of rodrigues() with respect to each axis-angle component.
// out[i](r, c) = d R(r, c) / d v_i. Uses series expansions of the scalar
// factors near zero so the derivative stays accurate through the origin.
std::array<Mat3, 3> rodrigues_jacobian(const Vec3& axis_angle);

// Joint positions at theta = 0: template offsets plus the shape blend,
// accumulated along the tree from the root. Linear in beta.
JointSet rest_joints(const SkeletonModel& model, const VecX& beta);

// Intermediate state of one FK evaluation, reused by the gradient pass.
struct FkCache {
    JointSet joints;               // J x 3
    JointSet offsets;              // rest offsets after shape blend
    std::vector<Mat3> local_rot;   // per joint (identity at root)
    std::vector<Mat3> global_rot;  // accumulated along the chain
};

// Poses the skeleton. The root stays at the origin with identity
// orientation (the camera owns the global rotation); joint j places itself
// at X_parent + G_j * offset_j with G_j = G_parent * rodrigues(theta_j).
// theta holds 3 * (J - 1) values, one axis-angle per non-root joint.
JointSet forward_kinematics(const SkeletonModel& model, const VecX& theta,
                            const VecX& beta);
void forward_kinematics(const SkeletonModel& model, const VecX& theta,
                        const VecX& beta, FkCache& cache);

}  // namespace bodyfit
