#pragma once

#include "bodyfit/kinematics.hpp"
#include "bodyfit/skeleton.hpp"
#include "bodyfit/types.hpp"

namespace bodyfit {

// Scratch space for one loss/gradient evaluation. Reusing it across calls
// keeps the training hot loop free of allocations.
struct GradWorkspace {
    FkCache fk;
    Points2D projected;
    std::vector<Mat3> grad_global_rot;
    JointSet grad_joints;
};

// Mean squared 2D distance between the reprojected model joints and the
// visible target joints. Requires at least one visible joint.
double reproj_loss(const ModelParams& params, const Keypoints2D& target,
                   const SkeletonModel& model);

// Analytic gradient of reproj_loss with respect to the flattened 85-dim
// parameter vector, by reverse-mode chain rule through projection, rotation,
// and forward kinematics. Joints marked invisible contribute nothing.
VecX reproj_grad(const ModelParams& params, const Keypoints2D& target,
                 const SkeletonModel& model);

// Loss and gradient in one pass; grad is resized as needed.
double reproj_loss_and_grad(const ModelParams& params, const Keypoints2D& target,
                            const SkeletonModel& model, VecX& grad,
                            GradWorkspace& ws);

// Central finite differences per coordinate. Test oracle; also backs the
// gradcheck command.
VecX finite_diff_grad(const ModelParams& params, const Keypoints2D& target,
                      const SkeletonModel& model, double step);

}  // namespace bodyfit
