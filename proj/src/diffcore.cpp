#include "bodyfit/diffcore.hpp"

#include <cmath>
#include <string>

#include "bodyfit/error.hpp"

namespace bodyfit {

namespace {

void check_instance(const ModelParams& params, const Keypoints2D& target,
                    const SkeletonModel& model) {
    params.pose_shape.validate();
    if (!params.camera.rotation.allFinite() ||
        !params.camera.translation.allFinite() ||
        !std::isfinite(params.camera.scale)) {
        // Scale may be zero or negative here: optimizer iterates start at
        // the all-zero parameter vector.
        throw Error(ErrorCode::invalid_argument,
                    "camera parameters contain non-finite values");
    }
    if (target.joint_count() != model.joint_count ||
        static_cast<int>(target.visibility.size()) != model.joint_count) {
        throw Error(ErrorCode::shape_mismatch,
                    "target joint count does not match the skeleton");
    }
    if (target.visible_count() == 0) {
        throw Error(ErrorCode::degenerate,
                    "target has no visible joints");
    }
}

// Forward pass through FK -> rotate -> project -> per-joint residuals.
// Returns the loss; fills ws.fk and ws.projected.
double forward_pass(const ModelParams& params, const Keypoints2D& target,
                    const SkeletonModel& model, const Mat3& cam_rot,
                    GradWorkspace& ws) {
    forward_kinematics(model, params.pose_shape.theta, params.pose_shape.beta,
                       ws.fk);
    ws.projected.resize(model.joint_count, 2);
    const double s = params.camera.scale;
    double loss = 0.0;
    int visible = 0;
    for (int j = 0; j < model.joint_count; ++j) {
        const Vec3 q = cam_rot * ws.fk.joints.row(j).transpose();
        ws.projected(j, 0) = s * q.x() + params.camera.translation.x();
        ws.projected(j, 1) = s * q.y() + params.camera.translation.y();
        if (target.visibility[j]) {
            const double du = ws.projected(j, 0) - target.points(j, 0);
            const double dv = ws.projected(j, 1) - target.points(j, 1);
            loss += du * du + dv * dv;
            ++visible;
        }
    }
    return loss / visible;
}

}  // namespace

double reproj_loss(const ModelParams& params, const Keypoints2D& target,
                   const SkeletonModel& model) {
    check_instance(params, target, model);
    GradWorkspace ws;
    return forward_pass(params, target, model, rodrigues(params.camera.rotation),
                        ws);
}

double reproj_loss_and_grad(const ModelParams& params, const Keypoints2D& target,
                            const SkeletonModel& model, VecX& grad,
                            GradWorkspace& ws) {
    check_instance(params, target, model);
    const int joints = model.joint_count;
    const Mat3 cam_rot = rodrigues(params.camera.rotation);
    const double loss = forward_pass(params, target, model, cam_rot, ws);
    const double s = params.camera.scale;
    const double inv_m = 1.0 / target.visible_count();

    grad = VecX::Zero(kParamDim);
    ws.grad_joints.resize(joints, 3);
    ws.grad_joints.setZero();
    ws.grad_global_rot.assign(joints, Mat3::Zero());

    // Projection and camera stage. For each visible joint the residual
    // r = proj - target pulls on t directly, on s through the rotated point
    // q = R X, on R through its jacobian, and on X through R^T.
    const std::array<Mat3, 3> cam_jac = rodrigues_jacobian(params.camera.rotation);
    for (int j = 0; j < joints; ++j) {
        if (!target.visibility[j]) continue;
        const Vec3 x = ws.fk.joints.row(j).transpose();
        const Vec3 q = cam_rot * x;
        const double ru = 2.0 * inv_m * (ws.projected(j, 0) - target.points(j, 0));
        const double rv = 2.0 * inv_m * (ws.projected(j, 1) - target.points(j, 1));

        grad(kTransOffset + 0) += ru;
        grad(kTransOffset + 1) += rv;
        grad(kScaleOffset) += ru * q.x() + rv * q.y();

        // d loss / d q, zero in z (orthographic drop).
        const Vec3 gq(s * ru, s * rv, 0.0);
        for (int i = 0; i < 3; ++i) {
            grad(kRotOffset + i) += gq.dot(cam_jac[i] * x);
        }
        ws.grad_joints.row(j) = (cam_rot.transpose() * gq).transpose();
    }

    // FK stage, children before parents. Each joint's accumulated position
    // gradient flows into its blended offset (hence beta), its own rotation
    // (hence theta), and its parent.
    for (int j = joints - 1; j >= 1; --j) {
        const int p = model.parents[j];
        const Vec3 gx = ws.grad_joints.row(j).transpose();
        const Vec3 off = ws.fk.offsets.row(j).transpose();

        // X_j = X_p + G_j o_j
        ws.grad_global_rot[j] += gx * off.transpose();
        const Vec3 g_off = ws.fk.global_rot[j].transpose() * gx;
        grad.segment(kBetaOffset, kBetaDim) +=
            model.shape_basis[j].transpose() * g_off;

        // G_j = G_p A_j: split the rotation gradient between theta_j and the
        // parent's accumulated rotation.
        const Mat3 ga = ws.fk.global_rot[p].transpose() * ws.grad_global_rot[j];
        const std::array<Mat3, 3> jac =
            rodrigues_jacobian(params.pose_shape.theta.segment<3>(3 * (j - 1)));
        for (int i = 0; i < 3; ++i) {
            grad(3 * (j - 1) + i) = (ga.array() * jac[i].array()).sum();
        }
        ws.grad_global_rot[p] +=
            ws.grad_global_rot[j] * ws.fk.local_rot[j].transpose();
        ws.grad_joints.row(p) += gx.transpose();
    }

    return loss;
}

VecX reproj_grad(const ModelParams& params, const Keypoints2D& target,
                 const SkeletonModel& model) {
    VecX grad;
    GradWorkspace ws;
    reproj_loss_and_grad(params, target, model, grad, ws);
    return grad;
}

VecX finite_diff_grad(const ModelParams& params, const Keypoints2D& target,
                      const SkeletonModel& model, double step) {
    if (!(step > 0.0) || !std::isfinite(step)) {
        throw Error(ErrorCode::invalid_argument,
                    "finite difference step must be positive, got " +
                        std::to_string(step));
    }
    const VecX base = params.flatten();
    VecX grad(kParamDim);
    for (int i = 0; i < kParamDim; ++i) {
        VecX v = base;
        v(i) = base(i) + step;
        const double hi = reproj_loss(ModelParams::unflatten(v), target, model);
        v(i) = base(i) - step;
        const double lo = reproj_loss(ModelParams::unflatten(v), target, model);
        grad(i) = (hi - lo) / (2.0 * step);
    }
    return grad;
}

}  // namespace bodyfit
