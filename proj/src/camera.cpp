#include "bodyfit/camera.hpp"

#include "bodyfit/kinematics.hpp"

namespace bodyfit {

Points2D project(const JointSet& joints, const CameraParams& cam) {
    cam.validate();
    return project_unchecked(joints, cam);
}

Points2D project_unchecked(const JointSet& joints, const CameraParams& cam) {
    const Mat3 r = rodrigues(cam.rotation);
    // Rows are points, so rotate with R^T on the right.
    Points2D out = cam.scale * (joints * r.transpose()).leftCols<2>();
    out.col(0).array() += cam.translation.x();
    out.col(1).array() += cam.translation.y();
    return out;
}

}  // namespace bodyfit
