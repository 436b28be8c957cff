#pragma once

#include "bodyfit/types.hpp"

namespace bodyfit {

// Weak-perspective projection x = s * drop_z(R * X) + t.
// Validates the camera (s > 0); use project_unchecked for optimizer states.
Points2D project(const JointSet& joints, const CameraParams& cam);

// Same formula without the validity check. Zero-initialized fits start at
// s = 0, which is a legal optimizer state but not a physical camera.
Points2D project_unchecked(const JointSet& joints, const CameraParams& cam);

}  // namespace bodyfit
