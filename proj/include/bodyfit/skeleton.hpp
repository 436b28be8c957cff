#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bodyfit/types.hpp"

namespace bodyfit {

/** Articulated skeleton: a kinematic tree with a rest-pose template and a
 *  linear shape basis mapping beta to per-joint offset deltas. Joints are
 *  produced directly by forward kinematics; there is no mesh. Immutable
 *  after load, safe to share across threads. */
struct SkeletonModel {
    int joint_count = 0;
    std::vector<int> parents;    // parents[0] == -1, parents[j] < j
    JointSet template_offsets;   // J x 3, offset from parent in rest pose
    std::vector<Eigen::Matrix<double, 3, kBetaDim>> shape_basis;  // per joint
    std::string name;
    std::uint64_t seed = 0;

    int articulated_count() const { return joint_count - 1; }
    double mean_bone_length() const;

    // Tree structure, topological order, zero root offset, and the basis
    // norm bound guaranteeing positive bone lengths for |beta|_inf <= 3.
    void validate() const;
};

// 24-joint tree mirroring the usual human layout (pelvis root, spine chain,
// two legs, two arms). The shape basis is generated from `seed` as small
// random per-joint offset directions and then frozen.
SkeletonModel make_default_skeleton(std::uint64_t seed = 7,
                                    const std::string& name = "desk24");

SkeletonModel load_skeleton(const std::string& path);
void save_skeleton(const SkeletonModel& model, const std::string& path);

}  // namespace bodyfit
