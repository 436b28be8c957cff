#pragma once

#include <span>
#include <string>
#include <vector>

#include "bodyfit/fitter.hpp"
#include "bodyfit/skeleton.hpp"
#include "bodyfit/types.hpp"

namespace bodyfit {

struct SimilarityTransform {
    double scale = 1.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

struct ProcrustesResult {
    SimilarityTransform transform;
    JointSet aligned;     // transform applied to the source points
    double residual = 0;  // sum of squared distances after alignment
};

// Similarity transform minimizing sum ||s R a_j + t - b_j||^2, rotation kept
// proper. Needs k >= 3 points spanning at least a plane.
ProcrustesResult procrustes_align(const JointSet& a, const JointSet& b);

// Mean Euclidean per-joint distance.
double mpjpe(const JointSet& pred, const JointSet& gt);

// MPJPE after Procrustes alignment of the prediction to the ground truth.
double pa_mpjpe(const JointSet& pred, const JointSet& gt);

// 3D joints a parameter estimate commits to: posed skeleton rotated by the
// camera, root at the origin. Both metrics consume this.
JointSet posed_joints(const ModelParams& params, const SkeletonModel& model);

struct FrameEval {
    double mpjpe = 0.0;
    double pa_mpjpe = 0.0;
};

// Units follow the skeleton (metres here); reports multiply by 1000 and
// label the result mm-equivalent.
struct EvalReport {
    std::vector<FrameEval> frames;
    double mean_mpjpe = 0.0;
    double mean_pa_mpjpe = 0.0;
    double median_mpjpe = 0.0;
    double median_pa_mpjpe = 0.0;
    // Per-iteration means across frames, present when traces were supplied.
    std::vector<double> curve_mpjpe;
    std::vector<double> curve_pa_mpjpe;
};

EvalReport evaluate(std::span<const FitTrace> traces,
                    std::span<const ModelParams> gt,
                    const SkeletonModel& model);
EvalReport evaluate_params(std::span<const ModelParams> pred,
                           std::span<const ModelParams> gt,
                           const SkeletonModel& model);

void write_report_csv(const EvalReport& report, const std::string& path,
                      std::uint64_t seed = 0);
void write_curves_csv(const EvalReport& report, const std::string& path,
                      std::uint64_t seed = 0);
std::string report_summary(const EvalReport& report);

}  // namespace bodyfit
