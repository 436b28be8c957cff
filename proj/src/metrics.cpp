#include "bodyfit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "bodyfit/error.hpp"
#include "bodyfit/kinematics.hpp"
#include "text_util.hpp"

namespace bodyfit {

namespace {

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 0) {
        const double lo = *std::max_element(v.begin(), v.begin() + mid);
        return 0.5 * (lo + hi);
    }
    return hi;
}

EvalReport finalize(std::vector<FrameEval> frames) {
    EvalReport report;
    report.frames = std::move(frames);
    if (report.frames.empty()) return report;
    std::vector<double> m, pa;
    m.reserve(report.frames.size());
    pa.reserve(report.frames.size());
    for (const auto& f : report.frames) {
        m.push_back(f.mpjpe);
        pa.push_back(f.pa_mpjpe);
        report.mean_mpjpe += f.mpjpe;
        report.mean_pa_mpjpe += f.pa_mpjpe;
    }
    report.mean_mpjpe /= static_cast<double>(report.frames.size());
    report.mean_pa_mpjpe /= static_cast<double>(report.frames.size());
    report.median_mpjpe = median_of(std::move(m));
    report.median_pa_mpjpe = median_of(std::move(pa));
    return report;
}

}  // namespace

ProcrustesResult procrustes_align(const JointSet& a, const JointSet& b) {
    const Eigen::Index k = a.rows();
    if (k != b.rows() || a.cols() != 3 || b.cols() != 3) {
        throw Error(ErrorCode::shape_mismatch,
                    "point sets must be equal-sized k x 3");
    }
    if (k < 3) {
        throw Error(ErrorCode::degenerate,
                    "need at least 3 points to align");
    }

    const Eigen::RowVector3d mu_a = a.colwise().mean();
    const Eigen::RowVector3d mu_b = b.colwise().mean();
    const JointSet ca = a.rowwise() - mu_a;
    const JointSet cb = b.rowwise() - mu_b;

    const double var_a = ca.squaredNorm() / static_cast<double>(k);
    if (var_a <= 0.0) {
        throw Error(ErrorCode::degenerate, "source points are coincident");
    }

    // Cross-covariance of b against a; its SVD carries the rotation.
    const Mat3 sigma = (cb.transpose() * ca) / static_cast<double>(k);
    Eigen::JacobiSVD<Mat3> svd(sigma,
                               Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 d = svd.singularValues();
    if (d(0) <= 0.0 || d(1) <= 1e-12 * d(0)) {
        // Rank < 2 leaves a rotation axis unconstrained.
        throw Error(ErrorCode::degenerate,
                    "points are collinear; alignment is not unique");
    }
    Vec3 signs = Vec3::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
        signs(2) = -1.0;
    }

    ProcrustesResult result;
    result.transform.rotation =
        svd.matrixU() * signs.asDiagonal() * svd.matrixV().transpose();
    result.transform.scale = d.dot(signs) / var_a;
    result.transform.translation =
        mu_b.transpose() -
        result.transform.scale * result.transform.rotation * mu_a.transpose();

    result.aligned = result.transform.scale *
                     (a * result.transform.rotation.transpose());
    result.aligned.rowwise() +=
        Eigen::RowVector3d(result.transform.translation.transpose());
    result.residual = (result.aligned - b).squaredNorm();
    return result;
}

double mpjpe(const JointSet& pred, const JointSet& gt) {
    if (pred.rows() != gt.rows() || pred.cols() != 3 || gt.cols() != 3) {
        throw Error(ErrorCode::shape_mismatch,
                    "point sets must be equal-sized k x 3");
    }
    if (pred.rows() == 0) {
        throw Error(ErrorCode::degenerate, "empty point sets");
    }
    return (pred - gt).rowwise().norm().mean();
}

double pa_mpjpe(const JointSet& pred, const JointSet& gt) {
    return mpjpe(procrustes_align(pred, gt).aligned, gt);
}

JointSet posed_joints(const ModelParams& params, const SkeletonModel& model) {
    const JointSet joints = forward_kinematics(model, params.pose_shape.theta,
                                               params.pose_shape.beta);
    const Mat3 r = rodrigues(params.camera.rotation);
    JointSet posed = joints * r.transpose();
    const Eigen::RowVector3d root = posed.row(0);
    posed.rowwise() -= root;
    return posed;
}

EvalReport evaluate(std::span<const FitTrace> traces,
                    std::span<const ModelParams> gt,
                    const SkeletonModel& model) {
    if (traces.empty() || traces.size() != gt.size()) {
        throw Error(ErrorCode::degenerate, "empty evaluation set");
    }
    std::size_t min_len = traces[0].records.size();
    std::vector<FrameEval> frames(traces.size());
    std::vector<JointSet> gt_joints(traces.size());
    for (std::size_t i = 0; i < traces.size(); ++i) {
        if (traces[i].records.empty()) {
            throw Error(ErrorCode::degenerate, "trace with no recorded states");
        }
        min_len = std::min(min_len, traces[i].records.size());
        gt_joints[i] = posed_joints(gt[i], model);
        const JointSet pred =
            posed_joints(traces[i].final_params(), model);
        frames[i].mpjpe = mpjpe(pred, gt_joints[i]);
        frames[i].pa_mpjpe = pa_mpjpe(pred, gt_joints[i]);
    }

    EvalReport report = finalize(std::move(frames));
    report.curve_mpjpe.assign(min_len, 0.0);
    report.curve_pa_mpjpe.assign(min_len, 0.0);
    for (std::size_t i = 0; i < traces.size(); ++i) {
        for (std::size_t n = 0; n < min_len; ++n) {
            const JointSet pred =
                posed_joints(traces[i].records[n].params, model);
            report.curve_mpjpe[n] += mpjpe(pred, gt_joints[i]);
            report.curve_pa_mpjpe[n] += pa_mpjpe(pred, gt_joints[i]);
        }
    }
    for (std::size_t n = 0; n < min_len; ++n) {
        report.curve_mpjpe[n] /= static_cast<double>(traces.size());
        report.curve_pa_mpjpe[n] /= static_cast<double>(traces.size());
    }
    return report;
}

EvalReport evaluate_params(std::span<const ModelParams> pred,
                           std::span<const ModelParams> gt,
                           const SkeletonModel& model) {
    if (pred.empty() || pred.size() != gt.size()) {
        throw Error(ErrorCode::degenerate, "empty evaluation set");
    }
    std::vector<FrameEval> frames(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const JointSet p = posed_joints(pred[i], model);
        const JointSet g = posed_joints(gt[i], model);
        frames[i].mpjpe = mpjpe(p, g);
        frames[i].pa_mpjpe = pa_mpjpe(p, g);
    }
    return finalize(std::move(frames));
}

void write_report_csv(const EvalReport& report, const std::string& path,
                      std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::io, "cannot open " + path + " for writing");
    }
    out << "# bodyfit-report v1 seed=" << seed << '\n';
    out << "frame,mpjpe_mm,pa_mpjpe_mm\n";
    for (std::size_t i = 0; i < report.frames.size(); ++i) {
        out << i << ',' << detail::fmt_double(report.frames[i].mpjpe * 1000.0)
            << ',' << detail::fmt_double(report.frames[i].pa_mpjpe * 1000.0)
            << '\n';
    }
    if (!out) {
        throw Error(ErrorCode::io, "failed writing " + path);
    }
}

void write_curves_csv(const EvalReport& report, const std::string& path,
                      std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::io, "cannot open " + path + " for writing");
    }
    out << "# bodyfit-curves v1 seed=" << seed << '\n';
    out << "iteration,mpjpe_mm,pa_mpjpe_mm\n";
    for (std::size_t n = 0; n < report.curve_mpjpe.size(); ++n) {
        out << n << ',' << detail::fmt_double(report.curve_mpjpe[n] * 1000.0)
            << ',' << detail::fmt_double(report.curve_pa_mpjpe[n] * 1000.0)
            << '\n';
    }
    if (!out) {
        throw Error(ErrorCode::io, "failed writing " + path);
    }
}

std::string report_summary(const EvalReport& report) {
    std::ostringstream os;
    os << "frames: " << report.frames.size() << '\n';
    os << "mean mpjpe (mm): " << report.mean_mpjpe * 1000.0 << '\n';
    os << "mean pa-mpjpe (mm): " << report.mean_pa_mpjpe * 1000.0 << '\n';
    os << "median mpjpe (mm): " << report.median_mpjpe * 1000.0 << '\n';
    os << "median pa-mpjpe (mm): " << report.median_pa_mpjpe * 1000.0 << '\n';
    if (!report.curve_pa_mpjpe.empty()) {
        os << "pa-mpjpe by iteration (mm):";
        for (const double v : report.curve_pa_mpjpe) os << ' ' << v * 1000.0;
        os << '\n';
    }
    return os.str();
}

}  // namespace bodyfit
