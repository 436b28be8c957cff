#include "bodyfit/keypoints_io.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bodyfit/error.hpp"
#include "text_util.hpp"

namespace bodyfit {

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line,
                             const std::string& what) {
    throw Error(ErrorCode::data,
                path + ":" + std::to_string(line) + ": " + what);
}

// Strips a trailing '#' comment and returns the whitespace-split tokens.
std::vector<std::string> tokenize(const std::string& line) {
    const auto hash = line.find('#');
    std::istringstream is(hash == std::string::npos ? line
                                                    : line.substr(0, hash));
    std::vector<std::string> tokens;
    std::string tok;
    while (is >> tok) tokens.push_back(tok);
    return tokens;
}

double parse_field(const std::string& tok, const std::string& path, int line,
                   const char* what) {
    double v;
    if (!detail::parse_double(tok, v)) {
        parse_fail(path, line, std::string("bad ") + what + " '" + tok + "'");
    }
    return v;
}

}  // namespace

std::vector<KeypointFrame> load_keypoints(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open " + path);
    }
    std::vector<KeypointFrame> frames;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto tokens = tokenize(line);
        if (tokens.empty()) continue;
        if (tokens.size() != 1 + 3 * kJointCount) {
            parse_fail(path, lineno,
                       "expected frame id plus " +
                           std::to_string(3 * kJointCount) + " values, got " +
                           std::to_string(tokens.size()) + " tokens");
        }
        KeypointFrame frame;
        frame.frame_id = tokens[0];
        frame.keypoints.points.resize(kJointCount, 2);
        frame.keypoints.visibility.resize(kJointCount);
        for (int j = 0; j < kJointCount; ++j) {
            frame.keypoints.points(j, 0) =
                parse_field(tokens[1 + 3 * j], path, lineno, "u");
            frame.keypoints.points(j, 1) =
                parse_field(tokens[2 + 3 * j], path, lineno, "v");
            const std::string& vis = tokens[3 + 3 * j];
            if (vis == "0") {
                frame.keypoints.visibility[j] = 0;
            } else if (vis == "1") {
                frame.keypoints.visibility[j] = 1;
            } else {
                parse_fail(path, lineno, "visibility must be 0 or 1, got '" +
                                             vis + "'");
            }
        }
        frame.keypoints.zero_invisible();
        frames.push_back(std::move(frame));
    }
    return frames;
}

void save_keypoints(const std::vector<KeypointFrame>& frames,
                    const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::io, "cannot open " + path + " for writing");
    }
    out << "# bodyfit keypoints: frame_id then u v vis per joint\n";
    for (const auto& frame : frames) {
        if (frame.keypoints.joint_count() != kJointCount ||
            frame.keypoints.visibility.size() !=
                static_cast<std::size_t>(kJointCount)) {
            throw Error(ErrorCode::shape_mismatch,
                        "frame " + frame.frame_id + " does not have " +
                            std::to_string(kJointCount) + " joints");
        }
        out << frame.frame_id;
        for (int j = 0; j < kJointCount; ++j) {
            const bool vis = frame.keypoints.visibility[j] != 0;
            out << ' '
                << detail::fmt_double(vis ? frame.keypoints.points(j, 0) : 0.0)
                << ' '
                << detail::fmt_double(vis ? frame.keypoints.points(j, 1) : 0.0)
                << ' ' << (vis ? '1' : '0');
        }
        out << '\n';
    }
    if (!out) {
        throw Error(ErrorCode::io, "failed writing " + path);
    }
}

const char* to_string(FitStatus status) {
    switch (status) {
        case FitStatus::ok: return "ok";
        case FitStatus::skipped: return "skipped";
        case FitStatus::diverged: return "diverged";
    }
    throw Error(ErrorCode::invalid_argument, "unknown fit status");
}

FitStatus fit_status_from_string(const std::string& s) {
    if (s == "ok") return FitStatus::ok;
    if (s == "skipped") return FitStatus::skipped;
    if (s == "diverged") return FitStatus::diverged;
    throw Error(ErrorCode::data, "unknown fit status '" + s + "'");
}

void save_params(const std::vector<ParamsRecord>& records,
                 const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::io, "cannot open " + path + " for writing");
    }
    out << "# bodyfit params: frame_id status then 85 values\n";
    for (const auto& rec : records) {
        if (rec.params.size() != kParamDim) {
            throw Error(ErrorCode::shape_mismatch,
                        "frame " + rec.frame_id + " has " +
                            std::to_string(rec.params.size()) +
                            " values, expected " + std::to_string(kParamDim));
        }
        out << rec.frame_id << ' ' << to_string(rec.status);
        for (int i = 0; i < kParamDim; ++i) {
            out << ' ' << detail::fmt_double(rec.params(i));
        }
        out << '\n';
    }
    if (!out) {
        throw Error(ErrorCode::io, "failed writing " + path);
    }
}

std::vector<ParamsRecord> load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open " + path);
    }
    std::vector<ParamsRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto tokens = tokenize(line);
        if (tokens.empty()) continue;
        if (tokens.size() != 2 + kParamDim) {
            parse_fail(path, lineno,
                       "expected frame id, status, and " +
                           std::to_string(kParamDim) + " values, got " +
                           std::to_string(tokens.size()) + " tokens");
        }
        ParamsRecord rec;
        rec.frame_id = tokens[0];
        try {
            rec.status = fit_status_from_string(tokens[1]);
        } catch (const Error&) {
            parse_fail(path, lineno, "unknown fit status '" + tokens[1] + "'");
        }
        rec.params.resize(kParamDim);
        for (int i = 0; i < kParamDim; ++i) {
            rec.params(i) = parse_field(tokens[2 + i], path, lineno, "value");
        }
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace bodyfit
