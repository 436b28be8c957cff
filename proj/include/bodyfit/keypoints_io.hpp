#pragma once

#include <string>
#include <vector>

#include "bodyfit/types.hpp"

namespace bodyfit {

struct KeypointFrame {
    std::string frame_id;
    Keypoints2D keypoints;
};

// Line format: frame_id followed by u v vis per joint, whitespace separated.
// '#' starts a comment, blank lines are skipped. Parse errors carry the line
// number.
std::vector<KeypointFrame> load_keypoints(const std::string& path);
void save_keypoints(const std::vector<KeypointFrame>& frames, const std::string& path);

// Fitted parameters, one frame per line: frame_id, a status word, then the
// 85 flattened values (zeros for skipped frames).
enum class FitStatus { ok, skipped, diverged };

const char* to_string(FitStatus status);
FitStatus fit_status_from_string(const std::string& s);

struct ParamsRecord {
    std::string frame_id;
    FitStatus status = FitStatus::ok;
    VecX params;
};

void save_params(const std::vector<ParamsRecord>& records, const std::string& path);
std::vector<ParamsRecord> load_params(const std::string& path);

}  // namespace bodyfit
