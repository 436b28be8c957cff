#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bodyfit/types.hpp"

namespace bodyfit {

// A bank of sampled poses (theta, beta only) to draw training targets from.
// Cameras and dropout are rolled fresh each step, so the same bank serves any
// training configuration.
struct PoseDataset {
    std::string name;
    std::uint64_t seed = 0;  // seed the bank was generated from
    std::vector<PoseShape> records;

    std::size_t size() const { return records.size(); }
    void validate() const;
};

// Binary container: magic "BFPOSED1", name, seed, count, then per record
// theta (69 doubles) followed by beta (10 doubles), little endian.
void save_dataset(const PoseDataset& dataset, const std::string& path);
PoseDataset load_dataset(const std::string& path);

}  // namespace bodyfit
