#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxseg/network.hpp"
#include "voxseg/optim.hpp"
#include "voxseg/sampler.hpp"
#include "voxseg/tiling.hpp"

namespace voxseg {

// Every tunable in one place. Serializes losslessly; unknown keys are
// rejected. A resolved copy is written next to every command's outputs.
struct RunConfig {
    NetworkConfig network;
    OptimConfig optim;
    int64_t fine_margin = 8;
    int64_t n_coarse = 6;
    int64_t n_fine = 12;
    FusionMode fusion = FusionMode::average;
    double filter_fraction = 0.2;
    int connectivity = 26;
    bool mask_crop_input = false;
    uint64_t seed = 0;
    int64_t log_interval = 50;

    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
    static RunConfig from_file(const std::string& path);
    void write(const std::string& path) const;

    bool operator==(const RunConfig&) const = default;
};

// 4-fold assignment: seeded uniform shuffle of the sorted ids, then
// contiguous chunks with sizes as equal as possible.
struct SplitManifest {
    uint64_t seed = 0;
    std::vector<std::vector<std::string>> folds; // 4 folds

    std::string to_json() const;
    static SplitManifest from_file(const std::string& path);
};

SplitManifest make_split(std::vector<std::string> case_ids, uint64_t seed, int folds = 4);

} // namespace voxseg
