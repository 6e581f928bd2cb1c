#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "voxseg/volume.hpp"

namespace voxseg {

// Synthetic cases for desk-scale runs: one randomly placed, randomly oriented
// ellipsoid per case occupying 0.5-3% of the volume, brighter than a smooth
// noisy background. Deterministic per (seed, index).
struct SynthOptions {
    int64_t count = 10;
    Dims3 dims{64, 64, 64};
    uint64_t seed = 0;
    double occupancy_lo = 0.007; // target band kept inside [0.005, 0.03]
    double occupancy_hi = 0.028;
    double foreground_offset = 120.0;
    double noise_sigma = 12.0;
};

std::pair<CtVolume, LabelVolume> synth_case(const SynthOptions& opt, int64_t index);

// Writes case%03d_img.{f32raw,json} and case%03d_lab.{f32raw,json}.
void generate_synthetic(const SynthOptions& opt, const std::string& out_dir);

} // namespace voxseg
