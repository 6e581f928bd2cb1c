#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voxseg/network.hpp"
#include "voxseg/volume.hpp"

namespace voxseg {

// Per-voxel foreground probability over a full volume.
struct ProbVolume {
    Dims3 dims;
    Spacing3 spacing{1.0, 1.0, 1.0};
    std::vector<float> values; // in [0, 1]
};

struct TilingPlan {
    std::array<std::vector<int64_t>, 3> origins; // per axis: x, y, z
    std::array<int64_t, 3> window;
    int64_t overlap_n = 0;

    int64_t total_windows() const {
        return static_cast<int64_t>(origins[0].size()) *
               static_cast<int64_t>(origins[1].size()) *
               static_cast<int64_t>(origins[2].size());
    }
};

// Window count per axis: max(floor(extent/window) + n, ceil(extent/window))
// when extent > window, else 1. Origins are round(linspace(0, extent-window,
// count)), deduplicated; first is 0 and last is extent-window, and consecutive
// gaps never exceed the window, so every voxel is covered.
std::vector<int64_t> plan_axis(int64_t extent, int64_t window, int64_t n);

// The per-axis count before origin deduplication (the formula with its
// coverage floor); strictly increasing in n whenever extent > window.
int64_t plan_axis_count(int64_t extent, int64_t window, int64_t n);

TilingPlan plan_windows(const Dims3& extent, const std::array<int64_t, 3>& window,
                        int64_t n);

enum class FusionMode { average, vote };

const char* fusion_name(FusionMode m);
FusionMode fusion_from(const std::string& name);

struct InferenceReport {
    std::array<int64_t, 3> axis_counts{0, 0, 0};
    int64_t total_windows = 0;
    double seconds = 0.0;
    FusionMode fusion = FusionMode::average;
};

// Sliding-window prediction over a preprocessed volume. Average mode divides
// per-voxel probability sums by visit counts; vote mode binarizes each window
// at 0.5 and requires a strict per-voxel majority (ties -> background), so
// the output holds exactly 0 or 1. Volumes smaller than the window are
// zero-padded symmetrically and cropped back. Windows run in a fixed order,
// so the result is identical for any thread count.
ProbVolume infer_volume(ResDsnNet<float>& model, const CtVolume& vol, int64_t n,
                        FusionMode fusion, InferenceReport* report = nullptr);

// Foreground iff p > tau (0.5 exactly stays background at the default).
LabelVolume binarize(const ProbVolume& prob, float tau = 0.5f);

// Per-voxel fusion rules used by infer_volume.
float fuse_average(double prob_sum, int32_t hits);
// strict majority required; a tie is background
float fuse_vote(double foreground_votes, int32_t hits);

} // namespace voxseg
