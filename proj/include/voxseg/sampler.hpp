#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "voxseg/rng.hpp"
#include "voxseg/volume.hpp"

namespace voxseg {

struct SamplerSpec {
    enum class Stage { coarse, fine };
    Stage stage = Stage::coarse;
    std::array<int64_t, 3> patch_size{64, 64, 64}; // x, y, z; equals the network input
    int64_t fine_margin = 8;                       // shared with the inference crop
};

struct PatchPair {
    std::array<int64_t, 3> size; // x, y, z
    std::vector<float> image;    // x fastest
    std::vector<float> label;    // exactly 0 or 1
};

// Origin drawn uniformly over all in-bounds positions; volumes smaller than
// the patch are zero-padded symmetrically first (zero = the post-normalization
// mean). Patches may contain no foreground at all (hard negatives).
PatchPair sample_coarse(const CtVolume& vol, const LabelVolume& lab, Rng& rng,
                        const std::array<int64_t, 3>& patch);

// Origin drawn uniformly over positions inside the label bounding box padded
// by margin (clamped to the volume); every patch intersects the padded box.
// Throws on an empty label.
PatchPair sample_fine(const CtVolume& vol, const LabelVolume& lab, Rng& rng,
                      const std::array<int64_t, 3>& patch, int64_t margin);

// Per-axis inclusive origin range used by sample_fine; exposed for tests.
struct FineOriginRange {
    std::array<int64_t, 3> lo, hi;
};
FineOriginRange fine_origin_range(const Dims3& dims, const BoundingBox& box,
                                  const std::array<int64_t, 3>& patch, int64_t margin);

} // namespace voxseg
