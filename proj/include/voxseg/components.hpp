#pragma once

#include <cstdint>
#include <vector>

#include "voxseg/volume.hpp"

namespace voxseg {

// Foreground components under 6- or 26-connectivity. Ids are dense 1..count
// in first-encounter scan order; background stays 0.
struct ComponentLabeling {
    Dims3 dims;
    std::vector<int32_t> labels;
    int32_t count = 0;
    std::vector<int64_t> sizes; // sizes[id-1]
    int connectivity = 26;
};

ComponentLabeling connected_components(const LabelVolume& mask, int connectivity = 26);

// Removes every component whose voxel count is below fraction * (foreground
// count of the input mask); the threshold is computed once against the
// original total.
LabelVolume filter_small_components(const LabelVolume& mask, double fraction,
                                    int connectivity = 26);

} // namespace voxseg
