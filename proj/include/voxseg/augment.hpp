#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "voxseg/rng.hpp"

namespace voxseg {

// One spatial transform applied identically to image and label: a rotation of
// 0/90/180/270 degrees about one axis followed by independent per-axis flips.
// Pure permutation, so foreground counts are preserved exactly.
struct AugmentOp {
    int axis = 0;          // 0=x, 1=y, 2=z
    int quarter_turns = 0; // 0..3
    std::array<bool, 3> flip{false, false, false};
};

// axis uniform over {x,y,z}, angle uniform over {0,90,180,270}, flips fair coins
AugmentOp sample_augment(Rng& rng);

// In place; throws when a 90/270 rotation pairs axes of different extents.
void apply_augment(const AugmentOp& op, const std::array<int64_t, 3>& size,
                   std::vector<float>& image, std::vector<float>& label);

} // namespace voxseg
