#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxseg/volume.hpp"

namespace voxseg {

// Tiny RGB PNG writer (stored deflate blocks, no external deps); used only
// for diagnostic overlays.
void write_png_rgb(const std::string& path, int64_t width, int64_t height,
                   const std::vector<uint8_t>& rgb);

// Mid-z slice of the intensity volume with prediction/ground-truth tinting:
// truth alone red, prediction alone green, overlap yellow.
void write_overlay_png(const std::string& path, const CtVolume& vol,
                       const LabelVolume& pred, const LabelVolume& truth);

} // namespace voxseg
