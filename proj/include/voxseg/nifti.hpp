#pragma once

#include <string>

#include "voxseg/volume.hpp"

namespace voxseg {

// Minimal single-file NIfTI-1 subset: 348-byte header, magic "n+1",
// little-endian, datatypes uint8 / int16 / float32, no compression.
// uint8 files load as masks, the numeric types as intensity volumes.
AnyVolume nifti_load(const std::string& path);
void nifti_save(const CtVolume& v, const std::string& path);
void nifti_save(const LabelVolume& v, const std::string& path);

} // namespace voxseg
