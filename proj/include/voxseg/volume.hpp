#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "voxseg/geometry.hpp"

namespace voxseg {

enum class ValueKind { intensity, mask };

struct VolumeMeta {
    Dims3 dims;
    Spacing3 spacing;
    ValueKind kind = ValueKind::intensity;
    std::string case_id; // optional
};

// 3D scalar field, x fastest. Values are raw intensities until preprocessed.
struct CtVolume {
    Dims3 dims;
    Spacing3 spacing{1.0, 1.0, 1.0};
    std::vector<float> voxels;
    std::string case_id;

    float at(int64_t x, int64_t y, int64_t z) const {
        return voxels[static_cast<size_t>(linear_index(dims, x, y, z))];
    }
    float& at(int64_t x, int64_t y, int64_t z) {
        return voxels[static_cast<size_t>(linear_index(dims, x, y, z))];
    }
};

// Binary mask paired with a CtVolume of the same dims.
struct LabelVolume {
    Dims3 dims;
    Spacing3 spacing{1.0, 1.0, 1.0};
    std::vector<uint8_t> mask; // exactly 0 or 1
    std::string case_id;

    uint8_t at(int64_t x, int64_t y, int64_t z) const {
        return mask[static_cast<size_t>(linear_index(dims, x, y, z))];
    }
    uint8_t& at(int64_t x, int64_t y, int64_t z) {
        return mask[static_cast<size_t>(linear_index(dims, x, y, z))];
    }
    int64_t foreground_count() const {
        int64_t n = 0;
        for (uint8_t v : mask) n += v;
        return n;
    }
};

using AnyVolume = std::variant<CtVolume, LabelVolume>;

// Native format: <name>.f32raw (little-endian f32 payload) + <name>.json
// sidecar {dims, spacing, kind, order:"xyz"}. Paths ending in .nii go through
// the minimal NIfTI-1 reader/writer instead. Round trips are bitwise.
AnyVolume load_volume(const std::string& path);
void save_volume(const CtVolume& v, const std::string& path);
void save_volume(const LabelVolume& v, const std::string& path);

CtVolume load_ct(const std::string& path);
LabelVolume load_label(const std::string& path);

// clamp to [lo, hi]; spacing and dims unchanged
CtVolume truncate_intensity(const CtVolume& v, float lo = -100.0f, float hi = 240.0f);

// Per-case zero mean, unit population variance; a constant volume maps to
// all zeros. Statistics are computed over every voxel of the case.
CtVolume normalize_zero_mean_unit_var(const CtVolume& v);

} // namespace voxseg
