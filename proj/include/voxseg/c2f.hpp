#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "voxseg/geometry.hpp"
#include "voxseg/network.hpp"
#include "voxseg/tiling.hpp"
#include "voxseg/volume.hpp"

namespace voxseg {

// Tightest box covering every foreground voxel; nullopt on an empty mask.
std::optional<BoundingBox> bbox_of_mask(const LabelVolume& mask);

// Everything needed to re-embed a fine prediction into the full volume.
struct CropRecord {
    BoundingBox box; // padded, clamped box that was actually cropped
    Dims3 original_dims;
};

// Box = bbox(p) padded by margin, clamped. When mask_input is set the crop is
// taken from x with voxels outside p zeroed (the element-wise product form);
// default is the plain crop, matching how the fine stage is trained. An empty
// p falls back to the whole volume.
std::pair<CtVolume, CropRecord> crop_with_margin(const CtVolume& x, const LabelVolume& p,
                                                 int64_t margin, bool mask_input = false);

// Element-wise replacement: coarse outside the recorded box, fine inside it.
LabelVolume decrop(const LabelVolume& fine, const LabelVolume& coarse,
                   const CropRecord& rec);

struct C2fOptions {
    int64_t n_coarse = 6;
    int64_t n_fine = 12;
    int64_t margin = 8;
    FusionMode fusion = FusionMode::average;
    double filter_fraction = 0.2;
    int connectivity = 26;
    bool mask_input = false;
};

struct C2fReport {
    InferenceReport coarse, fine;
    BoundingBox box;
    bool empty_coarse_fallback = false;
    int64_t margin = 0;
    double filter_fraction = 0.0;
    std::string fusion;
    double total_seconds = 0.0;

    std::string to_json() const;
};

// Coarse pass over the whole volume (small overlap), crop, fine pass over the
// crop (large overlap), re-embed. vol must be preprocessed.
LabelVolume run_c2f(ResDsnNet<float>& coarse_model, ResDsnNet<float>& fine_model,
                    const CtVolume& vol, const C2fOptions& opt, C2fReport* report);

} // namespace voxseg
