#include "voxseg/sampler.hpp"

#include <stdexcept>

#include "voxseg/c2f.hpp"

namespace voxseg {

namespace {

// Symmetric padding offset so a too-small axis is centered in the patch.
int64_t pad_lo(int64_t dim, int64_t patch) { return dim >= patch ? 0 : (patch - dim) / 2; }

PatchPair extract(const CtVolume& vol, const LabelVolume& lab,
                  const std::array<int64_t, 3>& patch,
                  const std::array<int64_t, 3>& origin, // in padded coordinates
                  const std::array<int64_t, 3>& plo) {
    PatchPair out;
    out.size = patch;
    out.image.assign(static_cast<size_t>(patch[0] * patch[1] * patch[2]), 0.0f);
    out.label.assign(out.image.size(), 0.0f);
    for (int64_t z = 0; z < patch[2]; ++z) {
        const int64_t sz = origin[2] + z - plo[2];
        if (sz < 0 || sz >= vol.dims.z) continue;
        for (int64_t y = 0; y < patch[1]; ++y) {
            const int64_t sy = origin[1] + y - plo[1];
            if (sy < 0 || sy >= vol.dims.y) continue;
            for (int64_t x = 0; x < patch[0]; ++x) {
                const int64_t sx = origin[0] + x - plo[0];
                if (sx < 0 || sx >= vol.dims.x) continue;
                const size_t di = static_cast<size_t>((z * patch[1] + y) * patch[0] + x);
                out.image[di] = vol.at(sx, sy, sz);
                out.label[di] = lab.at(sx, sy, sz) ? 1.0f : 0.0f;
            }
        }
    }
    return out;
}

} // namespace

PatchPair sample_coarse(const CtVolume& vol, const LabelVolume& lab, Rng& rng,
                        const std::array<int64_t, 3>& patch) {
    if (vol.dims != lab.dims) throw std::invalid_argument("sample_coarse: dim mismatch");
    const int64_t dim[3] = {vol.dims.x, vol.dims.y, vol.dims.z};
    std::array<int64_t, 3> plo{}, origin{};
    for (int a = 0; a < 3; ++a) {
        plo[a] = pad_lo(dim[a], patch[a]);
        const int64_t pdim = dim[a] >= patch[a] ? dim[a] : patch[a];
        origin[a] = rng.next_in(0, pdim - patch[a]);
    }
    return extract(vol, lab, patch, origin, plo);
}

FineOriginRange fine_origin_range(const Dims3& dims, const BoundingBox& box,
                                  const std::array<int64_t, 3>& patch, int64_t margin) {
    const BoundingBox padded = box.padded_clamped(margin, dims);
    const int64_t dim[3] = {dims.x, dims.y, dims.z};
    FineOriginRange r;
    for (int a = 0; a < 3; ++a) {
        const int64_t pl = pad_lo(dim[a], patch[a]);
        const int64_t pdim = dim[a] >= patch[a] ? dim[a] : patch[a];
        const int64_t last = pdim - patch[a];
        // padded-box bounds expressed in padded coordinates
        int64_t lo = padded.lo[a] + pl;
        int64_t hi = padded.hi[a] + pl;
        if (lo > last) lo = last;
        if (hi > last) hi = last;
        r.lo[a] = lo;
        r.hi[a] = hi;
    }
    return r;
}

PatchPair sample_fine(const CtVolume& vol, const LabelVolume& lab, Rng& rng,
                      const std::array<int64_t, 3>& patch, int64_t margin) {
    if (vol.dims != lab.dims) throw std::invalid_argument("sample_fine: dim mismatch");
    auto box = bbox_of_mask(lab);
    if (!box) throw std::invalid_argument("sample_fine: empty label volume");
    const FineOriginRange r = fine_origin_range(vol.dims, *box, patch, margin);
    const int64_t dim[3] = {vol.dims.x, vol.dims.y, vol.dims.z};
    std::array<int64_t, 3> plo{}, origin{};
    for (int a = 0; a < 3; ++a) {
        plo[a] = pad_lo(dim[a], patch[a]);
        origin[a] = rng.next_in(r.lo[a], r.hi[a]);
    }
    return extract(vol, lab, patch, origin, plo);
}

} // namespace voxseg
