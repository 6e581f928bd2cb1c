#include "voxseg/c2f.hpp"

#include <chrono>
#include <stdexcept>

#include "json.hpp"
#include "voxseg/components.hpp"

namespace voxseg {

std::optional<BoundingBox> bbox_of_mask(const LabelVolume& mask) {
    BoundingBox b;
    bool any = false;
    const Dims3& d = mask.dims;
    for (int64_t z = 0; z < d.z; ++z)
        for (int64_t y = 0; y < d.y; ++y)
            for (int64_t x = 0; x < d.x; ++x) {
                if (!mask.mask[linear_index(d, x, y, z)]) continue;
                if (!any) {
                    b.lo = {x, y, z};
                    b.hi = {x, y, z};
                    any = true;
                } else {
                    if (x < b.lo[0]) b.lo[0] = x;
                    if (y < b.lo[1]) b.lo[1] = y;
                    if (z < b.lo[2]) b.lo[2] = z;
                    if (x > b.hi[0]) b.hi[0] = x;
                    if (y > b.hi[1]) b.hi[1] = y;
                    if (z > b.hi[2]) b.hi[2] = z;
                }
            }
    if (!any) return std::nullopt;
    return b;
}

std::pair<CtVolume, CropRecord> crop_with_margin(const CtVolume& x, const LabelVolume& p,
                                                 int64_t margin, bool mask_input) {
    if (x.dims != p.dims) throw std::invalid_argument("crop_with_margin: dim mismatch");
    if (margin < 0) throw std::invalid_argument("crop_with_margin: negative margin");

    BoundingBox box;
    if (auto b = bbox_of_mask(p)) {
        box = b->padded_clamped(margin, x.dims);
    } else {
        box.lo = {0, 0, 0};
        box.hi = {x.dims.x - 1, x.dims.y - 1, x.dims.z - 1};
    }

    CropRecord rec{box, x.dims};
    CtVolume out;
    out.dims = {box.extent(0), box.extent(1), box.extent(2)};
    out.spacing = x.spacing;
    out.case_id = x.case_id;
    out.voxels.resize(static_cast<size_t>(out.dims.count()));
    for (int64_t z = 0; z < out.dims.z; ++z)
        for (int64_t y = 0; y < out.dims.y; ++y)
            for (int64_t xx = 0; xx < out.dims.x; ++xx) {
                const int64_t sx = box.lo[0] + xx, sy = box.lo[1] + y, sz = box.lo[2] + z;
                float v = x.at(sx, sy, sz);
                if (mask_input && !p.at(sx, sy, sz)) v = 0.0f;
                out.voxels[linear_index(out.dims, xx, y, z)] = v;
            }
    return {std::move(out), rec};
}

LabelVolume decrop(const LabelVolume& fine, const LabelVolume& coarse,
                   const CropRecord& rec) {
    if (coarse.dims != rec.original_dims)
        throw std::invalid_argument("decrop: coarse dims do not match the crop record");
    if (fine.dims.x != rec.box.extent(0) || fine.dims.y != rec.box.extent(1) ||
        fine.dims.z != rec.box.extent(2))
        throw std::invalid_argument("decrop: fine dims do not match the recorded box");
    LabelVolume out = coarse;
    for (int64_t z = 0; z < fine.dims.z; ++z)
        for (int64_t y = 0; y < fine.dims.y; ++y)
            for (int64_t x = 0; x < fine.dims.x; ++x)
                out.at(rec.box.lo[0] + x, rec.box.lo[1] + y, rec.box.lo[2] + z) =
                    fine.at(x, y, z);
    return out;
}

std::string C2fReport::to_json() const {
    nlohmann::json j;
    j["coarse"] = {{"axis_counts", {coarse.axis_counts[0], coarse.axis_counts[1],
                                    coarse.axis_counts[2]}},
                   {"total_windows", coarse.total_windows},
                   {"seconds", coarse.seconds}};
    j["fine"] = {{"axis_counts", {fine.axis_counts[0], fine.axis_counts[1],
                                  fine.axis_counts[2]}},
                 {"total_windows", fine.total_windows},
                 {"seconds", fine.seconds}};
    j["box"] = {{"lo", {box.lo[0], box.lo[1], box.lo[2]}},
                {"hi", {box.hi[0], box.hi[1], box.hi[2]}}};
    j["empty_coarse_fallback"] = empty_coarse_fallback;
    j["margin"] = margin;
    j["filter_fraction"] = filter_fraction;
    j["filter_applied_to"] = "coarse_and_final"; // small components removed at both stages
    j["fusion"] = fusion;
    j["total_seconds"] = total_seconds;
    return j.dump(2);
}

LabelVolume run_c2f(ResDsnNet<float>& coarse_model, ResDsnNet<float>& fine_model,
                    const CtVolume& vol, const C2fOptions& opt, C2fReport* report) {
    const auto t0 = std::chrono::steady_clock::now();
    C2fReport rep;
    rep.margin = opt.margin;
    rep.filter_fraction = opt.filter_fraction;
    rep.fusion = fusion_name(opt.fusion);

    ProbVolume prob_c = infer_volume(coarse_model, vol, opt.n_coarse, opt.fusion, &rep.coarse);
    LabelVolume pc = filter_small_components(binarize(prob_c), opt.filter_fraction,
                                             opt.connectivity);
    rep.empty_coarse_fallback = pc.foreground_count() == 0;

    auto [crop, rec] = crop_with_margin(vol, pc, opt.margin, opt.mask_input);
    rep.box = rec.box;

    ProbVolume prob_f = infer_volume(fine_model, crop, opt.n_fine, opt.fusion, &rep.fine);
    LabelVolume pf = binarize(prob_f);

    LabelVolume out = filter_small_components(decrop(pf, pc, rec), opt.filter_fraction,
                                              opt.connectivity);
    rep.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (report) *report = rep;
    return out;
}

} // namespace voxseg
