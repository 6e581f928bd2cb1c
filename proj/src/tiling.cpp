#include "voxseg/tiling.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace voxseg {

int64_t plan_axis_count(int64_t extent, int64_t window, int64_t n) {
    if (extent < 1 || window < 1) throw std::invalid_argument("plan_axis: bad extent/window");
    if (n < 0) throw std::invalid_argument("plan_axis: negative overlap parameter");
    if (extent <= window) return 1;
    int64_t count = extent / window + n;
    const int64_t floor_cover = (extent + window - 1) / window;
    if (count < floor_cover) count = floor_cover;
    return count;
}

std::vector<int64_t> plan_axis(int64_t extent, int64_t window, int64_t n) {
    if (extent <= window) {
        if (extent < 1 || window < 1)
            throw std::invalid_argument("plan_axis: bad extent/window");
        if (n < 0) throw std::invalid_argument("plan_axis: negative overlap parameter");
        return {0};
    }
    const int64_t count = plan_axis_count(extent, window, n);
    const int64_t span = extent - window;
    std::vector<int64_t> origins;
    origins.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        const int64_t pos = static_cast<int64_t>(
            std::llround(static_cast<double>(span) * static_cast<double>(i) /
                         static_cast<double>(count - 1)));
        if (origins.empty() || origins.back() != pos) origins.push_back(pos);
    }
    return origins;
}

TilingPlan plan_windows(const Dims3& extent, const std::array<int64_t, 3>& window,
                        int64_t n) {
    TilingPlan plan;
    plan.window = window;
    plan.overlap_n = n;
    plan.origins[0] = plan_axis(extent.x, window[0], n);
    plan.origins[1] = plan_axis(extent.y, window[1], n);
    plan.origins[2] = plan_axis(extent.z, window[2], n);
    return plan;
}

float fuse_average(double prob_sum, int32_t hits) {
    return static_cast<float>(prob_sum / hits);
}

float fuse_vote(double foreground_votes, int32_t hits) {
    return 2 * foreground_votes > hits ? 1.0f : 0.0f;
}

const char* fusion_name(FusionMode m) {
    return m == FusionMode::average ? "average" : "vote";
}

FusionMode fusion_from(const std::string& name) {
    if (name == "average") return FusionMode::average;
    if (name == "vote") return FusionMode::vote;
    throw std::invalid_argument("unknown fusion mode: " + name);
}

ProbVolume infer_volume(ResDsnNet<float>& model, const CtVolume& vol, int64_t n,
                        FusionMode fusion, InferenceReport* report) {
    const auto t_start = std::chrono::steady_clock::now();
    const auto& cfg = model.config();
    const std::array<int64_t, 3> window = cfg.input_size;

    // symmetric zero padding for axes smaller than the window
    const int64_t pd[3] = {vol.dims.x >= window[0] ? vol.dims.x : window[0],
                           vol.dims.y >= window[1] ? vol.dims.y : window[1],
                           vol.dims.z >= window[2] ? vol.dims.z : window[2]};
    const int64_t plo[3] = {(pd[0] - vol.dims.x) / 2, (pd[1] - vol.dims.y) / 2,
                            (pd[2] - vol.dims.z) / 2};
    const Dims3 pdims{pd[0], pd[1], pd[2]};
    std::vector<float> padded(static_cast<size_t>(pdims.count()), 0.0f);
    for (int64_t z = 0; z < vol.dims.z; ++z)
        for (int64_t y = 0; y < vol.dims.y; ++y) {
            const float* src = vol.voxels.data() + linear_index(vol.dims, 0, y, z);
            float* dst = padded.data() + linear_index(pdims, plo[0], y + plo[1], z + plo[2]);
            for (int64_t x = 0; x < vol.dims.x; ++x) dst[x] = src[x];
        }

    const TilingPlan plan = plan_windows(pdims, window, n);

    std::vector<double> sum(padded.size(), 0.0);
    std::vector<int32_t> hits(padded.size(), 0);
    const bool vote = fusion == FusionMode::vote;

    Tensor<float> patch({1, 1, window[2], window[1], window[0]});
    for (int64_t oz : plan.origins[2])
        for (int64_t oy : plan.origins[1])
            for (int64_t ox : plan.origins[0]) {
                for (int64_t z = 0; z < window[2]; ++z)
                    for (int64_t y = 0; y < window[1]; ++y) {
                        const float* src =
                            padded.data() + linear_index(pdims, ox, oy + y, oz + z);
                        float* dst = patch.data() + (z * window[1] + y) * window[0];
                        for (int64_t x = 0; x < window[0]; ++x) dst[x] = src[x];
                    }
                Tensor<float> prob = predict_prob(model, patch);
                for (int64_t z = 0; z < window[2]; ++z)
                    for (int64_t y = 0; y < window[1]; ++y) {
                        const float* p = prob.data() + (z * window[1] + y) * window[0];
                        const int64_t base = linear_index(pdims, ox, oy + y, oz + z);
                        for (int64_t x = 0; x < window[0]; ++x) {
                            if (vote)
                                sum[base + x] += p[x] > 0.5f ? 1.0 : 0.0;
                            else
                                sum[base + x] += static_cast<double>(p[x]);
                            hits[base + x] += 1;
                        }
                    }
            }

    ProbVolume out;
    out.dims = vol.dims;
    out.spacing = vol.spacing;
    out.values.resize(static_cast<size_t>(vol.dims.count()));
    for (int64_t z = 0; z < vol.dims.z; ++z)
        for (int64_t y = 0; y < vol.dims.y; ++y)
            for (int64_t x = 0; x < vol.dims.x; ++x) {
                const int64_t pi = linear_index(pdims, x + plo[0], y + plo[1], z + plo[2]);
                const int64_t oi = linear_index(vol.dims, x, y, z);
                out.values[oi] =
                    vote ? fuse_vote(sum[pi], hits[pi]) : fuse_average(sum[pi], hits[pi]);
            }

    if (report) {
        report->axis_counts = {static_cast<int64_t>(plan.origins[0].size()),
                               static_cast<int64_t>(plan.origins[1].size()),
                               static_cast<int64_t>(plan.origins[2].size())};
        report->total_windows = plan.total_windows();
        report->fusion = fusion;
        report->seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    }
    return out;
}

LabelVolume binarize(const ProbVolume& prob, float tau) {
    LabelVolume out;
    out.dims = prob.dims;
    out.spacing = prob.spacing;
    out.mask.resize(prob.values.size());
    for (size_t i = 0; i < prob.values.size(); ++i) out.mask[i] = prob.values[i] > tau ? 1 : 0;
    return out;
}

} // namespace voxseg
