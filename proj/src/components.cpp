#include "voxseg/components.hpp"

#include <stdexcept>

namespace voxseg {

ComponentLabeling connected_components(const LabelVolume& mask, int connectivity) {
    if (connectivity != 6 && connectivity != 26)
        throw std::invalid_argument("connectivity must be 6 or 26");

    // neighbor offsets
    std::vector<std::array<int64_t, 3>> offs;
    for (int64_t dz = -1; dz <= 1; ++dz)
        for (int64_t dy = -1; dy <= 1; ++dy)
            for (int64_t dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0 && dz == 0) continue;
                const int64_t manh = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (connectivity == 6 && manh != 1) continue;
                offs.push_back({dx, dy, dz});
            }

    ComponentLabeling out;
    out.dims = mask.dims;
    out.connectivity = connectivity;
    out.labels.assign(mask.mask.size(), 0);

    std::vector<int64_t> stack;
    const Dims3& d = mask.dims;
    for (int64_t z = 0; z < d.z; ++z)
        for (int64_t y = 0; y < d.y; ++y)
            for (int64_t x = 0; x < d.x; ++x) {
                const int64_t idx = linear_index(d, x, y, z);
                if (!mask.mask[idx] || out.labels[idx] != 0) continue;
                const int32_t id = ++out.count;
                int64_t size = 0;
                stack.clear();
                stack.push_back(idx);
                out.labels[idx] = id;
                while (!stack.empty()) {
                    const int64_t cur = stack.back();
                    stack.pop_back();
                    ++size;
                    const int64_t cx = cur % d.x;
                    const int64_t cy = (cur / d.x) % d.y;
                    const int64_t cz = cur / (d.x * d.y);
                    for (const auto& o : offs) {
                        const int64_t nx = cx + o[0], ny = cy + o[1], nz = cz + o[2];
                        if (nx < 0 || nx >= d.x || ny < 0 || ny >= d.y || nz < 0 || nz >= d.z)
                            continue;
                        const int64_t ni = linear_index(d, nx, ny, nz);
                        if (mask.mask[ni] && out.labels[ni] == 0) {
                            out.labels[ni] = id;
                            stack.push_back(ni);
                        }
                    }
                }
                out.sizes.push_back(size);
            }
    return out;
}

LabelVolume filter_small_components(const LabelVolume& mask, double fraction,
                                    int connectivity) {
    if (fraction < 0.0 || fraction > 1.0)
        throw std::invalid_argument("filter fraction must be in [0, 1]");
    const ComponentLabeling cc = connected_components(mask, connectivity);
    int64_t total = 0;
    for (int64_t s : cc.sizes) total += s;
    const double threshold = fraction * static_cast<double>(total);

    std::vector<uint8_t> keep(static_cast<size_t>(cc.count), 1);
    for (int32_t id = 1; id <= cc.count; ++id)
        if (static_cast<double>(cc.sizes[id - 1]) < threshold) keep[id - 1] = 0;

    LabelVolume out;
    out.dims = mask.dims;
    out.spacing = mask.spacing;
    out.case_id = mask.case_id;
    out.mask.assign(mask.mask.size(), 0);
    for (size_t i = 0; i < mask.mask.size(); ++i) {
        const int32_t id = cc.labels[i];
        if (id > 0 && keep[id - 1]) out.mask[i] = 1;
    }
    return out;
}

} // namespace voxseg
