#include "voxseg/augment.hpp"

#include <stdexcept>

namespace voxseg {

AugmentOp sample_augment(Rng& rng) {
    AugmentOp op;
    op.axis = static_cast<int>(rng.next_below(3));
    op.quarter_turns = static_cast<int>(rng.next_below(4));
    for (int a = 0; a < 3; ++a) op.flip[a] = rng.next_bool();
    return op;
}

namespace {

// Source coordinate for an output coordinate: out = flip(rotate(in)), so
// src = rotate_src(flip_src(out)).
struct Mapper {
    AugmentOp op;
    std::array<int64_t, 3> size;
    int u, v; // rotated plane axes (ascending order)

    std::array<int64_t, 3> src(int64_t x, int64_t y, int64_t z) const {
        std::array<int64_t, 3> c{x, y, z};
        for (int a = 0; a < 3; ++a)
            if (op.flip[a]) c[a] = size[a] - 1 - c[a];
        const int64_t S = size[u]; // == size[v] for odd quarter turns
        const int64_t cu = c[u], cv = c[v];
        switch (op.quarter_turns & 3) {
            case 1:
                c[u] = cv;
                c[v] = S - 1 - cu;
                break;
            case 2:
                c[u] = size[u] - 1 - cu;
                c[v] = size[v] - 1 - cv;
                break;
            case 3:
                c[u] = S - 1 - cv;
                c[v] = cu;
                break;
            default: break;
        }
        return c;
    }
};

void permute(const Mapper& m, std::vector<float>& data) {
    const auto& s = m.size;
    std::vector<float> out(data.size());
    for (int64_t z = 0; z < s[2]; ++z)
        for (int64_t y = 0; y < s[1]; ++y)
            for (int64_t x = 0; x < s[0]; ++x) {
                const auto c = m.src(x, y, z);
                out[(z * s[1] + y) * s[0] + x] = data[(c[2] * s[1] + c[1]) * s[0] + c[0]];
            }
    data = std::move(out);
}

} // namespace

void apply_augment(const AugmentOp& op, const std::array<int64_t, 3>& size,
                   std::vector<float>& image, std::vector<float>& label) {
    Mapper m;
    m.op = op;
    m.size = size;
    m.u = op.axis == 0 ? 1 : 0;
    m.v = op.axis == 2 ? 1 : 2;
    if ((op.quarter_turns & 1) && size[m.u] != size[m.v])
        throw std::invalid_argument("augment: 90/270 rotation needs equal extents in plane");
    if (static_cast<int64_t>(image.size()) != size[0] * size[1] * size[2] ||
        image.size() != label.size())
        throw std::invalid_argument("augment: size mismatch");
    permute(m, image);
    permute(m, label);
}

} // namespace voxseg
