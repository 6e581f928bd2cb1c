#pragma once

#include <array>
#include <cstdint>
#include <optional>

namespace voxseg {

// Axis order is fixed project-wide: x fastest, then y, then z.
// linear index = x + dims[0] * (y + dims[1] * z)
struct Dims3 {
    int64_t x = 0, y = 0, z = 0;

    int64_t count() const { return x * y * z; }
    bool operator==(const Dims3&) const = default;
    int64_t operator[](int a) const { return a == 0 ? x : (a == 1 ? y : z); }
};

struct Spacing3 {
    double x = 1.0, y = 1.0, z = 1.0;
    bool operator==(const Spacing3&) const = default;
};

inline int64_t linear_index(const Dims3& d, int64_t x, int64_t y, int64_t z) {
    return x + d.x * (y + d.y * z);
}

// Inclusive per-axis voxel bounds.
struct BoundingBox {
    std::array<int64_t, 3> lo{0, 0, 0};
    std::array<int64_t, 3> hi{0, 0, 0};

    int64_t extent(int a) const { return hi[a] - lo[a] + 1; }
    bool operator==(const BoundingBox&) const = default;

    bool contains(int64_t x, int64_t y, int64_t z) const {
        return x >= lo[0] && x <= hi[0] && y >= lo[1] && y <= hi[1] &&
               z >= lo[2] && z <= hi[2];
    }

    BoundingBox padded_clamped(int64_t margin, const Dims3& dims) const {
        BoundingBox b;
        const int64_t dim[3] = {dims.x, dims.y, dims.z};
        for (int a = 0; a < 3; ++a) {
            b.lo[a] = lo[a] - margin < 0 ? 0 : lo[a] - margin;
            b.hi[a] = hi[a] + margin > dim[a] - 1 ? dim[a] - 1 : hi[a] + margin;
        }
        return b;
    }
};

} // namespace voxseg
