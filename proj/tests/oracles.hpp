#pragma once

// Test-only oracles, written independently of the library kernels:
//  - naive 7-loop convolution (same per-voxel floating order as the contract)
//  - scatter-form transposed convolution
//  - central finite differences
//  - fixpoint flood fill for connected components
//  - set-based Dice

#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <vector>

#include "voxseg/tensor.hpp"
#include "voxseg/volume.hpp"

namespace oracles {

using voxseg::Tensor;

// Cross-correlation with bias, accumulating channel-major then kernel scan
// order per output voxel; out-of-bounds taps are skipped.
template <typename T>
Tensor<T> conv3d_naive(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                       int64_t k, int64_t stride, int64_t pad) {
    const int64_t B = x.dim(0), CI = x.dim(1), Z = x.dim(2), Y = x.dim(3), X = x.dim(4);
    const int64_t CO = w.dim(0);
    const int64_t OZ = (Z + 2 * pad - k) / stride + 1;
    const int64_t OY = (Y + 2 * pad - k) / stride + 1;
    const int64_t OX = (X + 2 * pad - k) / stride + 1;
    Tensor<T> out({B, CO, OZ, OY, OX});
    auto xat = [&](int64_t bb, int64_t c, int64_t z, int64_t y, int64_t xx) {
        return x[(((bb * CI + c) * Z + z) * Y + y) * X + xx];
    };
    auto wat = [&](int64_t oc, int64_t ci, int64_t kz, int64_t ky, int64_t kx) {
        return w[(((oc * CI + ci) * k + kz) * k + ky) * k + kx];
    };
    for (int64_t bb = 0; bb < B; ++bb)
        for (int64_t oc = 0; oc < CO; ++oc)
            for (int64_t oz = 0; oz < OZ; ++oz)
                for (int64_t oy = 0; oy < OY; ++oy)
                    for (int64_t ox = 0; ox < OX; ++ox) {
                        T acc = b[oc];
                        for (int64_t ci = 0; ci < CI; ++ci)
                            for (int64_t kz = 0; kz < k; ++kz)
                                for (int64_t ky = 0; ky < k; ++ky)
                                    for (int64_t kx = 0; kx < k; ++kx) {
                                        const int64_t iz = oz * stride - pad + kz;
                                        const int64_t iy = oy * stride - pad + ky;
                                        const int64_t ix = ox * stride - pad + kx;
                                        if (iz < 0 || iz >= Z || iy < 0 || iy >= Y ||
                                            ix < 0 || ix >= X)
                                            continue;
                                        acc += wat(oc, ci, kz, ky, kx) * xat(bb, ci, iz, iy, ix);
                                    }
                        out[(((bb * CO + oc) * OZ + oz) * OY + oy) * OX + ox] = acc;
                    }
    return out;
}

// Scatter form: every input voxel distributes through the kernel.
template <typename T>
Tensor<T> deconv3d_scatter(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           int64_t k, int64_t stride, int64_t pad) {
    const int64_t B = x.dim(0), CI = x.dim(1), Z = x.dim(2), Y = x.dim(3), X = x.dim(4);
    const int64_t CO = w.dim(1);
    const int64_t OZ = (Z - 1) * stride - 2 * pad + k;
    const int64_t OY = (Y - 1) * stride - 2 * pad + k;
    const int64_t OX = (X - 1) * stride - 2 * pad + k;
    Tensor<T> out({B, CO, OZ, OY, OX});
    for (int64_t bb = 0; bb < B; ++bb)
        for (int64_t oc = 0; oc < CO; ++oc)
            for (int64_t i = 0; i < OZ * OY * OX; ++i)
                out[(bb * CO + oc) * OZ * OY * OX + i] = b[oc];
    for (int64_t bb = 0; bb < B; ++bb)
        for (int64_t ci = 0; ci < CI; ++ci)
            for (int64_t z = 0; z < Z; ++z)
                for (int64_t y = 0; y < Y; ++y)
                    for (int64_t xx = 0; xx < X; ++xx) {
                        const T xv = x[(((bb * CI + ci) * Z + z) * Y + y) * X + xx];
                        for (int64_t oc = 0; oc < CO; ++oc)
                            for (int64_t kz = 0; kz < k; ++kz)
                                for (int64_t ky = 0; ky < k; ++ky)
                                    for (int64_t kx = 0; kx < k; ++kx) {
                                        const int64_t oz = z * stride - pad + kz;
                                        const int64_t oy = y * stride - pad + ky;
                                        const int64_t ox = xx * stride - pad + kx;
                                        if (oz < 0 || oz >= OZ || oy < 0 || oy >= OY ||
                                            ox < 0 || ox >= OX)
                                            continue;
                                        out[(((bb * CO + oc) * OZ + oz) * OY + oy) * OX + ox] +=
                                            w[(((ci * CO + oc) * k + kz) * k + ky) * k + kx] *
                                            xv;
                                    }
                    }
    return out;
}

// Central finite differences of a scalar functional, step 1e-4.
inline double finite_diff(std::function<double()> eval, double* param, double step = 1e-4) {
    const double saved = *param;
    *param = saved + step;
    const double up = eval();
    *param = saved - step;
    const double down = eval();
    *param = saved;
    return (up - down) / (2.0 * step);
}

// |a - n| / max(|a|, |n|, floor): relative error with an absolute floor so
// near-zero gradients compare on an absolute scale.
inline double rel_err(double analytic, double numeric, double floor = 1e-3) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
    return std::fabs(analytic - numeric) / denom;
}

// Label propagation to fixpoint: seed each foreground voxel with a unique id,
// then repeatedly take the min over the neighborhood until nothing changes.
inline std::vector<int64_t> floodfill_oracle(const voxseg::LabelVolume& mask,
                                             int connectivity) {
    const voxseg::Dims3& d = mask.dims;
    std::vector<int64_t> lab(mask.mask.size(), 0);
    for (size_t i = 0; i < mask.mask.size(); ++i)
        if (mask.mask[i]) lab[i] = static_cast<int64_t>(i) + 1;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int64_t z = 0; z < d.z; ++z)
            for (int64_t y = 0; y < d.y; ++y)
                for (int64_t x = 0; x < d.x; ++x) {
                    const int64_t i = voxseg::linear_index(d, x, y, z);
                    if (!lab[i]) continue;
                    for (int64_t dz = -1; dz <= 1; ++dz)
                        for (int64_t dy = -1; dy <= 1; ++dy)
                            for (int64_t dx = -1; dx <= 1; ++dx) {
                                if (!dx && !dy && !dz) continue;
                                if (connectivity == 6 &&
                                    std::abs(dx) + std::abs(dy) + std::abs(dz) != 1)
                                    continue;
                                const int64_t nx = x + dx, ny = y + dy, nz = z + dz;
                                if (nx < 0 || nx >= d.x || ny < 0 || ny >= d.y || nz < 0 ||
                                    nz >= d.z)
                                    continue;
                                const int64_t ni = voxseg::linear_index(d, nx, ny, nz);
                                if (lab[ni] && lab[ni] < lab[i]) {
                                    lab[i] = lab[ni];
                                    changed = true;
                                }
                            }
                }
    }
    return lab;
}

// Same-partition check between a component labeling and the oracle labels.
inline bool same_partition(const std::vector<int32_t>& a, const std::vector<int64_t>& b) {
    if (a.size() != b.size()) return false;
    std::set<std::pair<int64_t, int64_t>> fw, bw;
    for (size_t i = 0; i < a.size(); ++i) {
        if ((a[i] == 0) != (b[i] == 0)) return false;
        if (a[i] == 0) continue;
        fw.insert({a[i], b[i]});
        bw.insert({b[i], a[i]});
    }
    std::set<int64_t> fa, fb;
    for (auto& [x, y] : fw) fa.insert(x);
    for (auto& [x, y] : bw) fb.insert(x);
    return fw.size() == fa.size() && bw.size() == fb.size();
}

// Dice from explicit index sets.
inline double dsc_sets(const voxseg::LabelVolume& p, const voxseg::LabelVolume& y) {
    std::set<int64_t> sp, sy, si;
    for (size_t i = 0; i < p.mask.size(); ++i) {
        if (p.mask[i]) sp.insert(static_cast<int64_t>(i));
        if (y.mask[i]) sy.insert(static_cast<int64_t>(i));
    }
    for (int64_t i : sp)
        if (sy.count(i)) si.insert(i);
    if (sp.empty() && sy.empty()) return 1.0;
    return 2.0 * static_cast<double>(si.size()) /
           static_cast<double>(sp.size() + sy.size());
}

} // namespace oracles
