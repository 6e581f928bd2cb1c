#pragma once

// Scalar reference implementations. These define the numeric semantics of
// every kernel: the accumulation order inside each output element is fixed
// (channel-major, then kernel scan order), so results are reproducible across
// runs, thread counts and SIMD backends. The double instantiations back the
// gradient-check build; the float instantiations are the "scalar" dispatch
// table and the ground truth for the AVX2 equivalence tests.

#include "voxseg/kernels.hpp"

namespace voxseg::kernels {

template <typename T>
void conv_fwd_ref(const ConvGeom& g, const T* x, const T* w, const T* bias,
                  T* out, int64_t lo, int64_t hi) {
    const int64_t ivox = g.in_voxels(), ovox = g.out_voxels();
    const int64_t kk = g.k * g.k * g.k;
    for (int64_t job = lo; job < hi; ++job) {
        const int64_t b = job / g.cout, oc = job % g.cout;
        const T* xb = x + b * g.cin * ivox;
        const T* woc = w + oc * g.cin * kk;
        T* ob = out + job * ovox;
        const T bv = bias ? bias[oc] : T(0);
        for (int64_t oz = 0; oz < g.outz; ++oz)
            for (int64_t oy = 0; oy < g.outy; ++oy)
                for (int64_t ox = 0; ox < g.outx; ++ox) {
                    T acc = bv;
                    for (int64_t ci = 0; ci < g.cin; ++ci) {
                        const T* xc = xb + ci * ivox;
                        const T* wc = woc + ci * kk;
                        for (int64_t kz = 0; kz < g.k; ++kz) {
                            const int64_t iz = oz * g.stride - g.pad + kz;
                            if (iz < 0 || iz >= g.inz) continue;
                            for (int64_t ky = 0; ky < g.k; ++ky) {
                                const int64_t iy = oy * g.stride - g.pad + ky;
                                if (iy < 0 || iy >= g.iny) continue;
                                const T* xrow = xc + (iz * g.iny + iy) * g.inx;
                                const T* wrow = wc + (kz * g.k + ky) * g.k;
                                for (int64_t kx = 0; kx < g.k; ++kx) {
                                    const int64_t ix = ox * g.stride - g.pad + kx;
                                    if (ix < 0 || ix >= g.inx) continue;
                                    acc += wrow[kx] * xrow[ix];
                                }
                            }
                        }
                    }
                    ob[(oz * g.outy + oy) * g.outx + ox] = acc;
                }
    }
}

// Gather form of the convolution input gradient; handles any stride.
template <typename T>
void conv_bwd_in_ref(const ConvGeom& g, const T* gout, const T* w, T* gin,
                     int64_t lo, int64_t hi) {
    const int64_t ivox = g.in_voxels(), ovox = g.out_voxels();
    const int64_t kk = g.k * g.k * g.k;
    for (int64_t job = lo; job < hi; ++job) {
        const int64_t b = job / g.cin, ci = job % g.cin;
        const T* gb = gout + b * g.cout * ovox;
        T* gi = gin + job * ivox;
        for (int64_t iz = 0; iz < g.inz; ++iz)
            for (int64_t iy = 0; iy < g.iny; ++iy)
                for (int64_t ix = 0; ix < g.inx; ++ix) {
                    T acc = T(0);
                    for (int64_t oc = 0; oc < g.cout; ++oc) {
                        const T* go = gb + oc * ovox;
                        const T* wc = w + (oc * g.cin + ci) * kk;
                        for (int64_t kz = 0; kz < g.k; ++kz) {
                            const int64_t tz = iz + g.pad - kz;
                            if (tz < 0 || tz % g.stride) continue;
                            const int64_t oz = tz / g.stride;
                            if (oz >= g.outz) continue;
                            for (int64_t ky = 0; ky < g.k; ++ky) {
                                const int64_t ty = iy + g.pad - ky;
                                if (ty < 0 || ty % g.stride) continue;
                                const int64_t oy = ty / g.stride;
                                if (oy >= g.outy) continue;
                                for (int64_t kx = 0; kx < g.k; ++kx) {
                                    const int64_t tx = ix + g.pad - kx;
                                    if (tx < 0 || tx % g.stride) continue;
                                    const int64_t ox = tx / g.stride;
                                    if (ox >= g.outx) continue;
                                    acc += wc[(kz * g.k + ky) * g.k + kx] *
                                           go[(oz * g.outy + oy) * g.outx + ox];
                                }
                            }
                        }
                    }
                    gi[(iz * g.iny + iy) * g.inx + ix] = acc;
                }
    }
}

namespace detail {
template <typename T>
inline T tree8(const T acc[8]) {
    const T t0 = acc[0] + acc[4], t1 = acc[1] + acc[5];
    const T t2 = acc[2] + acc[6], t3 = acc[3] + acc[7];
    const T u0 = t0 + t2, u1 = t1 + t3;
    return u0 + u1;
}

// 32 lanes fold to 8 lanewise, then the 8-lane tree.
template <typename T>
inline T tree32(const T acc[32]) {
    T m[8];
    for (int j = 0; j < 8; ++j)
        m[j] = (acc[j] + acc[8 + j]) + (acc[16 + j] + acc[24 + j]);
    return tree8(m);
}
} // namespace detail

template <typename T>
void conv_bwd_w_ref(const ConvGeom& g, const T* x, const T* gout, T* gw,
                    int64_t lo, int64_t hi) {
    const int64_t ivox = g.in_voxels(), ovox = g.out_voxels();
    const int64_t kk = g.k * g.k * g.k;
    for (int64_t job = lo; job < hi; ++job) {
        const int64_t oc = job / g.cin, ci = job % g.cin;
        T* gwc = gw + job * kk;
        for (int64_t kz = 0; kz < g.k; ++kz)
            for (int64_t ky = 0; ky < g.k; ++ky)
                for (int64_t kx = 0; kx < g.k; ++kx) {
                    // valid output range so that the input index stays in bounds
                    int64_t oxlo = 0, oxhi = g.outx;
                    while (oxlo < g.outx && oxlo * g.stride - g.pad + kx < 0) ++oxlo;
                    while (oxhi > oxlo && (oxhi - 1) * g.stride - g.pad + kx >= g.inx) --oxhi;
                    T acc[32] = {};
                    for (int64_t b = 0; b < g.batch; ++b) {
                        const T* xc = x + (b * g.cin + ci) * ivox;
                        const T* go = gout + (b * g.cout + oc) * ovox;
                        for (int64_t oz = 0; oz < g.outz; ++oz) {
                            const int64_t iz = oz * g.stride - g.pad + kz;
                            if (iz < 0 || iz >= g.inz) continue;
                            for (int64_t oy = 0; oy < g.outy; ++oy) {
                                const int64_t iy = oy * g.stride - g.pad + ky;
                                if (iy < 0 || iy >= g.iny) continue;
                                const T* grow = go + (oz * g.outy + oy) * g.outx;
                                const T* xrow = xc + (iz * g.iny + iy) * g.inx - g.pad + kx;
                                for (int64_t ox = oxlo; ox < oxhi; ++ox)
                                    acc[ox & 31] += grow[ox] * xrow[ox * g.stride];
                            }
                        }
                    }
                    gwc[(kz * g.k + ky) * g.k + kx] = detail::tree32(acc);
                }
    }
}

// Transposed convolution forward, gather form; weights [cin][cout][k][k][k].
template <typename T>
void dconv_fwd_ref(const ConvGeom& g, const T* x, const T* w, const T* bias,
                   T* out, int64_t lo, int64_t hi) {
    const int64_t ivox = g.in_voxels(), ovox = g.out_voxels();
    const int64_t kk = g.k * g.k * g.k;
    for (int64_t job = lo; job < hi; ++job) {
        const int64_t b = job / g.cout, oc = job % g.cout;
        const T* xb = x + b * g.cin * ivox;
        T* ob = out + job * ovox;
        const T bv = bias ? bias[oc] : T(0);
        for (int64_t oz = 0; oz < g.outz; ++oz)
            for (int64_t oy = 0; oy < g.outy; ++oy)
                for (int64_t ox = 0; ox < g.outx; ++ox) {
                    T acc = bv;
                    for (int64_t ci = 0; ci < g.cin; ++ci) {
                        const T* xc = xb + ci * ivox;
                        const T* wc = w + (ci * g.cout + oc) * kk;
                        for (int64_t kz = 0; kz < g.k; ++kz) {
                            const int64_t tz = oz + g.pad - kz;
                            if (tz < 0 || tz % g.stride) continue;
                            const int64_t iz = tz / g.stride;
                            if (iz >= g.inz) continue;
                            for (int64_t ky = 0; ky < g.k; ++ky) {
                                const int64_t ty = oy + g.pad - ky;
                                if (ty < 0 || ty % g.stride) continue;
                                const int64_t iy = ty / g.stride;
                                if (iy >= g.iny) continue;
                                for (int64_t kx = 0; kx < g.k; ++kx) {
                                    const int64_t tx = ox + g.pad - kx;
                                    if (tx < 0 || tx % g.stride) continue;
                                    const int64_t ix = tx / g.stride;
                                    if (ix >= g.inx) continue;
                                    acc += wc[(kz * g.k + ky) * g.k + kx] *
                                           xc[(iz * g.iny + iy) * g.inx + ix];
                                }
                            }
                        }
                    }
                    ob[(oz * g.outy + oy) * g.outx + ox] = acc;
                }
    }
}

namespace detail {
// Read one element of a row-deinterleaved volume: rows store even x positions
// in the first half and odd ones in the second.
template <typename T>
inline T deint_at(const T* row, int64_t rowlen, int64_t xpos) {
    const int64_t half = rowlen / 2;
    return (xpos & 1) ? row[half + (xpos >> 1)] : row[xpos >> 1];
}
} // namespace detail

// Input gradient of the k=4/s=2/p=1 transposed convolution. gout_d is gout
// with deinterleaved x-rows. All four taps per axis are in play.
template <typename T>
void dconv_bwd_in_ref(const ConvGeom& g, const T* gout_d, const T* w, T* gin,
                      int64_t lo, int64_t hi) {
    const int64_t ivox = g.in_voxels(), ovox = g.out_voxels();
    const int64_t kk = g.k * g.k * g.k;
    for (int64_t job = lo; job < hi; ++job) {
        const int64_t b = job / g.cin, ci = job % g.cin;
        const T* gb = gout_d + b * g.cout * ovox;
        T* gi = gin + job * ivox;
        for (int64_t iz = 0; iz < g.inz; ++iz)
            for (int64_t iy = 0; iy < g.iny; ++iy)
                for (int64_t ix = 0; ix < g.inx; ++ix) {
                    T acc = T(0);
                    for (int64_t oc = 0; oc < g.cout; ++oc) {
                        const T* go = gb + oc * ovox;
                        const T* wc = w + (ci * g.cout + oc) * kk;
                        for (int64_t kz = 0; kz < g.k; ++kz) {
                            const int64_t oz = iz * g.stride - g.pad + kz;
                            if (oz < 0 || oz >= g.outz) continue;
                            for (int64_t ky = 0; ky < g.k; ++ky) {
                                const int64_t oy = iy * g.stride - g.pad + ky;
                                if (oy < 0 || oy >= g.outy) continue;
                                const T* grow = go + (oz * g.outy + oy) * g.outx;
                                for (int64_t kx = 0; kx < g.k; ++kx) {
                                    const int64_t ox = ix * g.stride - g.pad + kx;
                                    if (ox < 0 || ox >= g.outx) continue;
                                    acc += wc[(kz * g.k + ky) * g.k + kx] *
                                           detail::deint_at(grow, g.outx, ox);
                                }
                            }
                        }
                    }
                    gi[(iz * g.iny + iy) * g.inx + ix] = acc;
                }
    }
}

template <typename T>
void dconv_bwd_w_ref(const ConvGeom& g, const T* x, const T* gout_d, T* gw,
                     int64_t lo, int64_t hi) {
    const int64_t ivox = g.in_voxels(), ovox = g.out_voxels();
    const int64_t kk = g.k * g.k * g.k;
    for (int64_t job = lo; job < hi; ++job) {
        const int64_t ci = job / g.cout, oc = job % g.cout;
        T* gwc = gw + job * kk;
        for (int64_t kz = 0; kz < g.k; ++kz)
            for (int64_t ky = 0; ky < g.k; ++ky)
                for (int64_t kx = 0; kx < g.k; ++kx) {
                    int64_t ixlo = 0, ixhi = g.inx;
                    while (ixlo < g.inx && ixlo * g.stride - g.pad + kx < 0) ++ixlo;
                    while (ixhi > ixlo && (ixhi - 1) * g.stride - g.pad + kx >= g.outx) --ixhi;
                    T acc[32] = {};
                    for (int64_t b = 0; b < g.batch; ++b) {
                        const T* xc = x + (b * g.cin + ci) * ivox;
                        const T* go = gout_d + (b * g.cout + oc) * ovox;
                        for (int64_t iz = 0; iz < g.inz; ++iz) {
                            const int64_t oz = iz * g.stride - g.pad + kz;
                            if (oz < 0 || oz >= g.outz) continue;
                            for (int64_t iy = 0; iy < g.iny; ++iy) {
                                const int64_t oy = iy * g.stride - g.pad + ky;
                                if (oy < 0 || oy >= g.outy) continue;
                                const T* xrow = xc + (iz * g.iny + iy) * g.inx;
                                const T* grow = go + (oz * g.outy + oy) * g.outx;
                                for (int64_t ix = ixlo; ix < ixhi; ++ix)
                                    acc[ix & 31] +=
                                        xrow[ix] *
                                        detail::deint_at(grow, g.outx, ix * g.stride - g.pad + kx);
                            }
                        }
                    }
                    gwc[(kz * g.k + ky) * g.k + kx] = detail::tree32(acc);
                }
    }
}

template <typename T>
void add_ref(T* y, const T* a, const T* b, int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) y[i] = a[i] + b[i];
}

template <typename T>
void acc_ref(T* y, const T* x, int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) y[i] += x[i];
}

template <typename T>
void relu_fwd_ref(T* y, const T* x, int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

// Gradient is masked where the forward input was negative.
template <typename T>
void relu_bwd_ref(T* gx, const T* x, const T* gy, int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) gx[i] = x[i] >= T(0) ? gy[i] : T(0);
}

template <typename T>
void affine_ref(T* y, const T* x, T a, T b, int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) y[i] = a * x[i] + b;
}

template <typename T>
void affine2_ref(T* gx, const T* gy, const T* x, T A, T B, T C, int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
        const T t = C * x[i] + B;
        gx[i] = A * gy[i] + t;
    }
}

template <typename T>
void sgd_update_ref(T* w, T* v, const T* g, T mom, T wd, T lr, int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
        const T t = g[i] + wd * w[i];
        v[i] = mom * v[i] + t;
        w[i] = w[i] - lr * v[i];
    }
}

template <typename T>
T sum_blk_ref(const T* x, int64_t n) {
    T acc[32] = {};
    for (int64_t i = 0; i < n; ++i) acc[i & 31] += x[i];
    return detail::tree32(acc);
}

template <typename T>
T dot_blk_ref(const T* x, const T* y, int64_t n) {
    T acc[32] = {};
    for (int64_t i = 0; i < n; ++i) acc[i & 31] += x[i] * y[i];
    return detail::tree32(acc);
}

template <typename T>
void deinterleave_rows_ref(T* dst, const T* src, int64_t nrows, int64_t rowlen) {
    const int64_t half = rowlen / 2;
    for (int64_t r = 0; r < nrows; ++r) {
        const T* s = src + r * rowlen;
        T* d = dst + r * rowlen;
        for (int64_t t = 0; t < half; ++t) {
            d[t] = s[2 * t];
            d[half + t] = s[2 * t + 1];
        }
    }
}

} // namespace voxseg::kernels
