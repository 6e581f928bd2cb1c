// AVX2 variants of the f32 kernels. Bit-identical to the scalar reference:
//  - products and sums are rounded separately (no FMA anywhere in this TU,
//    which is compiled with -mavx2 only),
//  - lanes outside a tap's valid range are left untouched via blends instead
//    of adding a zero product, so signed zeros can never diverge,
//  - reductions use the same fixed 32-lane blocking and tree as the reference.
//
// The network's own shapes (k=3/s=1/p=1 convolutions, k=4/s=2/p=1 transposed
// convolutions, rows that are multiples of 8 up to 64 wide) run through
// specialized row kernels with the edge taps hoisted out of the vector loop;
// everything else falls back to general tiles or the scalar reference.

#include "voxseg/kernels.hpp"
#include "voxseg/kernels_ref.hpp"

#if defined(VOXSEG_BUILD_AVX2) && (defined(__x86_64__) || defined(_M_X64))
#define VOXSEG_AVX2_TU 1
#include <immintrin.h>
#else
#define VOXSEG_AVX2_TU 0
#endif

namespace voxseg::kernels {

#if VOXSEG_AVX2_TU

namespace {

alignas(32) const int32_t kMaskBits[16] = {-1, -1, -1, -1, -1, -1, -1, -1,
                                           0,  0,  0,  0,  0,  0,  0,  0};

inline __m256i first_lanes(int64_t n) {
    return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(kMaskBits + 8 - n));
}

inline __m256i lane_range(int64_t a, int64_t b) {
    return _mm256_andnot_si256(first_lanes(a), first_lanes(b));
}

// Matches detail::tree8: ((l0+l4)+(l2+l6)) + ((l1+l5)+(l3+l7)).
inline float tree8_m256(__m256 acc) {
    const __m128 lo = _mm256_castps256_ps128(acc);
    const __m128 hi = _mm256_extractf128_ps(acc, 1);
    const __m128 s4 = _mm_add_ps(lo, hi);
    const __m128 s2 = _mm_add_ps(s4, _mm_movehl_ps(s4, s4));
    const __m128 s1 = _mm_add_ss(s2, _mm_shuffle_ps(s2, s2, 1));
    return _mm_cvtss_f32(s1);
}

// Matches detail::tree32: lanes fold pairwise to 8, then the 8-lane tree.
inline float tree32_m256(__m256 a, __m256 b, __m256 c, __m256 d) {
    const __m256 e = _mm256_add_ps(a, b);
    const __m256 f = _mm256_add_ps(c, d);
    return tree8_m256(_mm256_add_ps(e, f));
}

// acc += w * x over lanes [a, b); other lanes stay bitwise untouched.
inline __m256 tap_masked(__m256 acc, __m256 wv, const float* p, int64_t a, int64_t b) {
    const __m256i m = lane_range(a, b);
    const __m256 in = _mm256_maskload_ps(p, m);
    const __m256 s = _mm256_add_ps(acc, _mm256_mul_ps(wv, in));
    return _mm256_blendv_ps(acc, s, _mm256_castsi256_ps(m));
}

inline __m256 tap_full(__m256 acc, __m256 wv, const float* p) {
    return _mm256_add_ps(acc, _mm256_mul_ps(wv, _mm256_loadu_ps(p)));
}

// ------------------------------------------------------- conv_fwd (k=3 p=1)

// One full output row of NV*8 voxels held in registers; per (ci, kz, ky) the
// three kx taps are straight-line vector code with only the row-edge vectors
// masked. Accumulation order per voxel: ci, kz, ky, kx — the reference order.
template <int NV>
inline void conv_row_k3(const ConvGeom& g, const float* xb, const float* woc,
                        float bv, float* orow, int64_t oz, int64_t oy) {
    const int64_t ivox = g.in_voxels();
    __m256 acc[NV];
    const __m256 bias_v = _mm256_set1_ps(bv);
    for (int v = 0; v < NV; ++v) acc[v] = bias_v;

    for (int64_t ci = 0; ci < g.cin; ++ci) {
        const float* xc = xb + ci * ivox;
        const float* wc = woc + ci * 27;
        for (int64_t kz = 0; kz < 3; ++kz) {
            const int64_t iz = oz - 1 + kz;
            if (iz < 0 || iz >= g.inz) continue;
            for (int64_t ky = 0; ky < 3; ++ky) {
                const int64_t iy = oy - 1 + ky;
                if (iy < 0 || iy >= g.iny) continue;
                const float* xrow = xc + (iz * g.iny + iy) * g.inx;
                const float* wrow = wc + (kz * 3 + ky) * 3;
                const __m256 w0 = _mm256_set1_ps(wrow[0]);
                const __m256 w1 = _mm256_set1_ps(wrow[1]);
                const __m256 w2 = _mm256_set1_ps(wrow[2]);
                // kx = 0 reads in[x-1]: lane 0 of the first vector is padding
                acc[0] = tap_masked(acc[0], w0, xrow - 1, 1, 8);
                for (int v = 1; v < NV; ++v) acc[v] = tap_full(acc[v], w0, xrow + 8 * v - 1);
                // kx = 1 reads in[x]
                for (int v = 0; v < NV; ++v) acc[v] = tap_full(acc[v], w1, xrow + 8 * v);
                // kx = 2 reads in[x+1]: last lane of the last vector is padding
                for (int v = 0; v + 1 < NV; ++v)
                    acc[v] = tap_full(acc[v], w2, xrow + 8 * v + 1);
                acc[NV - 1] = tap_masked(acc[NV - 1], w2, xrow + 8 * (NV - 1) + 1, 0, 7);
            }
        }
    }
    for (int v = 0; v < NV; ++v) _mm256_storeu_ps(orow + 8 * v, acc[v]);
}

// general tile for shapes outside the specialized row
template <int NV>
inline void conv_fwd_tile(const ConvGeom& g, const float* xb, const float* woc,
                          float bv, float* orow, int64_t oz, int64_t oy,
                          int64_t t0, int64_t t1) {
    const int64_t ivox = g.in_voxels();
    const int64_t kk = g.k * g.k * g.k;
    __m256 acc[NV];
    const __m256 bias_v = _mm256_set1_ps(bv);
    for (int v = 0; v < NV; ++v) acc[v] = bias_v;

    for (int64_t ci = 0; ci < g.cin; ++ci) {
        const float* xc = xb + ci * ivox;
        const float* wc = woc + ci * kk;
        for (int64_t kz = 0; kz < g.k; ++kz) {
            const int64_t iz = oz - g.pad + kz;
            if (iz < 0 || iz >= g.inz) continue;
            for (int64_t ky = 0; ky < g.k; ++ky) {
                const int64_t iy = oy - g.pad + ky;
                if (iy < 0 || iy >= g.iny) continue;
                const float* xrow = xc + (iz * g.iny + iy) * g.inx;
                const float* wrow = wc + (kz * g.k + ky) * g.k;
                for (int64_t kx = 0; kx < g.k; ++kx) {
                    const int64_t off = kx - g.pad;
                    const int64_t xlo = t0 > -off ? t0 : -off;
                    const int64_t xhi = t1 < g.inx - off ? t1 : g.inx - off;
                    if (xhi <= xlo) continue;
                    const __m256 wv = _mm256_set1_ps(wrow[kx]);
                    for (int v = 0; v < NV; ++v) {
                        const int64_t vs = t0 + 8 * v;
                        const int64_t a = xlo - vs > 0 ? xlo - vs : 0;
                        const int64_t b = xhi - vs < 8 ? xhi - vs : 8;
                        if (b <= a) continue;
                        if (a == 0 && b == 8)
                            acc[v] = tap_full(acc[v], wv, xrow + vs + off);
                        else
                            acc[v] = tap_masked(acc[v], wv, xrow + vs + off, a, b);
                    }
                }
            }
        }
    }
    for (int v = 0; v < NV; ++v) {
        const int64_t vs = t0 + 8 * v;
        const int64_t lanes = t1 - vs < 8 ? t1 - vs : 8;
        if (lanes == 8)
            _mm256_storeu_ps(orow + vs, acc[v]);
        else
            _mm256_maskstore_ps(orow + vs, first_lanes(lanes), acc[v]);
    }
}

void conv_fwd_avx2(const ConvGeom& g, const float* x, const float* w,
                   const float* bias, float* out, int64_t lo, int64_t hi) {
    if (g.stride != 1) {
        conv_fwd_ref<float>(g, x, w, bias, out, lo, hi);
        return;
    }
    const int64_t ivox = g.in_voxels(), ovox = g.out_voxels();
    const int64_t kk = g.k * g.k * g.k;
    const bool k3_rows = g.k == 3 && g.pad == 1 && g.outx == g.inx && g.outx % 8 == 0 &&
                         g.outx >= 8 && g.outx <= 64;
    for (int64_t job = lo; job < hi; ++job) {
        const int64_t b = job / g.cout, oc = job % g.cout;
        const float* xb = x + b * g.cin * ivox;
        const float* woc = w + oc * g.cin * kk;
        float* ob = out + job * ovox;
        const float bv = bias ? bias[oc] : 0.0f;
        if (k3_rows) {
            const int nv = static_cast<int>(g.outx >> 3);
            for (int64_t oz = 0; oz < g.outz; ++oz)
                for (int64_t oy = 0; oy < g.outy; ++oy) {
                    float* orow = ob + (oz * g.outy + oy) * g.outx;
                    switch (nv) {
                        case 1: conv_row_k3<1>(g, xb, woc, bv, orow, oz, oy); break;
                        case 2: conv_row_k3<2>(g, xb, woc, bv, orow, oz, oy); break;
                        case 3: conv_row_k3<3>(g, xb, woc, bv, orow, oz, oy); break;
                        case 4: conv_row_k3<4>(g, xb, woc, bv, orow, oz, oy); break;
                        case 5: conv_row_k3<5>(g, xb, woc, bv, orow, oz, oy); break;
                        case 6: conv_row_k3<6>(g, xb, woc, bv, orow, oz, oy); break;
                        case 7: conv_row_k3<7>(g, xb, woc, bv, orow, oz, oy); break;
                        default: conv_row_k3<8>(g, xb, woc, bv, orow, oz, oy); break;
                    }
                }
            continue;
        }
        for (int64_t oz = 0; oz < g.outz; ++oz)
            for (int64_t oy = 0; oy < g.outy; ++oy) {
                float* orow = ob + (oz * g.outy + oy) * g.outx;
                for (int64_t t0 = 0; t0 < g.outx; t0 += 64) {
                    const int64_t t1 = t0 + 64 < g.outx ? t0 + 64 : g.outx;
                    switch ((t1 - t0 + 7) >> 3) {
                        case 1: conv_fwd_tile<1>(g, xb, woc, bv, orow, oz, oy, t0, t1); break;
                        case 2: conv_fwd_tile<2>(g, xb, woc, bv, orow, oz, oy, t0, t1); break;
                        case 3: conv_fwd_tile<3>(g, xb, woc, bv, orow, oz, oy, t0, t1); break;
                        case 4: conv_fwd_tile<4>(g, xb, woc, bv, orow, oz, oy, t0, t1); break;
                        case 5: conv_fwd_tile<5>(g, xb, woc, bv, orow, oz, oy, t0, t1); break;
                        case 6: conv_fwd_tile<6>(g, xb, woc, bv, orow, oz, oy, t0, t1); break;
                        case 7: conv_fwd_tile<7>(g, xb, woc, bv, orow, oz, oy, t0, t1); break;
                        default: conv_fwd_tile<8>(g, xb, woc, bv, orow, oz, oy, t0, t1); break;
                    }
                }
            }
    }
}

// ----------------------------------------------------- 32-lane row reducers

// acc32 as four vectors; lane of element j (segment-relative) is j & 31.
struct Acc32 {
    __m256 r0 = _mm256_setzero_ps();
    __m256 r1 = _mm256_setzero_ps();
    __m256 r2 = _mm256_setzero_ps();
    __m256 r3 = _mm256_setzero_ps();

    float reduce() const { return tree32_m256(r0, r1, r2, r3); }
};

// acc += a[j] * b[j] for j in [0, len), both contiguous
inline void dot_rows(Acc32& acc, const float* a, const float* b, int64_t len) {
    int64_t j = 0;
    for (; j + 32 <= len; j += 32) {
        acc.r0 = _mm256_add_ps(acc.r0, _mm256_mul_ps(_mm256_loadu_ps(a + j),
                                                     _mm256_loadu_ps(b + j)));
        acc.r1 = _mm256_add_ps(acc.r1, _mm256_mul_ps(_mm256_loadu_ps(a + j + 8),
                                                     _mm256_loadu_ps(b + j + 8)));
        acc.r2 = _mm256_add_ps(acc.r2, _mm256_mul_ps(_mm256_loadu_ps(a + j + 16),
                                                     _mm256_loadu_ps(b + j + 16)));
        acc.r3 = _mm256_add_ps(acc.r3, _mm256_mul_ps(_mm256_loadu_ps(a + j + 24),
                                                     _mm256_loadu_ps(b + j + 24)));
    }
    __m256* regs[4] = {&acc.r0, &acc.r1, &acc.r2, &acc.r3};
    int reg = 0;
    for (; j < len; j += 8, ++reg) {
        const int64_t lanes = len - j < 8 ? len - j : 8;
        if (lanes == 8) {
            *regs[reg] = _mm256_add_ps(
                *regs[reg], _mm256_mul_ps(_mm256_loadu_ps(a + j), _mm256_loadu_ps(b + j)));
        } else {
            const __m256i m = first_lanes(lanes);
            const __m256 av = _mm256_maskload_ps(a + j, m);
            const __m256 bv = _mm256_maskload_ps(b + j, m);
            const __m256 s = _mm256_add_ps(*regs[reg], _mm256_mul_ps(av, bv));
            *regs[reg] = _mm256_blendv_ps(*regs[reg], s, _mm256_castsi256_ps(m));
        }
    }
}

inline void sum_rows(Acc32& acc, const float* a, int64_t len) {
    int64_t j = 0;
    for (; j + 32 <= len; j += 32) {
        acc.r0 = _mm256_add_ps(acc.r0, _mm256_loadu_ps(a + j));
        acc.r1 = _mm256_add_ps(acc.r1, _mm256_loadu_ps(a + j + 8));
        acc.r2 = _mm256_add_ps(acc.r2, _mm256_loadu_ps(a + j + 16));
        acc.r3 = _mm256_add_ps(acc.r3, _mm256_loadu_ps(a + j + 24));
    }
    __m256* regs[4] = {&acc.r0, &acc.r1, &acc.r2, &acc.r3};
    int reg = 0;
    for (; j < len; j += 8, ++reg) {
        const int64_t lanes = len - j < 8 ? len - j : 8;
        if (lanes == 8) {
            *regs[reg] = _mm256_add_ps(*regs[reg], _mm256_loadu_ps(a + j));
        } else {
            const __m256i m = first_lanes(lanes);
            const __m256 av = _mm256_maskload_ps(a + j, m);
            const __m256 s = _mm256_add_ps(*regs[reg], av);
            *regs[reg] = _mm256_blendv_ps(*regs[reg], s, _mm256_castsi256_ps(m));
        }
    }
}

// -------------------------------------------------------------- conv_bwd_w
// Reference lane of output element ox is ox & 31 (row aligned), which lets
// the three kx taps of the k=3 path share one streaming pass per (kz, ky).

namespace {

// masked product accumulate: acc += a * b over lanes [la, lb)
inline __m256 dot_masked(__m256 acc, __m256 a, const float* bp, int64_t la, int64_t lb) {
    const __m256i m = lane_range(la, lb);
    const __m256 b = _mm256_maskload_ps(bp, m);
    const __m256 s = _mm256_add_ps(acc, _mm256_mul_ps(a, b));
    return _mm256_blendv_ps(acc, s, _mm256_castsi256_ps(m));
}

struct Acc32Regs {
    __m256 r[4] = {_mm256_setzero_ps(), _mm256_setzero_ps(), _mm256_setzero_ps(),
                   _mm256_setzero_ps()};
    float reduce() const { return tree32_m256(r[0], r[1], r[2], r[3]); }
};

} // namespace

void conv_bwd_w_avx2(const ConvGeom& g, const float* x, const float* gout,
                     float* gw, int64_t lo, int64_t hi) {
    if (g.stride != 1) {
        conv_bwd_w_ref<float>(g, x, gout, gw, lo, hi);
        return;
    }
    const int64_t ivox = g.in_voxels(), ovox = g.out_voxels();
    const int64_t kk = g.k * g.k * g.k;
    const bool k3_rows = g.k == 3 && g.pad == 1 && g.outx == g.inx && g.outx % 8 == 0 &&
                         g.outx >= 8;
    for (int64_t job = lo; job < hi; ++job) {
        const int64_t oc = job / g.cin, ci = job % g.cin;
        float* gwc = gw + job * kk;
        if (k3_rows) {
            const int64_t nvec = g.outx >> 3;
            for (int64_t kz = 0; kz < 3; ++kz)
                for (int64_t ky = 0; ky < 3; ++ky) {
                    Acc32Regs a0, a1, a2; // kx = 0, 1, 2
                    for (int64_t b = 0; b < g.batch; ++b) {
                        const float* xc = x + (b * g.cin + ci) * ivox;
                        const float* go = gout + (b * g.cout + oc) * ovox;
                        for (int64_t oz = 0; oz < g.outz; ++oz) {
                            const int64_t iz = oz - 1 + kz;
                            if (iz < 0 || iz >= g.inz) continue;
                            for (int64_t oy = 0; oy < g.outy; ++oy) {
                                const int64_t iy = oy - 1 + ky;
                                if (iy < 0 || iy >= g.iny) continue;
                                const float* grow = go + (oz * g.outy + oy) * g.outx;
                                const float* xrow = xc + (iz * g.iny + iy) * g.inx;
                                for (int64_t v = 0; v < nvec; ++v) {
                                    const int reg = static_cast<int>(v & 3);
                                    const __m256 gv = _mm256_loadu_ps(grow + 8 * v);
                                    // kx=0 reads x[ox-1]; ox=0 is padding
                                    if (v == 0)
                                        a0.r[reg] = dot_masked(a0.r[reg], gv, xrow - 1, 1, 8);
                                    else
                                        a0.r[reg] = _mm256_add_ps(
                                            a0.r[reg],
                                            _mm256_mul_ps(gv, _mm256_loadu_ps(xrow + 8 * v - 1)));
                                    // kx=1 reads x[ox]
                                    a1.r[reg] = _mm256_add_ps(
                                        a1.r[reg],
                                        _mm256_mul_ps(gv, _mm256_loadu_ps(xrow + 8 * v)));
                                    // kx=2 reads x[ox+1]; ox = outx-1 is padding
                                    if (v == nvec - 1)
                                        a2.r[reg] =
                                            dot_masked(a2.r[reg], gv, xrow + 8 * v + 1, 0, 7);
                                    else
                                        a2.r[reg] = _mm256_add_ps(
                                            a2.r[reg],
                                            _mm256_mul_ps(gv, _mm256_loadu_ps(xrow + 8 * v + 1)));
                                }
                            }
                        }
                    }
                    gwc[(kz * 3 + ky) * 3 + 0] = a0.reduce();
                    gwc[(kz * 3 + ky) * 3 + 1] = a1.reduce();
                    gwc[(kz * 3 + ky) * 3 + 2] = a2.reduce();
                }
            continue;
        }
        // general path: one tap at a time, same row-aligned lanes
        for (int64_t kz = 0; kz < g.k; ++kz)
            for (int64_t ky = 0; ky < g.k; ++ky)
                for (int64_t kx = 0; kx < g.k; ++kx) {
                    const int64_t off = kx - g.pad;
                    const int64_t oxlo = -off > 0 ? -off : 0;
                    int64_t oxhi = g.inx - off < g.outx ? g.inx - off : g.outx;
                    if (oxhi < oxlo) oxhi = oxlo;
                    Acc32Regs acc;
                    for (int64_t b = 0; b < g.batch; ++b) {
                        const float* xc = x + (b * g.cin + ci) * ivox;
                        const float* go = gout + (b * g.cout + oc) * ovox;
                        for (int64_t oz = 0; oz < g.outz; ++oz) {
                            const int64_t iz = oz - g.pad + kz;
                            if (iz < 0 || iz >= g.inz) continue;
                            for (int64_t oy = 0; oy < g.outy; ++oy) {
                                const int64_t iy = oy - g.pad + ky;
                                if (iy < 0 || iy >= g.iny) continue;
                                const float* grow = go + (oz * g.outy + oy) * g.outx;
                                const float* xrow = xc + (iz * g.iny + iy) * g.inx + off;
                                for (int64_t vs = 0; vs < g.outx; vs += 8) {
                                    const int64_t a = oxlo - vs > 0 ? oxlo - vs : 0;
                                    const int64_t b2 = oxhi - vs < 8 ? oxhi - vs : 8;
                                    if (b2 <= a) continue;
                                    const int reg = static_cast<int>((vs >> 3) & 3);
                                    if (a == 0 && b2 == 8) {
                                        acc.r[reg] = _mm256_add_ps(
                                            acc.r[reg],
                                            _mm256_mul_ps(_mm256_loadu_ps(grow + vs),
                                                          _mm256_loadu_ps(xrow + vs)));
                                    } else {
                                        const __m256i m = lane_range(a, b2);
                                        const __m256 gv = _mm256_maskload_ps(grow + vs, m);
                                        const __m256 xv = _mm256_maskload_ps(xrow + vs, m);
                                        const __m256 s = _mm256_add_ps(
                                            acc.r[reg], _mm256_mul_ps(gv, xv));
                                        acc.r[reg] = _mm256_blendv_ps(acc.r[reg], s,
                                                                      _mm256_castsi256_ps(m));
                                    }
                                }
                            }
                        }
                    }
                    gwc[(kz * g.k + ky) * g.k + kx] = acc.reduce();
                }
    }
}

// -------------------------------------------------- dconv (k=4, s=2, p=1)

inline bool dconv_fast_shape(const ConvGeom& g) {
    return g.k == 4 && g.stride == 2 && g.pad == 1;
}

// Full parity rows in registers. Valid taps per parity, ascending kx:
//   even out (2t):   kx=1 -> in[t],   kx=3 -> in[t-1]
//   odd out (2t+1):  kx=0 -> in[t+1], kx=2 -> in[t]
template <int NP>
inline void dconv_fwd_row(const ConvGeom& g, const float* xb, const float* w,
                          int64_t oc, float bv, float* orow, int64_t oz, int64_t oy) {
    const int64_t ivox = g.in_voxels();
    __m256 ev[NP], od[NP];
    const __m256 bias_v = _mm256_set1_ps(bv);
    for (int v = 0; v < NP; ++v) ev[v] = od[v] = bias_v;

    const int64_t kzs[2] = {(oz & 1) ? 0 : 1, (oz & 1) ? 2 : 3};
    const int64_t kys[2] = {(oy & 1) ? 0 : 1, (oy & 1) ? 2 : 3};

    for (int64_t ci = 0; ci < g.cin; ++ci) {
        const float* xc = xb + ci * ivox;
        const float* wco = w + (ci * g.cout + oc) * 64;
        for (int a = 0; a < 2; ++a) {
            const int64_t kz = kzs[a];
            const int64_t iz = (oz + 1 - kz) / 2;
            if (iz < 0 || iz >= g.inz) continue;
            for (int b2 = 0; b2 < 2; ++b2) {
                const int64_t ky = kys[b2];
                const int64_t iy = (oy + 1 - ky) / 2;
                if (iy < 0 || iy >= g.iny) continue;
                const float* xrow = xc + (iz * g.iny + iy) * g.inx;
                const float* wk = wco + (kz * 4 + ky) * 4;
                const __m256 w0 = _mm256_set1_ps(wk[0]);
                const __m256 w1 = _mm256_set1_ps(wk[1]);
                const __m256 w2 = _mm256_set1_ps(wk[2]);
                const __m256 w3 = _mm256_set1_ps(wk[3]);
                // kx = 0: odd += w0 * in[t+1]; t = inx-1 is padding
                for (int v = 0; v + 1 < NP; ++v) od[v] = tap_full(od[v], w0, xrow + 8 * v + 1);
                od[NP - 1] = tap_masked(od[NP - 1], w0, xrow + 8 * (NP - 1) + 1, 0, 7);
                // kx = 1: even += w1 * in[t]
                for (int v = 0; v < NP; ++v) ev[v] = tap_full(ev[v], w1, xrow + 8 * v);
                // kx = 2: odd += w2 * in[t]
                for (int v = 0; v < NP; ++v) od[v] = tap_full(od[v], w2, xrow + 8 * v);
                // kx = 3: even += w3 * in[t-1]; t = 0 is padding
                ev[0] = tap_masked(ev[0], w3, xrow - 1, 1, 8);
                for (int v = 1; v < NP; ++v) ev[v] = tap_full(ev[v], w3, xrow + 8 * v - 1);
            }
        }
    }

    for (int v = 0; v < NP; ++v) {
        const __m256 lo = _mm256_unpacklo_ps(ev[v], od[v]);
        const __m256 hi = _mm256_unpackhi_ps(ev[v], od[v]);
        _mm256_storeu_ps(orow + 16 * v, _mm256_permute2f128_ps(lo, hi, 0x20));
        _mm256_storeu_ps(orow + 16 * v + 8, _mm256_permute2f128_ps(lo, hi, 0x31));
    }
}

// general tile (arbitrary input widths)
template <int NP>
inline void dconv_fwd_tile(const ConvGeom& g, const float* xb, const float* w,
                           int64_t oc, float bv, float* orow, int64_t oz,
                           int64_t oy, int64_t t0, int64_t t1) {
    const int64_t ivox = g.in_voxels();
    __m256 ev[NP], od[NP];
    const __m256 bias_v = _mm256_set1_ps(bv);
    for (int v = 0; v < NP; ++v) ev[v] = od[v] = bias_v;

    const int64_t kzs[2] = {(oz & 1) ? 0 : 1, (oz & 1) ? 2 : 3};
    const int64_t kys[2] = {(oy & 1) ? 0 : 1, (oy & 1) ? 2 : 3};

    for (int64_t ci = 0; ci < g.cin; ++ci) {
        const float* xc = xb + ci * ivox;
        const float* wco = w + (ci * g.cout + oc) * 64;
        for (int a = 0; a < 2; ++a) {
            const int64_t kz = kzs[a];
            const int64_t iz = (oz + 1 - kz) / 2;
            if (iz < 0 || iz >= g.inz) continue;
            for (int b2 = 0; b2 < 2; ++b2) {
                const int64_t ky = kys[b2];
                const int64_t iy = (oy + 1 - ky) / 2;
                if (iy < 0 || iy >= g.iny) continue;
                const float* xrow = xc + (iz * g.iny + iy) * g.inx;
                const float* wk = wco + (kz * 4 + ky) * 4;
                const __m256 w0 = _mm256_set1_ps(wk[0]);
                const __m256 w1 = _mm256_set1_ps(wk[1]);
                const __m256 w2 = _mm256_set1_ps(wk[2]);
                const __m256 w3 = _mm256_set1_ps(wk[3]);
                for (int v = 0; v < NP; ++v) {
                    const int64_t vs = t0 + 8 * v;
                    const int64_t lanes = t1 - vs < 8 ? t1 - vs : 8;
                    if (lanes <= 0) continue;
                    const int64_t b0 = g.inx - 1 - vs < lanes ? g.inx - 1 - vs : lanes;
                    if (b0 == 8)
                        od[v] = tap_full(od[v], w0, xrow + vs + 1);
                    else if (b0 > 0)
                        od[v] = tap_masked(od[v], w0, xrow + vs + 1, 0, b0);
                    if (lanes == 8)
                        ev[v] = tap_full(ev[v], w1, xrow + vs);
                    else
                        ev[v] = tap_masked(ev[v], w1, xrow + vs, 0, lanes);
                    if (lanes == 8)
                        od[v] = tap_full(od[v], w2, xrow + vs);
                    else
                        od[v] = tap_masked(od[v], w2, xrow + vs, 0, lanes);
                    const int64_t a3 = vs == 0 ? 1 : 0;
                    if (a3 == 0 && lanes == 8)
                        ev[v] = tap_full(ev[v], w3, xrow + vs - 1);
                    else if (lanes > a3)
                        ev[v] = tap_masked(ev[v], w3, xrow + vs - 1, a3, lanes);
                }
            }
        }
    }

    for (int v = 0; v < NP; ++v) {
        const int64_t vs = t0 + 8 * v;
        const int64_t lanes = t1 - vs < 8 ? t1 - vs : 8;
        if (lanes <= 0) continue;
        const __m256 lo = _mm256_unpacklo_ps(ev[v], od[v]);
        const __m256 hi = _mm256_unpackhi_ps(ev[v], od[v]);
        const __m256 out0 = _mm256_permute2f128_ps(lo, hi, 0x20);
        const __m256 out1 = _mm256_permute2f128_ps(lo, hi, 0x31);
        float* dst = orow + 2 * vs;
        const int64_t fl = 2 * lanes;
        if (fl >= 8)
            _mm256_storeu_ps(dst, out0);
        else
            _mm256_maskstore_ps(dst, first_lanes(fl), out0);
        if (fl > 8) {
            if (fl == 16)
                _mm256_storeu_ps(dst + 8, out1);
            else
                _mm256_maskstore_ps(dst + 8, first_lanes(fl - 8), out1);
        }
    }
}

void dconv_fwd_avx2(const ConvGeom& g, const float* x, const float* w,
                    const float* bias, float* out, int64_t lo, int64_t hi) {
    if (!dconv_fast_shape(g)) {
        dconv_fwd_ref<float>(g, x, w, bias, out, lo, hi);
        return;
    }
    const int64_t ivox = g.in_voxels(), ovox = g.out_voxels();
    const int64_t half = g.outx / 2; // == inx
    const bool full_rows = half % 8 == 0 && half >= 8 && half <= 64;
    for (int64_t job = lo; job < hi; ++job) {
        const int64_t b = job / g.cout, oc = job % g.cout;
        const float* xb = x + b * g.cin * ivox;
        float* ob = out + job * ovox;
        const float bv = bias ? bias[oc] : 0.0f;
        for (int64_t oz = 0; oz < g.outz; ++oz)
            for (int64_t oy = 0; oy < g.outy; ++oy) {
                float* orow = ob + (oz * g.outy + oy) * g.outx;
                if (full_rows) {
                    switch (half >> 3) {
                        case 1: dconv_fwd_row<1>(g, xb, w, oc, bv, orow, oz, oy); break;
                        case 2: dconv_fwd_row<2>(g, xb, w, oc, bv, orow, oz, oy); break;
                        case 3: dconv_fwd_row<3>(g, xb, w, oc, bv, orow, oz, oy); break;
                        case 4: dconv_fwd_row<4>(g, xb, w, oc, bv, orow, oz, oy); break;
                        case 5: dconv_fwd_row<5>(g, xb, w, oc, bv, orow, oz, oy); break;
                        case 6: dconv_fwd_row<6>(g, xb, w, oc, bv, orow, oz, oy); break;
                        case 7: dconv_fwd_row<7>(g, xb, w, oc, bv, orow, oz, oy); break;
                        default: dconv_fwd_row<8>(g, xb, w, oc, bv, orow, oz, oy); break;
                    }
                    continue;
                }
                for (int64_t t0 = 0; t0 < half; t0 += 32) {
                    const int64_t t1 = t0 + 32 < half ? t0 + 32 : half;
                    switch ((t1 - t0 + 7) >> 3) {
                        case 1: dconv_fwd_tile<1>(g, xb, w, oc, bv, orow, oz, oy, t0, t1); break;
                        case 2: dconv_fwd_tile<2>(g, xb, w, oc, bv, orow, oz, oy, t0, t1); break;
                        case 3: dconv_fwd_tile<3>(g, xb, w, oc, bv, orow, oz, oy, t0, t1); break;
                        default: dconv_fwd_tile<4>(g, xb, w, oc, bv, orow, oz, oy, t0, t1); break;
                    }
                }
            }
    }
}

// ------------------------------------------------------------ dconv_bwd_in
// gin[i] from row-deinterleaved gout: kx=0 -> odd[i-1] (i>=1), kx=1 -> even[i],
// kx=2 -> odd[i], kx=3 -> even[i+1] (i+1 < inx).
template <int NV>
inline void dconv_bwd_in_row(const ConvGeom& g, const float* gb, const float* w,
                             int64_t ci, float* girow, int64_t iz, int64_t iy) {
    const int64_t ovox = g.out_voxels();
    const int64_t half = g.outx / 2;
    __m256 acc[NV];
    for (int v = 0; v < NV; ++v) acc[v] = _mm256_setzero_ps();

    for (int64_t oc = 0; oc < g.cout; ++oc) {
        const float* go = gb + oc * ovox;
        const float* wco = w + (ci * g.cout + oc) * 64;
        for (int64_t kz = 0; kz < 4; ++kz) {
            const int64_t oz = 2 * iz - 1 + kz;
            if (oz < 0 || oz >= g.outz) continue;
            for (int64_t ky = 0; ky < 4; ++ky) {
                const int64_t oy = 2 * iy - 1 + ky;
                if (oy < 0 || oy >= g.outy) continue;
                const float* grow = go + (oz * g.outy + oy) * g.outx;
                const float* geven = grow;
                const float* godd = grow + half;
                const float* wk = wco + (kz * 4 + ky) * 4;
                const __m256 w0 = _mm256_set1_ps(wk[0]);
                const __m256 w1 = _mm256_set1_ps(wk[1]);
                const __m256 w2 = _mm256_set1_ps(wk[2]);
                const __m256 w3 = _mm256_set1_ps(wk[3]);
                // kx = 0: odd[i-1], i = 0 is padding
                acc[0] = tap_masked(acc[0], w0, godd - 1, 1, 8);
                for (int v = 1; v < NV; ++v) acc[v] = tap_full(acc[v], w0, godd + 8 * v - 1);
                // kx = 1: even[i]
                for (int v = 0; v < NV; ++v) acc[v] = tap_full(acc[v], w1, geven + 8 * v);
                // kx = 2: odd[i]
                for (int v = 0; v < NV; ++v) acc[v] = tap_full(acc[v], w2, godd + 8 * v);
                // kx = 3: even[i+1], i = inx-1 is padding
                for (int v = 0; v + 1 < NV; ++v)
                    acc[v] = tap_full(acc[v], w3, geven + 8 * v + 1);
                acc[NV - 1] = tap_masked(acc[NV - 1], w3, geven + 8 * (NV - 1) + 1, 0, 7);
            }
        }
    }
    for (int v = 0; v < NV; ++v) _mm256_storeu_ps(girow + 8 * v, acc[v]);
}

template <int NV>
inline void dconv_bwd_in_tile(const ConvGeom& g, const float* gb, const float* w,
                              int64_t ci, float* girow, int64_t iz, int64_t iy,
                              int64_t t0, int64_t t1) {
    const int64_t ovox = g.out_voxels();
    const int64_t half = g.outx / 2;
    __m256 acc[NV];
    for (int v = 0; v < NV; ++v) acc[v] = _mm256_setzero_ps();

    for (int64_t oc = 0; oc < g.cout; ++oc) {
        const float* go = gb + oc * ovox;
        const float* wco = w + (ci * g.cout + oc) * 64;
        for (int64_t kz = 0; kz < 4; ++kz) {
            const int64_t oz = 2 * iz - 1 + kz;
            if (oz < 0 || oz >= g.outz) continue;
            for (int64_t ky = 0; ky < 4; ++ky) {
                const int64_t oy = 2 * iy - 1 + ky;
                if (oy < 0 || oy >= g.outy) continue;
                const float* grow = go + (oz * g.outy + oy) * g.outx;
                const float* geven = grow;
                const float* godd = grow + half;
                const float* wk = wco + (kz * 4 + ky) * 4;
                const __m256 w0 = _mm256_set1_ps(wk[0]);
                const __m256 w1 = _mm256_set1_ps(wk[1]);
                const __m256 w2 = _mm256_set1_ps(wk[2]);
                const __m256 w3 = _mm256_set1_ps(wk[3]);
                for (int v = 0; v < NV; ++v) {
                    const int64_t vs = t0 + 8 * v;
                    const int64_t lanes = t1 - vs < 8 ? t1 - vs : 8;
                    if (lanes <= 0) continue;
                    const int64_t a0 = vs == 0 ? 1 : 0;
                    if (a0 == 0 && lanes == 8)
                        acc[v] = tap_full(acc[v], w0, godd + vs - 1);
                    else if (lanes > a0)
                        acc[v] = tap_masked(acc[v], w0, godd + vs - 1, a0, lanes);
                    if (lanes == 8)
                        acc[v] = tap_full(acc[v], w1, geven + vs);
                    else
                        acc[v] = tap_masked(acc[v], w1, geven + vs, 0, lanes);
                    if (lanes == 8)
                        acc[v] = tap_full(acc[v], w2, godd + vs);
                    else
                        acc[v] = tap_masked(acc[v], w2, godd + vs, 0, lanes);
                    const int64_t b3 = half - 1 - vs < lanes ? half - 1 - vs : lanes;
                    if (b3 == 8)
                        acc[v] = tap_full(acc[v], w3, geven + vs + 1);
                    else if (b3 > 0)
                        acc[v] = tap_masked(acc[v], w3, geven + vs + 1, 0, b3);
                }
            }
        }
    }
    for (int v = 0; v < NV; ++v) {
        const int64_t vs = t0 + 8 * v;
        const int64_t lanes = t1 - vs < 8 ? t1 - vs : 8;
        if (lanes == 8)
            _mm256_storeu_ps(girow + vs, acc[v]);
        else if (lanes > 0)
            _mm256_maskstore_ps(girow + vs, first_lanes(lanes), acc[v]);
    }
}

void dconv_bwd_in_avx2(const ConvGeom& g, const float* gout_d, const float* w,
                       float* gin, int64_t lo, int64_t hi) {
    if (!dconv_fast_shape(g)) {
        dconv_bwd_in_ref<float>(g, gout_d, w, gin, lo, hi);
        return;
    }
    const int64_t ivox = g.in_voxels(), ovox = g.out_voxels();
    const bool full_rows = g.inx % 8 == 0 && g.inx >= 8 && g.inx <= 64;
    for (int64_t job = lo; job < hi; ++job) {
        const int64_t b = job / g.cin, ci = job % g.cin;
        const float* gb = gout_d + b * g.cout * ovox;
        float* gi = gin + job * ivox;
        for (int64_t iz = 0; iz < g.inz; ++iz)
            for (int64_t iy = 0; iy < g.iny; ++iy) {
                float* girow = gi + (iz * g.iny + iy) * g.inx;
                if (full_rows) {
                    switch (g.inx >> 3) {
                        case 1: dconv_bwd_in_row<1>(g, gb, w, ci, girow, iz, iy); break;
                        case 2: dconv_bwd_in_row<2>(g, gb, w, ci, girow, iz, iy); break;
                        case 3: dconv_bwd_in_row<3>(g, gb, w, ci, girow, iz, iy); break;
                        case 4: dconv_bwd_in_row<4>(g, gb, w, ci, girow, iz, iy); break;
                        case 5: dconv_bwd_in_row<5>(g, gb, w, ci, girow, iz, iy); break;
                        case 6: dconv_bwd_in_row<6>(g, gb, w, ci, girow, iz, iy); break;
                        case 7: dconv_bwd_in_row<7>(g, gb, w, ci, girow, iz, iy); break;
                        default: dconv_bwd_in_row<8>(g, gb, w, ci, girow, iz, iy); break;
                    }
                    continue;
                }
                for (int64_t t0 = 0; t0 < g.inx; t0 += 64) {
                    const int64_t t1 = t0 + 64 < g.inx ? t0 + 64 : g.inx;
                    switch ((t1 - t0 + 7) >> 3) {
                        case 1: dconv_bwd_in_tile<1>(g, gb, w, ci, girow, iz, iy, t0, t1); break;
                        case 2: dconv_bwd_in_tile<2>(g, gb, w, ci, girow, iz, iy, t0, t1); break;
                        case 3: dconv_bwd_in_tile<3>(g, gb, w, ci, girow, iz, iy, t0, t1); break;
                        case 4: dconv_bwd_in_tile<4>(g, gb, w, ci, girow, iz, iy, t0, t1); break;
                        case 5: dconv_bwd_in_tile<5>(g, gb, w, ci, girow, iz, iy, t0, t1); break;
                        case 6: dconv_bwd_in_tile<6>(g, gb, w, ci, girow, iz, iy, t0, t1); break;
                        case 7: dconv_bwd_in_tile<7>(g, gb, w, ci, girow, iz, iy, t0, t1); break;
                        default: dconv_bwd_in_tile<8>(g, gb, w, ci, girow, iz, iy, t0, t1); break;
                    }
                }
            }
    }
}

// ------------------------------------------------------------ dconv_bwd_w

void dconv_bwd_w_avx2(const ConvGeom& g, const float* x, const float* gout_d,
                      float* gw, int64_t lo, int64_t hi) {
    if (!dconv_fast_shape(g)) {
        dconv_bwd_w_ref<float>(g, x, gout_d, gw, lo, hi);
        return;
    }
    const int64_t ivox = g.in_voxels(), ovox = g.out_voxels();
    const int64_t half = g.outx / 2;
    const bool full_rows = g.inx % 8 == 0 && g.inx >= 8;
    for (int64_t job = lo; job < hi; ++job) {
        const int64_t ci = job / g.cout, oc = job % g.cout;
        float* gwc = gw + job * 64;
        if (full_rows) {
            const int64_t nvec = g.inx >> 3;
            // two fused passes per (kz, ky): kx = {0, 1} then kx = {2, 3}
            for (int64_t kz = 0; kz < 4; ++kz)
                for (int64_t ky = 0; ky < 4; ++ky)
                    for (int pass = 0; pass < 2; ++pass) {
                        Acc32Regs lo_acc, hi_acc; // kx = 2*pass, 2*pass + 1
                        for (int64_t b = 0; b < g.batch; ++b) {
                            const float* xc = x + (b * g.cin + ci) * ivox;
                            const float* go = gout_d + (b * g.cout + oc) * ovox;
                            for (int64_t iz = 0; iz < g.inz; ++iz) {
                                const int64_t oz = 2 * iz - 1 + kz;
                                if (oz < 0 || oz >= g.outz) continue;
                                for (int64_t iy = 0; iy < g.iny; ++iy) {
                                    const int64_t oy = 2 * iy - 1 + ky;
                                    if (oy < 0 || oy >= g.outy) continue;
                                    const float* xrow = xc + (iz * g.iny + iy) * g.inx;
                                    const float* grow = go + (oz * g.outy + oy) * g.outx;
                                    const float* geven = grow;
                                    const float* godd = grow + half;
                                    for (int64_t v = 0; v < nvec; ++v) {
                                        const int reg = static_cast<int>(v & 3);
                                        const __m256 xv = _mm256_loadu_ps(xrow + 8 * v);
                                        if (pass == 0) {
                                            // kx=0: odd[i-1], i=0 padding
                                            if (v == 0)
                                                lo_acc.r[reg] = dot_masked(lo_acc.r[reg], xv,
                                                                           godd - 1, 1, 8);
                                            else
                                                lo_acc.r[reg] = _mm256_add_ps(
                                                    lo_acc.r[reg],
                                                    _mm256_mul_ps(xv, _mm256_loadu_ps(
                                                                          godd + 8 * v - 1)));
                                            // kx=1: even[i]
                                            hi_acc.r[reg] = _mm256_add_ps(
                                                hi_acc.r[reg],
                                                _mm256_mul_ps(xv,
                                                              _mm256_loadu_ps(geven + 8 * v)));
                                        } else {
                                            // kx=2: odd[i]
                                            lo_acc.r[reg] = _mm256_add_ps(
                                                lo_acc.r[reg],
                                                _mm256_mul_ps(xv,
                                                              _mm256_loadu_ps(godd + 8 * v)));
                                            // kx=3: even[i+1], i=inx-1 padding
                                            if (v == nvec - 1)
                                                hi_acc.r[reg] =
                                                    dot_masked(hi_acc.r[reg], xv,
                                                               geven + 8 * v + 1, 0, 7);
                                            else
                                                hi_acc.r[reg] = _mm256_add_ps(
                                                    hi_acc.r[reg],
                                                    _mm256_mul_ps(xv, _mm256_loadu_ps(
                                                                          geven + 8 * v + 1)));
                                        }
                                    }
                                }
                            }
                        }
                        gwc[(kz * 4 + ky) * 4 + 2 * pass] = lo_acc.reduce();
                        gwc[(kz * 4 + ky) * 4 + 2 * pass + 1] = hi_acc.reduce();
                    }
            continue;
        }
        // general path, one tap at a time with row-aligned lanes
        for (int64_t kz = 0; kz < 4; ++kz)
            for (int64_t ky = 0; ky < 4; ++ky)
                for (int64_t kx = 0; kx < 4; ++kx) {
                    const int64_t ixlo = kx == 0 ? 1 : 0;
                    const int64_t ixhi = kx == 3 ? g.inx - 1 : g.inx;
                    const bool odd = ((kx + 1) & 1) != 0;
                    const int64_t shift = (kx - 1) >> 1;
                    Acc32Regs acc;
                    for (int64_t b = 0; b < g.batch; ++b) {
                        const float* xc = x + (b * g.cin + ci) * ivox;
                        const float* go = gout_d + (b * g.cout + oc) * ovox;
                        for (int64_t iz = 0; iz < g.inz; ++iz) {
                            const int64_t oz = 2 * iz - 1 + kz;
                            if (oz < 0 || oz >= g.outz) continue;
                            for (int64_t iy = 0; iy < g.iny; ++iy) {
                                const int64_t oy = 2 * iy - 1 + ky;
                                if (oy < 0 || oy >= g.outy) continue;
                                const float* xrow = xc + (iz * g.iny + iy) * g.inx;
                                const float* grow = go + (oz * g.outy + oy) * g.outx +
                                                    (odd ? half : 0) + shift;
                                for (int64_t vs = 0; vs < g.inx; vs += 8) {
                                    const int64_t a = ixlo - vs > 0 ? ixlo - vs : 0;
                                    const int64_t b2 = ixhi - vs < 8 ? ixhi - vs : 8;
                                    if (b2 <= a) continue;
                                    const int reg = static_cast<int>((vs >> 3) & 3);
                                    if (a == 0 && b2 == 8) {
                                        acc.r[reg] = _mm256_add_ps(
                                            acc.r[reg],
                                            _mm256_mul_ps(_mm256_loadu_ps(xrow + vs),
                                                          _mm256_loadu_ps(grow + vs)));
                                    } else {
                                        const __m256i m = lane_range(a, b2);
                                        const __m256 xv = _mm256_maskload_ps(xrow + vs, m);
                                        const __m256 gv = _mm256_maskload_ps(grow + vs, m);
                                        const __m256 s =
                                            _mm256_add_ps(acc.r[reg], _mm256_mul_ps(xv, gv));
                                        acc.r[reg] = _mm256_blendv_ps(acc.r[reg], s,
                                                                      _mm256_castsi256_ps(m));
                                    }
                                }
                            }
                        }
                    }
                    gwc[(kz * 4 + ky) * 4 + kx] = acc.reduce();
                }
    }
}

// ------------------------------------------------------------- elementwise

void add_avx2(float* y, const float* a, const float* b, int64_t lo, int64_t hi) {
    int64_t i = lo;
    for (; i + 8 <= hi; i += 8)
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < hi; ++i) y[i] = a[i] + b[i];
}

void acc_avx2(float* y, const float* x, int64_t lo, int64_t hi) {
    int64_t i = lo;
    for (; i + 8 <= hi; i += 8)
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), _mm256_loadu_ps(x + i)));
    for (; i < hi; ++i) y[i] += x[i];
}

void relu_fwd_avx2(float* y, const float* x, int64_t lo, int64_t hi) {
    const __m256 zero = _mm256_setzero_ps();
    int64_t i = lo;
    for (; i + 8 <= hi; i += 8) {
        const __m256 v = _mm256_loadu_ps(x + i);
        const __m256 m = _mm256_cmp_ps(v, zero, _CMP_GT_OQ);
        _mm256_storeu_ps(y + i, _mm256_and_ps(v, m));
    }
    for (; i < hi; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_avx2(float* gx, const float* x, const float* gy, int64_t lo, int64_t hi) {
    const __m256 zero = _mm256_setzero_ps();
    int64_t i = lo;
    for (; i + 8 <= hi; i += 8) {
        const __m256 m = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GE_OQ);
        _mm256_storeu_ps(gx + i, _mm256_and_ps(_mm256_loadu_ps(gy + i), m));
    }
    for (; i < hi; ++i) gx[i] = x[i] >= 0.0f ? gy[i] : 0.0f;
}

void affine_avx2(float* y, const float* x, float a, float b, int64_t lo, int64_t hi) {
    const __m256 av = _mm256_set1_ps(a), bv = _mm256_set1_ps(b);
    int64_t i = lo;
    for (; i + 8 <= hi; i += 8)
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_mul_ps(av, _mm256_loadu_ps(x + i)), bv));
    for (; i < hi; ++i) y[i] = a * x[i] + b;
}

void affine2_avx2(float* gx, const float* gy, const float* x, float A, float B,
                  float C, int64_t lo, int64_t hi) {
    const __m256 Av = _mm256_set1_ps(A), Bv = _mm256_set1_ps(B), Cv = _mm256_set1_ps(C);
    int64_t i = lo;
    for (; i + 8 <= hi; i += 8) {
        const __m256 t = _mm256_add_ps(_mm256_mul_ps(Cv, _mm256_loadu_ps(x + i)), Bv);
        _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_mul_ps(Av, _mm256_loadu_ps(gy + i)), t));
    }
    for (; i < hi; ++i) {
        const float t = C * x[i] + B;
        gx[i] = A * gy[i] + t;
    }
}

void sgd_update_avx2(float* w, float* v, const float* g, float mom, float wd,
                     float lr, int64_t lo, int64_t hi) {
    const __m256 momv = _mm256_set1_ps(mom), wdv = _mm256_set1_ps(wd),
                 lrv = _mm256_set1_ps(lr);
    int64_t i = lo;
    for (; i + 8 <= hi; i += 8) {
        const __m256 wv = _mm256_loadu_ps(w + i);
        const __m256 t = _mm256_add_ps(_mm256_loadu_ps(g + i), _mm256_mul_ps(wdv, wv));
        const __m256 nv = _mm256_add_ps(_mm256_mul_ps(momv, _mm256_loadu_ps(v + i)), t);
        _mm256_storeu_ps(v + i, nv);
        _mm256_storeu_ps(w + i, _mm256_sub_ps(wv, _mm256_mul_ps(lrv, nv)));
    }
    for (; i < hi; ++i) {
        const float t = g[i] + wd * w[i];
        v[i] = mom * v[i] + t;
        w[i] = w[i] - lr * v[i];
    }
}

// -------------------------------------------------------------- reductions

float sum_blk_avx2(const float* x, int64_t n) {
    Acc32 acc;
    sum_rows(acc, x, n);
    return acc.reduce();
}

float dot_blk_avx2(const float* x, const float* y, int64_t n) {
    Acc32 acc;
    dot_rows(acc, x, y, n);
    return acc.reduce();
}

const KernelOps kAvx2Ops = {
    "avx2",
    conv_fwd_avx2,
    conv_bwd_w_avx2,
    dconv_fwd_avx2,
    dconv_bwd_in_avx2,
    dconv_bwd_w_avx2,
    add_avx2,
    acc_avx2,
    relu_fwd_avx2,
    relu_bwd_avx2,
    affine_avx2,
    affine2_avx2,
    sgd_update_avx2,
    sum_blk_avx2,
    dot_blk_avx2,
    deinterleave_rows_ref<float>, // data movement, shared with the reference
};

} // namespace

const KernelOps* avx2_ops_build() { return cpu_has_avx2() ? &kAvx2Ops : nullptr; }

#else

const KernelOps* avx2_ops_build() { return nullptr; }

#endif // VOXSEG_AVX2_TU

} // namespace voxseg::kernels
