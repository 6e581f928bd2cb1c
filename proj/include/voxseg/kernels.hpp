#pragma once

#include <cstdint>
#include <string>

namespace voxseg::kernels {

// Shared geometry for convolution-family kernels.
// Tensors are [batch][channels][z][y][x], x contiguous.
// Convolution:            out = (in + 2*pad - k) / stride + 1
// Transposed convolution: out = (in - 1) * stride - 2*pad + k
struct ConvGeom {
    int64_t batch = 1;
    int64_t cin = 1, cout = 1;
    int64_t inx = 0, iny = 0, inz = 0;
    int64_t outx = 0, outy = 0, outz = 0;
    int64_t k = 1, stride = 1, pad = 0;

    int64_t in_voxels() const { return inx * iny * inz; }
    int64_t out_voxels() const { return outx * outy * outz; }
};

// Function table for the f32 hot paths. Every entry has a scalar reference
// implementation; the AVX2 variants are bit-identical to it (mul and add are
// rounded separately, reductions keep the reference's fixed 8-lane blocking),
// which the equivalence suite enforces with memcmp on random inputs.
//
// Range arguments partition an outer index space so callers can split work
// across threads; each output element is written by exactly one call.
struct KernelOps {
    const char* name;

    // weights [cout][cin][k][k][k]; bias may be null; outer = batch*cout.
    void (*conv_fwd)(const ConvGeom&, const float* x, const float* w,
                     const float* bias, float* out, int64_t lo, int64_t hi);
    // outer = cout*cin; accumulation over batch and voxels is 32-lane blocked
    // per row segment with a fixed reduction tree.
    void (*conv_bwd_w)(const ConvGeom&, const float* x, const float* gout,
                       float* gw, int64_t lo, int64_t hi);

    // Transposed convolution, weights [cin][cout][k][k][k]. The fast variants
    // require k=4, stride=2, pad=1 (the only shape the network uses); callers
    // fall back to the *_ref functions for anything else.
    void (*dconv_fwd)(const ConvGeom&, const float* x, const float* w,
                      const float* bias, float* out, int64_t lo, int64_t hi);
    // gout_d is gout with every x-row deinterleaved (even half, then odd half).
    void (*dconv_bwd_in)(const ConvGeom&, const float* gout_d, const float* w,
                         float* gin, int64_t lo, int64_t hi);
    void (*dconv_bwd_w)(const ConvGeom&, const float* x, const float* gout_d,
                        float* gw, int64_t lo, int64_t hi);

    // Elementwise over [lo, hi).
    void (*add)(float* y, const float* a, const float* b, int64_t lo, int64_t hi);
    void (*acc)(float* y, const float* x, int64_t lo, int64_t hi);
    void (*relu_fwd)(float* y, const float* x, int64_t lo, int64_t hi);
    void (*relu_bwd)(float* gx, const float* x, const float* gy, int64_t lo, int64_t hi);
    void (*affine)(float* y, const float* x, float a, float b, int64_t lo, int64_t hi);
    // gx = A*gy + (C*x + B), the batch-norm backward row form.
    void (*affine2)(float* gx, const float* gy, const float* x, float A, float B,
                    float C, int64_t lo, int64_t hi);
    // v = mom*v + (g + wd*w); w -= lr*v
    void (*sgd_update)(float* w, float* v, const float* g, float mom, float wd,
                       float lr, int64_t lo, int64_t hi);

    // 32-lane blocked reductions: acc[j & 31] += ..., lanes fold pairwise to
    // 8 and then through the fixed tree ((l0+l4)+(l2+l6)) + ((l1+l5)+(l3+l7)).
    float (*sum_blk)(const float* x, int64_t n);
    float (*dot_blk)(const float* x, const float* y, int64_t n);

    // dst row = [even elements of src row, odd elements]; rowlen must be even.
    void (*deinterleave_rows)(float* dst, const float* src, int64_t nrows,
                              int64_t rowlen);
};

const KernelOps& scalar_ops();
const KernelOps* avx2_ops(); // null when unavailable (build or CPU)

// Active table: VOXSEG_SIMD=scalar forces the reference, =avx2 requires AVX2,
// anything else picks the best available.
const KernelOps& active_ops();
void force_backend(const std::string& name); // "scalar", "avx2", "auto"

bool cpu_has_avx2();

// Generic scalar paths for shapes outside the fast variants' contracts.
void conv_bwd_in_ref_f32(const ConvGeom&, const float* gout, const float* w,
                         float* gin, int64_t lo, int64_t hi);

} // namespace voxseg::kernels
