#include "voxseg/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>

#include "voxseg/kernels_ref.hpp"

namespace voxseg::kernels {

const KernelOps* avx2_ops_build(); // kernels_avx2.cpp

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

namespace {

const KernelOps kScalarOps = {
    "scalar",
    conv_fwd_ref<float>,
    conv_bwd_w_ref<float>,
    dconv_fwd_ref<float>,
    dconv_bwd_in_ref<float>,
    dconv_bwd_w_ref<float>,
    add_ref<float>,
    acc_ref<float>,
    relu_fwd_ref<float>,
    relu_bwd_ref<float>,
    affine_ref<float>,
    affine2_ref<float>,
    sgd_update_ref<float>,
    sum_blk_ref<float>,
    dot_blk_ref<float>,
    deinterleave_rows_ref<float>,
};

std::atomic<const KernelOps*> g_active{nullptr};

const KernelOps* pick_default() {
    const char* env = std::getenv("VOXSEG_SIMD");
    const std::string mode = env ? env : "auto";
    if (mode == "scalar") return &kScalarOps;
    const KernelOps* avx2 = avx2_ops_build();
    if (mode == "avx2") {
        if (!avx2) throw std::runtime_error("VOXSEG_SIMD=avx2 but AVX2 is unavailable");
        return avx2;
    }
    return avx2 ? avx2 : &kScalarOps;
}

} // namespace

const KernelOps& scalar_ops() { return kScalarOps; }

const KernelOps* avx2_ops() { return avx2_ops_build(); }

const KernelOps& active_ops() {
    const KernelOps* ops = g_active.load(std::memory_order_acquire);
    if (!ops) {
        ops = pick_default();
        g_active.store(ops, std::memory_order_release);
    }
    return *ops;
}

void force_backend(const std::string& name) {
    if (name == "scalar") {
        g_active.store(&kScalarOps, std::memory_order_release);
    } else if (name == "avx2") {
        const KernelOps* avx2 = avx2_ops_build();
        if (!avx2) throw std::runtime_error("AVX2 backend unavailable");
        g_active.store(avx2, std::memory_order_release);
    } else if (name == "auto") {
        const KernelOps* avx2 = avx2_ops_build();
        g_active.store(avx2 ? avx2 : &kScalarOps, std::memory_order_release);
    } else {
        throw std::invalid_argument("unknown kernel backend: " + name);
    }
}

void conv_bwd_in_ref_f32(const ConvGeom& g, const float* gout, const float* w,
                         float* gin, int64_t lo, int64_t hi) {
    conv_bwd_in_ref<float>(g, gout, w, gin, lo, hi);
}

} // namespace voxseg::kernels
