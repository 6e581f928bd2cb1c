#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "voxseg/tensor.hpp"

namespace voxseg {

struct ConvSpec {
    int64_t in_channels = 1;
    int64_t out_channels = 1;
    int64_t kernel = 3;
    int64_t stride = 1;
    int64_t pad = 0;
};

// Activations are [batch][channels][z][y][x]. Weights:
//   conv3d:   [out_channels][in_channels][k][k][k]
//   deconv3d: [in_channels][out_channels][k][k][k]
// Every forward has an exact hand-written backward; the accumulation order
// inside each output element is fixed, so results are bitwise reproducible
// for any thread count.

template <typename T>
Tensor<T> conv3d_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                     const ConvSpec& spec);
template <typename T>
void conv3d_bwd(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec,
                const Tensor<T>& gout, Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb);

// out spatial extent = (in - 1) * stride - 2*pad + kernel
template <typename T>
Tensor<T> deconv3d_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                       const ConvSpec& spec);
template <typename T>
void deconv3d_bwd(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec,
                  const Tensor<T>& gout, Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb);

// 2x2x2 / stride 2; spatial extents must be even. Ties break to the first
// index in scan order.
template <typename T>
struct MaxPoolResult {
    Tensor<T> out;
    std::vector<int64_t> argmax; // linear index into the (b, c) slab
};
template <typename T>
MaxPoolResult<T> maxpool3d_fwd(const Tensor<T>& x);
template <typename T>
Tensor<T> maxpool3d_bwd(const MaxPoolResult<T>& res, const Tensor<T>& gout,
                        const std::vector<int64_t>& in_shape);

// Per-channel batch normalization over (batch x spatial).
template <typename T>
struct BatchNormState {
    Tensor<T> running_mean; // [C]
    Tensor<T> running_var;  // [C], biased estimate
};
template <typename T>
struct BatchNormSaved {
    std::vector<T> mean; // batch statistics captured in train mode
    std::vector<T> inv;  // 1 / sqrt(var + eps)
};

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.9; // running = 0.9*running + 0.1*batch

template <typename T>
Tensor<T> batchnorm3d_fwd(const Tensor<T>& x, const Tensor<T>& gamma,
                          const Tensor<T>& beta, BatchNormState<T>& state,
                          bool train, BatchNormSaved<T>* saved);
template <typename T>
void batchnorm3d_bwd(const Tensor<T>& x, const Tensor<T>& gamma,
                     const BatchNormSaved<T>& saved, const Tensor<T>& gout,
                     Tensor<T>* gx, Tensor<T>* ggamma, Tensor<T>* gbeta);

template <typename T>
Tensor<T> relu_fwd(const Tensor<T>& x);
template <typename T>
Tensor<T> relu_bwd(const Tensor<T>& x, const Tensor<T>& gout);

template <typename T>
Tensor<T> residual_add(const Tensor<T>& a, const Tensor<T>& b);

// In-place y += x, used to merge gradients of shared branches.
template <typename T>
void accumulate(Tensor<T>& y, const Tensor<T>& x);

// Per-voxel 2-class softmax cross-entropy, mean-reduced over batch x voxels.
// (The sum form of the same objective is N times this value, N = batch *
// voxels; the mean keeps learning rates independent of the patch size.)
// labels hold exactly 0 or 1 per voxel; grad = (softmax - onehot) / N.
template <typename T>
struct XentResult {
    double loss = 0.0;
    Tensor<T> grad; // same shape as logits
};
template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, const Tensor<T>& labels);

// Foreground probability (softmax channel 1): [B][2][Z][Y][X] -> [B][Z][Y][X]
template <typename T>
Tensor<T> softmax_fg_prob(const Tensor<T>& logits);

} // namespace voxseg
