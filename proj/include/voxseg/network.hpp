#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "voxseg/layers.hpp"
#include "voxseg/tensor.hpp"

namespace voxseg {

enum class Residual { none, sum };

// Encoder/decoder FCN with four resolution steps, optional long/short
// residual sums and two auxiliary supervision heads, per-voxel 2-class output
// at input resolution.
struct NetworkConfig {
    std::array<int64_t, 3> input_size{64, 64, 64}; // x, y, z voxels
    std::array<int64_t, 4> stage_channels{32, 64, 128, 256};
    Residual long_residual = Residual::sum;
    Residual short_residual = Residual::none;
    bool deep_supervision = true;
    double aux_weight1 = 0.2; // stage-2 branch
    double aux_weight2 = 0.4; // stage-3 branch
    double weight_decay = 0.0005;
    int64_t num_classes = 2;

    void validate() const; // throws std::invalid_argument
    bool operator==(const NetworkConfig&) const = default;

    // ResDSN, FResDSN, SResDSN, DSN (Residual axes ablation) or Res
    // (deep supervision off).
    static NetworkConfig variant(const std::string& name);

    std::string to_json() const;
    static NetworkConfig from_json(const std::string& text);

    // Desk-scale preset: channels 4-8-16-32.
    static NetworkConfig tiny();
};

template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* value = nullptr;
    Tensor<T>* grad = nullptr;
    bool decay = true; // BN gamma/beta are excluded from weight decay
};

template <typename T>
struct NetworkOutputs {
    Tensor<T> main_logits;              // [B][2][Z][Y][X]
    std::vector<Tensor<T>> aux_logits;  // 0 or 2 tensors, same shape
};

template <typename T>
class ResDsnNet {
public:
    ResDsnNet(const NetworkConfig& cfg, uint64_t seed);

    const NetworkConfig& config() const { return cfg_; }

    // Eval mode uses BN running statistics and caches nothing.
    // Train mode uses batch statistics, updates running stats, and caches
    // activations for one backward() call.
    NetworkOutputs<T> forward(const Tensor<T>& x, bool train);

    // Head gradients ordered as NetworkOutputs; fills parameter grads.
    void backward(const Tensor<T>& gmain, const std::vector<Tensor<T>>& gaux);

    // Stable registry: parameters first (optimizer order), BN running stats
    // are serialized separately.
    std::vector<ParamRef<T>> params();
    std::vector<std::pair<std::string, Tensor<T>*>> state_tensors(); // params + BN stats

    int64_t param_count(); // total scalar parameters
    double l2_norm_sq();   // ||theta||^2 over decayable parameters

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
    NetworkConfig cfg_;
};

struct LossBreakdown {
    double main = 0.0;
    double aux1 = 0.0;
    double aux2 = 0.0;
    double total = 0.0; // main + xi1*aux1 + xi2*aux2 (regularizer reported separately)
};

// Mean-reduced cross-entropy on every head combined with the aux weights.
// When grads is non-null it receives head gradients scaled for backward().
template <typename T>
LossBreakdown loss_overall(const NetworkOutputs<T>& outputs, const Tensor<T>& labels,
                              const NetworkConfig& cfg,
                              Tensor<T>* gmain = nullptr,
                              std::vector<Tensor<T>>* gaux = nullptr);

// Foreground probability of the main head in eval mode: [B][Z][Y][X].
template <typename T>
Tensor<T> predict_prob(ResDsnNet<T>& net, const Tensor<T>& x);

// Checkpoint: "RDSN" magic, version, JSON block (config echo, iteration,
// seed), then per-tensor records (name, rank, extents, little-endian f32).
struct CheckpointInfo {
    NetworkConfig config;
    int64_t iteration = 0;
    uint64_t seed = 0;
};

void save_checkpoint(ResDsnNet<float>& net, const std::string& path,
                     int64_t iteration, uint64_t seed);
CheckpointInfo peek_checkpoint(const std::string& path);
std::pair<ResDsnNet<float>, CheckpointInfo> load_checkpoint(const std::string& path);

} // namespace voxseg
