#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "voxseg/network.hpp"
#include "voxseg/optim.hpp"
#include "voxseg/sampler.hpp"
#include "voxseg/volume.hpp"

namespace voxseg {

// Raised when the training loss turns non-finite.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainCase {
    CtVolume image; // preprocessed (truncated + normalized)
    LabelVolume label;
};

struct TrainOptions {
    NetworkConfig net;
    SamplerSpec sampler;
    OptimConfig optim;
    uint64_t seed = 0;
    int64_t log_interval = 50;
};

// sampler -> augment -> forward -> overall loss -> SGD, fully reproducible
// given the seed: all randomness is counter-based on (iteration, slot).
// Logs CSV lines `iter,lr,loss_main,loss_aux1,loss_aux2,loss_total`.
ResDsnNet<float> train_stage(const std::vector<TrainCase>& data, const TrainOptions& opt,
                             std::ostream* log);

// One optimization step on an already-assembled batch; exposed for tests.
// Returns the loss breakdown of the batch at the current parameters.
LossBreakdown train_step(ResDsnNet<float>& net, SgdMomentum<float>& sgd,
                         const Tensor<float>& batch, const Tensor<float>& labels,
                         const OptimConfig& optim, int64_t iter);

// Deterministic batch assembly for iteration `iter` (stream-split per slot).
void assemble_batch(const std::vector<TrainCase>& data, const TrainOptions& opt,
                    int64_t iter, Tensor<float>* batch, Tensor<float>* labels);

} // namespace voxseg
