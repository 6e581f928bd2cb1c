#pragma once

#include <cstdint>
#include <vector>

#include "voxseg/network.hpp"
#include "voxseg/tensor.hpp"

namespace voxseg {

struct OptimConfig {
    double base_lr = 0.01;
    double momentum = 0.9;
    double decay_power = 0.9;
    double weight_decay = 0.0005;
    int64_t batch_size = 16;
    int64_t total_iters = 80000;

    bool operator==(const OptimConfig&) const = default;
};

// lr = base_lr * (1 - t/T)^power, monotone non-increasing on [0, T].
double lr_poly(int64_t t, const OptimConfig& cfg);

// Heavy-ball SGD with L2-in-gradient weight decay:
//   v <- momentum*v + (g + wd*w);  w <- w - lr*v
// BN gamma/beta carry decay=false in their ParamRef and are not decayed.
template <typename T>
class SgdMomentum {
public:
    explicit SgdMomentum(const std::vector<ParamRef<T>>& params);
    void step(const std::vector<ParamRef<T>>& params, double lr, double momentum,
              double weight_decay);

private:
    std::vector<Tensor<T>> velocity_;
};

} // namespace voxseg
