#include "voxseg/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "voxseg/kernels.hpp"
#include "voxseg/kernels_ref.hpp"
#include "voxseg/thread_pool.hpp"

namespace voxseg {

double lr_poly(int64_t t, const OptimConfig& cfg) {
    if (t < 0 || t > cfg.total_iters)
        throw std::invalid_argument("lr_poly: iteration outside [0, T]");
    const double frac = 1.0 - static_cast<double>(t) / static_cast<double>(cfg.total_iters);
    return cfg.base_lr * std::pow(frac, cfg.decay_power);
}

template <typename T>
SgdMomentum<T>::SgdMomentum(const std::vector<ParamRef<T>>& params) {
    velocity_.reserve(params.size());
    for (const auto& p : params) velocity_.emplace_back(p.value->shape());
}

template <typename T>
void SgdMomentum<T>::step(const std::vector<ParamRef<T>>& params, double lr,
                          double momentum, double weight_decay) {
    if (params.size() != velocity_.size())
        throw std::invalid_argument("sgd: parameter list changed size");
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& p = params[i];
        if (!p.grad || p.grad->count() != p.value->count())
            throw std::invalid_argument("sgd: missing gradient for " + p.name);
        const T wd = static_cast<T>(p.decay ? weight_decay : 0.0);
        const T mom = static_cast<T>(momentum);
        Tensor<T>& v = velocity_[i];
        T* w = p.value->data();
        T* vd = v.data();
        const T* g = p.grad->data();
        const T lrT = static_cast<T>(lr);
        ThreadPool::instance().parallel_for(p.value->count(), [&](int64_t lo, int64_t hi) {
            if constexpr (std::is_same_v<T, float>)
                kernels::active_ops().sgd_update(w, vd, g, mom, wd, lrT, lo, hi);
            else
                kernels::sgd_update_ref<T>(w, vd, g, mom, wd, lrT, lo, hi);
        });
    }
}

template class SgdMomentum<float>;
template class SgdMomentum<double>;

} // namespace voxseg
