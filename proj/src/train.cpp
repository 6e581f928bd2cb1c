#include "voxseg/train.hpp"

#include <cmath>
#include <cstring>

#include "voxseg/augment.hpp"

namespace voxseg {

namespace {

// stream tags to keep draw purposes apart
constexpr uint64_t kStreamBatch = 0xb01d;

} // namespace

void assemble_batch(const std::vector<TrainCase>& data, const TrainOptions& opt,
                    int64_t iter, Tensor<float>* batch, Tensor<float>* labels) {
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    const auto& ps = opt.sampler.patch_size;
    const int64_t svox = ps[0] * ps[1] * ps[2];
    const int64_t B = opt.optim.batch_size;
    if (batch->shape() != std::vector<int64_t>{B, 1, ps[2], ps[1], ps[0]})
        *batch = Tensor<float>({B, 1, ps[2], ps[1], ps[0]});
    if (labels->shape() != std::vector<int64_t>{B, ps[2], ps[1], ps[0]})
        *labels = Tensor<float>({B, ps[2], ps[1], ps[0]});

    Rng root(opt.seed);
    for (int64_t slot = 0; slot < B; ++slot) {
        Rng r = root.stream(kStreamBatch, static_cast<uint64_t>(iter),
                            static_cast<uint64_t>(slot));
        const size_t ci = static_cast<size_t>(r.next_below(data.size()));
        const TrainCase& c = data[ci];
        PatchPair patch =
            opt.sampler.stage == SamplerSpec::Stage::fine
                ? sample_fine(c.image, c.label, r, ps, opt.sampler.fine_margin)
                : sample_coarse(c.image, c.label, r, ps);
        const AugmentOp aug = sample_augment(r);
        apply_augment(aug, ps, patch.image, patch.label);
        std::memcpy(batch->data() + slot * svox, patch.image.data(),
                    static_cast<size_t>(svox) * sizeof(float));
        std::memcpy(labels->data() + slot * svox, patch.label.data(),
                    static_cast<size_t>(svox) * sizeof(float));
    }
}

LossBreakdown train_step(ResDsnNet<float>& net, SgdMomentum<float>& sgd,
                         const Tensor<float>& batch, const Tensor<float>& labels,
                         const OptimConfig& optim, int64_t iter) {
    NetworkOutputs<float> out = net.forward(batch, true);
    Tensor<float> gmain;
    std::vector<Tensor<float>> gaux;
    const LossBreakdown parts = loss_overall(out, labels, net.config(), &gmain, &gaux);
    if (!std::isfinite(parts.total))
        throw DivergenceError("training diverged: non-finite loss at iteration " +
                              std::to_string(iter));
    net.backward(gmain, gaux);
    auto params = net.params();
    sgd.step(params, lr_poly(iter, optim), optim.momentum, optim.weight_decay);
    return parts;
}

ResDsnNet<float> train_stage(const std::vector<TrainCase>& data, const TrainOptions& opt,
                             std::ostream* log) {
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    for (const auto& c : data)
        if (c.image.dims != c.label.dims)
            throw std::invalid_argument("train: case image/label dims differ");
    if (opt.sampler.patch_size[0] != opt.net.input_size[0] ||
        opt.sampler.patch_size[1] != opt.net.input_size[1] ||
        opt.sampler.patch_size[2] != opt.net.input_size[2])
        throw std::invalid_argument("train: patch size must equal the network input size");

    ResDsnNet<float> net(opt.net, opt.seed);
    auto params = net.params();
    SgdMomentum<float> sgd(params);

    if (log) *log << "iter,lr,loss_main,loss_aux1,loss_aux2,loss_total\n";

    Tensor<float> batch, labels;
    for (int64_t t = 0; t < opt.optim.total_iters; ++t) {
        assemble_batch(data, opt, t, &batch, &labels);
        const LossBreakdown parts = train_step(net, sgd, batch, labels, opt.optim, t);
        if (log && (t % opt.log_interval == 0 || t + 1 == opt.optim.total_iters)) {
            *log << t << ',' << lr_poly(t, opt.optim) << ',' << parts.main << ','
                 << parts.aux1 << ',' << parts.aux2 << ',' << parts.total << '\n';
            log->flush();
        }
    }
    return net;
}

} // namespace voxseg
