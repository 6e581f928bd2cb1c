#include "voxseg/network.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "voxseg/rng.hpp"

namespace voxseg {

using nlohmann::json;

namespace {

const char* residual_name(Residual r) { return r == Residual::sum ? "sum" : "none"; }

Residual residual_from(const std::string& s) {
    if (s == "sum") return Residual::sum;
    if (s == "none") return Residual::none;
    throw std::invalid_argument("unknown residual mode: " + s);
}

} // namespace

void NetworkConfig::validate() const {
    for (int64_t e : input_size)
        if (e < 8 || e % 8)
            throw std::invalid_argument("input_size must be >= 8 and divisible by 8");
    for (int64_t c : stage_channels)
        if (c < 1) throw std::invalid_argument("stage_channels must be positive");
    if (aux_weight1 < 0 || aux_weight2 < 0)
        throw std::invalid_argument("aux weights must be >= 0");
    if (weight_decay < 0) throw std::invalid_argument("weight_decay must be >= 0");
    if (num_classes != 2) throw std::invalid_argument("only the binary setting is supported");
}

NetworkConfig NetworkConfig::variant(const std::string& name) {
    NetworkConfig c;
    if (name == "ResDSN") {
        c.long_residual = Residual::sum;
        c.short_residual = Residual::none;
        c.deep_supervision = true;
    } else if (name == "FResDSN") {
        c.long_residual = Residual::sum;
        c.short_residual = Residual::sum;
        c.deep_supervision = true;
    } else if (name == "SResDSN") {
        c.long_residual = Residual::none;
        c.short_residual = Residual::sum;
        c.deep_supervision = true;
    } else if (name == "DSN") {
        c.long_residual = Residual::none;
        c.short_residual = Residual::none;
        c.deep_supervision = true;
    } else if (name == "Res") {
        c.long_residual = Residual::sum;
        c.short_residual = Residual::none;
        c.deep_supervision = false;
    } else {
        throw std::invalid_argument("unknown network variant: " + name);
    }
    return c;
}

NetworkConfig NetworkConfig::tiny() {
    NetworkConfig c;
    c.stage_channels = {4, 8, 16, 32};
    return c;
}

std::string NetworkConfig::to_json() const {
    json j;
    j["input_size"] = {input_size[0], input_size[1], input_size[2]};
    j["stage_channels"] = {stage_channels[0], stage_channels[1], stage_channels[2],
                           stage_channels[3]};
    j["long_residual"] = residual_name(long_residual);
    j["short_residual"] = residual_name(short_residual);
    j["deep_supervision"] = deep_supervision;
    j["aux_weights"] = {aux_weight1, aux_weight2};
    j["weight_decay"] = weight_decay;
    j["num_classes"] = num_classes;
    return j.dump();
}

NetworkConfig NetworkConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    NetworkConfig c;
    for (auto& [key, value] : j.items()) {
        if (key == "input_size") {
            for (int i = 0; i < 3; ++i) c.input_size[i] = value.at(i).get<int64_t>();
        } else if (key == "stage_channels") {
            for (int i = 0; i < 4; ++i) c.stage_channels[i] = value.at(i).get<int64_t>();
        } else if (key == "long_residual") {
            c.long_residual = residual_from(value.get<std::string>());
        } else if (key == "short_residual") {
            c.short_residual = residual_from(value.get<std::string>());
        } else if (key == "deep_supervision") {
            c.deep_supervision = value.get<bool>();
        } else if (key == "aux_weights") {
            c.aux_weight1 = value.at(0).get<double>();
            c.aux_weight2 = value.at(1).get<double>();
        } else if (key == "weight_decay") {
            c.weight_decay = value.get<double>();
        } else if (key == "num_classes") {
            c.num_classes = value.get<int64_t>();
        } else {
            throw std::invalid_argument("unknown network config key: " + key);
        }
    }
    c.validate();
    return c;
}

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// conv/deconv + batch norm + relu
template <typename T>
struct Block {
    std::string name;
    bool transposed = false;
    ConvSpec spec;
    Tensor<T> w, b, gamma, beta;
    BatchNormState<T> bn;
    Tensor<T> gw, gb, ggamma, gbeta;

    // train-mode cache
    Tensor<T> conv_out, bn_out, out;
    BatchNormSaved<T> saved;

    void init(const std::string& n, bool trans, int64_t cin, int64_t cout, int64_t k,
              int64_t stride, int64_t pad, const Rng& root) {
        name = n;
        transposed = trans;
        spec = ConvSpec{cin, cout, k, stride, pad};
        w = Tensor<T>(trans ? std::vector<int64_t>{cin, cout, k, k, k}
                            : std::vector<int64_t>{cout, cin, k, k, k});
        b = Tensor<T>({cout});
        gamma = Tensor<T>({cout});
        beta = Tensor<T>({cout});
        gamma.fill(T(1));
        bn.running_mean = Tensor<T>({cout});
        bn.running_var = Tensor<T>({cout});
        bn.running_var.fill(T(1));
        const double stddev = std::sqrt(2.0 / static_cast<double>(cin * k * k * k));
        Rng r = root.stream(fnv1a(n));
        for (int64_t i = 0; i < w.count(); ++i)
            w[i] = static_cast<T>(r.next_normal() * stddev);
    }

    // eval: stateless, BN running stats
    Tensor<T> run(const Tensor<T>& x) {
        Tensor<T> co = transposed ? deconv3d_fwd(x, w, b, spec) : conv3d_fwd(x, w, b, spec);
        Tensor<T> bo =
            batchnorm3d_fwd(co, gamma, beta, bn, false, static_cast<BatchNormSaved<T>*>(nullptr));
        return relu_fwd(bo);
    }

    // train: batch stats, caches activations for bwd
    const Tensor<T>& fwd_train(const Tensor<T>& x) {
        conv_out = transposed ? deconv3d_fwd(x, w, b, spec) : conv3d_fwd(x, w, b, spec);
        bn_out = batchnorm3d_fwd(conv_out, gamma, beta, bn, true, &saved);
        out = relu_fwd(bn_out);
        return out;
    }

    Tensor<T> bwd(const Tensor<T>& x_in, const Tensor<T>& gy) {
        Tensor<T> g_bn = relu_bwd(bn_out, gy);
        Tensor<T> g_conv;
        batchnorm3d_bwd(conv_out, gamma, saved, g_bn, &g_conv, &ggamma, &gbeta);
        Tensor<T> gx;
        if (transposed)
            deconv3d_bwd(x_in, w, spec, g_conv, &gx, &gw, &gb);
        else
            conv3d_bwd(x_in, w, spec, g_conv, &gx, &gw, &gb);
        return gx;
    }

    void drop_cache() {
        conv_out = Tensor<T>();
        bn_out = Tensor<T>();
        out = Tensor<T>();
        saved = BatchNormSaved<T>{};
    }
};

// plain 1x1x1 convolution (class heads, short-skip projections)
template <typename T>
struct PointConv {
    std::string name;
    ConvSpec spec;
    Tensor<T> w, b;
    Tensor<T> gw, gb;
    Tensor<T> out;

    void init(const std::string& n, int64_t cin, int64_t cout, const Rng& root) {
        name = n;
        spec = ConvSpec{cin, cout, 1, 1, 0};
        w = Tensor<T>({cout, cin, 1, 1, 1});
        b = Tensor<T>({cout});
        const double stddev = std::sqrt(2.0 / static_cast<double>(cin));
        Rng r = root.stream(fnv1a(n));
        for (int64_t i = 0; i < w.count(); ++i)
            w[i] = static_cast<T>(r.next_normal() * stddev);
    }

    Tensor<T> run(const Tensor<T>& x) { return conv3d_fwd(x, w, b, spec); }

    const Tensor<T>& fwd_train(const Tensor<T>& x) {
        out = conv3d_fwd(x, w, b, spec);
        return out;
    }

    Tensor<T> bwd(const Tensor<T>& x_in, const Tensor<T>& gy) {
        Tensor<T> gx;
        conv3d_bwd(x_in, w, spec, gy, &gx, &gw, &gb);
        return gx;
    }

    void drop_cache() { out = Tensor<T>(); }
};

} // namespace

template <typename T>
struct ResDsnNet<T>::Impl {
    NetworkConfig cfg;

    Block<T> enc_a[4], enc_b[4];
    PointConv<T> enc_proj[4];
    bool proj_used[4] = {false, false, false, false};
    Block<T> dec_up[3], dec_a[3], dec_b[3];
    PointConv<T> main_head;
    Block<T> aux1_up, aux2_up1, aux2_up2;
    PointConv<T> aux1_head, aux2_head;

    // train cache
    bool cached = false;
    Tensor<T> input;
    MaxPoolResult<T> pools[3];
    Tensor<T> enc_short[4]; // only filled when short skips are on
    Tensor<T> merged[3];    // only filled when long skips are on
    Tensor<T> dec_short[3];

    int64_t in_channels(int s) const { return s == 0 ? 1 : cfg.stage_channels[s - 1]; }

    const Tensor<T>& stage_input(int s) const { return s == 0 ? input : pools[s - 1].out; }

    const Tensor<T>& enc_out(int s) const {
        return cfg.short_residual == Residual::sum ? enc_short[s] : enc_b[s].out;
    }
    const Tensor<T>& dec_conv_in(int i) const {
        return cfg.long_residual == Residual::sum ? merged[i] : dec_up[i].out;
    }
    const Tensor<T>& dec_out(int i) const {
        return cfg.short_residual == Residual::sum ? dec_short[i] : dec_b[i].out;
    }
    const Tensor<T>& dec_in(int i) const { return i == 0 ? enc_out(3) : dec_out(i - 1); }

    void drop_cache() {
        cached = false;
        input = Tensor<T>();
        for (auto& p : pools) p = MaxPoolResult<T>{};
        for (auto& t : enc_short) t = Tensor<T>();
        for (auto& t : merged) t = Tensor<T>();
        for (auto& t : dec_short) t = Tensor<T>();
        for (auto& blk : enc_a) blk.drop_cache();
        for (auto& blk : enc_b) blk.drop_cache();
        for (auto& p : enc_proj) p.drop_cache();
        for (auto& blk : dec_up) blk.drop_cache();
        for (auto& blk : dec_a) blk.drop_cache();
        for (auto& blk : dec_b) blk.drop_cache();
        main_head.drop_cache();
        aux1_up.drop_cache();
        aux2_up1.drop_cache();
        aux2_up2.drop_cache();
        aux1_head.drop_cache();
        aux2_head.drop_cache();
    }
};

template <typename T>
ResDsnNet<T>::ResDsnNet(const NetworkConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    impl_ = std::make_shared<Impl>();
    impl_->cfg = cfg;
    Rng rng(seed);
    const auto& C = cfg.stage_channels;

    for (int s = 0; s < 4; ++s) {
        const std::string base = "enc" + std::to_string(s + 1);
        impl_->enc_a[s].init(base + ".a", false, impl_->in_channels(s), C[s], 3, 1, 1, rng);
        impl_->enc_b[s].init(base + ".b", false, C[s], C[s], 3, 1, 1, rng);
        if (cfg.short_residual == Residual::sum && impl_->in_channels(s) != C[s]) {
            impl_->enc_proj[s].init(base + ".proj", impl_->in_channels(s), C[s], rng);
            impl_->proj_used[s] = true;
        }
    }
    for (int i = 0; i < 3; ++i) {
        const std::string base = "dec" + std::to_string(3 - i);
        const int64_t cin = C[3 - i], cout = C[2 - i];
        impl_->dec_up[i].init(base + ".up", true, cin, cout, 4, 2, 1, rng);
        impl_->dec_a[i].init(base + ".a", false, cout, cout, 3, 1, 1, rng);
        impl_->dec_b[i].init(base + ".b", false, cout, cout, 3, 1, 1, rng);
    }
    impl_->main_head.init("main.head", C[0], cfg.num_classes, rng);
    if (cfg.deep_supervision) {
        impl_->aux1_up.init("aux1.up", true, C[1], C[0], 4, 2, 1, rng);
        impl_->aux1_head.init("aux1.head", C[0], cfg.num_classes, rng);
        impl_->aux2_up1.init("aux2.up1", true, C[2], C[1], 4, 2, 1, rng);
        impl_->aux2_up2.init("aux2.up2", true, C[1], C[0], 4, 2, 1, rng);
        impl_->aux2_head.init("aux2.head", C[0], cfg.num_classes, rng);
    }
}

template <typename T>
NetworkOutputs<T> ResDsnNet<T>::forward(const Tensor<T>& x, bool train) {
    Impl& m = *impl_;
    if (x.rank() != 5 || x.dim(1) != 1)
        throw std::invalid_argument("forward: expected [B][1][Z][Y][X] input");
    if (x.dim(4) != cfg_.input_size[0] || x.dim(3) != cfg_.input_size[1] ||
        x.dim(2) != cfg_.input_size[2])
        throw std::invalid_argument("forward: input spatial size != config.input_size");

    const bool short_sum = cfg_.short_residual == Residual::sum;
    const bool long_sum = cfg_.long_residual == Residual::sum;
    NetworkOutputs<T> out;

    if (!train) {
        m.drop_cache();
        Tensor<T> eo[4];
        Tensor<T> pool_local;
        const Tensor<T>* cur = &x;
        for (int s = 0; s < 4; ++s) {
            Tensor<T> bout = m.enc_b[s].run(m.enc_a[s].run(*cur));
            if (short_sum) {
                eo[s] = m.proj_used[s] ? residual_add(bout, m.enc_proj[s].run(*cur))
                                       : residual_add(bout, *cur);
            } else {
                eo[s] = std::move(bout);
            }
            if (s < 3) {
                pool_local = maxpool3d_fwd(eo[s]).out;
                cur = &pool_local;
            }
        }
        Tensor<T> d = eo[3];
        for (int i = 0; i < 3; ++i) {
            Tensor<T> u = m.dec_up[i].run(d);
            Tensor<T> mg = long_sum ? residual_add(u, eo[2 - i]) : std::move(u);
            Tensor<T> db = m.dec_b[i].run(m.dec_a[i].run(mg));
            d = short_sum ? residual_add(db, mg) : std::move(db);
        }
        out.main_logits = m.main_head.run(d);
        if (cfg_.deep_supervision) {
            out.aux_logits.push_back(m.aux1_head.run(m.aux1_up.run(eo[1])));
            out.aux_logits.push_back(
                m.aux2_head.run(m.aux2_up2.run(m.aux2_up1.run(eo[2]))));
        }
        return out;
    }

    // train path; caches everything backward() needs
    m.drop_cache();
    m.cached = true;
    m.input = x;
    for (int s = 0; s < 4; ++s) {
        const Tensor<T>& sin = m.stage_input(s);
        const Tensor<T>& bout = m.enc_b[s].fwd_train(m.enc_a[s].fwd_train(sin));
        if (short_sum) {
            m.enc_short[s] = m.proj_used[s]
                                 ? residual_add(bout, m.enc_proj[s].fwd_train(sin))
                                 : residual_add(bout, sin);
        }
        if (s < 3) m.pools[s] = maxpool3d_fwd(m.enc_out(s));
    }
    for (int i = 0; i < 3; ++i) {
        const Tensor<T>& u = m.dec_up[i].fwd_train(m.dec_in(i));
        if (long_sum) m.merged[i] = residual_add(u, m.enc_out(2 - i));
        const Tensor<T>& db = m.dec_b[i].fwd_train(m.dec_a[i].fwd_train(m.dec_conv_in(i)));
        if (short_sum) m.dec_short[i] = residual_add(db, m.dec_conv_in(i));
    }
    out.main_logits = m.main_head.fwd_train(m.dec_out(2));
    if (cfg_.deep_supervision) {
        out.aux_logits.push_back(m.aux1_head.fwd_train(m.aux1_up.fwd_train(m.enc_out(1))));
        out.aux_logits.push_back(m.aux2_head.fwd_train(
            m.aux2_up2.fwd_train(m.aux2_up1.fwd_train(m.enc_out(2)))));
    }
    return out;
}

template <typename T>
void ResDsnNet<T>::backward(const Tensor<T>& gmain, const std::vector<Tensor<T>>& gaux) {
    Impl& m = *impl_;
    if (!m.cached) throw std::logic_error("backward: no cached train-mode forward");
    const bool short_sum = cfg_.short_residual == Residual::sum;
    const bool long_sum = cfg_.long_residual == Residual::sum;
    if (cfg_.deep_supervision && gaux.size() != 2)
        throw std::invalid_argument("backward: expected 2 aux gradients");

    Tensor<T> genc[4];
    for (int s = 0; s < 4; ++s) genc[s] = Tensor<T>(m.enc_out(s).shape());

    // main head and decoder
    Tensor<T> gd = m.main_head.bwd(m.dec_out(2), gmain);
    for (int i = 2; i >= 0; --i) {
        Tensor<T> g_db = m.dec_b[i].bwd(m.dec_a[i].out, gd);
        Tensor<T> gm = m.dec_a[i].bwd(m.dec_conv_in(i), g_db);
        if (short_sum) accumulate(gm, gd); // identity skip over the two convs
        if (long_sum) accumulate(genc[2 - i], gm);
        gd = m.dec_up[i].bwd(m.dec_in(i), gm);
    }
    accumulate(genc[3], gd);

    // aux branches
    if (cfg_.deep_supervision) {
        Tensor<T> g1 = m.aux1_head.bwd(m.aux1_up.out, gaux[0]);
        Tensor<T> ge1 = m.aux1_up.bwd(m.enc_out(1), g1);
        accumulate(genc[1], ge1);
        Tensor<T> g2 = m.aux2_head.bwd(m.aux2_up2.out, gaux[1]);
        Tensor<T> gu = m.aux2_up2.bwd(m.aux2_up1.out, g2);
        Tensor<T> ge2 = m.aux2_up1.bwd(m.enc_out(2), gu);
        accumulate(genc[2], ge2);
    }

    // encoder, deepest stage first
    for (int s = 3; s >= 0; --s) {
        Tensor<T> g_b = m.enc_b[s].bwd(m.enc_a[s].out, genc[s]);
        Tensor<T> g_in = m.enc_a[s].bwd(m.stage_input(s), g_b);
        if (short_sum) {
            if (m.proj_used[s]) {
                Tensor<T> gp = m.enc_proj[s].bwd(m.stage_input(s), genc[s]);
                accumulate(g_in, gp);
            } else {
                accumulate(g_in, genc[s]);
            }
        }
        if (s > 0) {
            Tensor<T> gp = maxpool3d_bwd(m.pools[s - 1], g_in, m.enc_out(s - 1).shape());
            accumulate(genc[s - 1], gp);
        }
    }
}

template <typename T>
std::vector<ParamRef<T>> ResDsnNet<T>::params() {
    Impl& m = *impl_;
    std::vector<ParamRef<T>> out;
    auto add_block = [&](Block<T>& blk) {
        out.push_back({blk.name + ".conv.w", &blk.w, &blk.gw, true});
        out.push_back({blk.name + ".conv.b", &blk.b, &blk.gb, true});
        out.push_back({blk.name + ".bn.gamma", &blk.gamma, &blk.ggamma, false});
        out.push_back({blk.name + ".bn.beta", &blk.beta, &blk.gbeta, false});
    };
    auto add_point = [&](PointConv<T>& p) {
        out.push_back({p.name + ".w", &p.w, &p.gw, true});
        out.push_back({p.name + ".b", &p.b, &p.gb, true});
    };
    for (int s = 0; s < 4; ++s) {
        add_block(m.enc_a[s]);
        add_block(m.enc_b[s]);
        if (m.proj_used[s]) add_point(m.enc_proj[s]);
    }
    for (int i = 0; i < 3; ++i) {
        add_block(m.dec_up[i]);
        add_block(m.dec_a[i]);
        add_block(m.dec_b[i]);
    }
    add_point(m.main_head);
    if (cfg_.deep_supervision) {
        add_block(m.aux1_up);
        add_point(m.aux1_head);
        add_block(m.aux2_up1);
        add_block(m.aux2_up2);
        add_point(m.aux2_head);
    }
    return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> ResDsnNet<T>::state_tensors() {
    Impl& m = *impl_;
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (auto& p : params()) out.emplace_back(p.name, p.value);
    auto add_bn = [&](Block<T>& blk) {
        out.emplace_back(blk.name + ".bn.running_mean", &blk.bn.running_mean);
        out.emplace_back(blk.name + ".bn.running_var", &blk.bn.running_var);
    };
    for (int s = 0; s < 4; ++s) {
        add_bn(m.enc_a[s]);
        add_bn(m.enc_b[s]);
    }
    for (int i = 0; i < 3; ++i) {
        add_bn(m.dec_up[i]);
        add_bn(m.dec_a[i]);
        add_bn(m.dec_b[i]);
    }
    if (cfg_.deep_supervision) {
        add_bn(m.aux1_up);
        add_bn(m.aux2_up1);
        add_bn(m.aux2_up2);
    }
    return out;
}

template <typename T>
int64_t ResDsnNet<T>::param_count() {
    int64_t n = 0;
    for (auto& p : params()) n += p.value->count();
    return n;
}

template <typename T>
double ResDsnNet<T>::l2_norm_sq() {
    double s = 0.0;
    for (auto& p : params()) {
        if (!p.decay) continue;
        for (int64_t i = 0; i < p.value->count(); ++i) {
            const double v = static_cast<double>((*p.value)[i]);
            s += v * v;
        }
    }
    return s;
}

template <typename T>
LossBreakdown loss_overall(const NetworkOutputs<T>& outputs, const Tensor<T>& labels,
                           const NetworkConfig& cfg, Tensor<T>* gmain,
                           std::vector<Tensor<T>>* gaux) {
    LossBreakdown parts;
    XentResult<T> main = softmax_xent(outputs.main_logits, labels);
    parts.main = main.loss;
    parts.total = main.loss;
    if (gmain) *gmain = std::move(main.grad);
    if (gaux) gaux->clear();
    const double xi[2] = {cfg.aux_weight1, cfg.aux_weight2};
    for (size_t d = 0; d < outputs.aux_logits.size(); ++d) {
        XentResult<T> aux = softmax_xent(outputs.aux_logits[d], labels);
        (d == 0 ? parts.aux1 : parts.aux2) = aux.loss;
        parts.total += xi[d] * aux.loss;
        if (gaux) {
            Tensor<T>& g = aux.grad;
            const T s = static_cast<T>(xi[d]);
            for (int64_t i = 0; i < g.count(); ++i) g[i] = s * g[i];
            gaux->push_back(std::move(g));
        }
    }
    return parts;
}

template <typename T>
Tensor<T> predict_prob(ResDsnNet<T>& net, const Tensor<T>& x) {
    NetworkOutputs<T> out = net.forward(x, false);
    return softmax_fg_prob(out.main_logits);
}

// ------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[4] = {'R', 'D', 'S', 'N'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: unexpected end of file");
    return v;
}

} // namespace

void save_checkpoint(ResDsnNet<float>& net, const std::string& path, int64_t iteration,
                     uint64_t seed) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    write_pod(out, kVersion);

    auto tensors = net.state_tensors();
    json meta;
    meta["config"] = json::parse(net.config().to_json());
    meta["iteration"] = iteration;
    meta["seed"] = seed;
    meta["tensor_count"] = tensors.size();
    const std::string mtext = meta.dump();
    write_pod(out, static_cast<uint64_t>(mtext.size()));
    out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));

    for (auto& [name, t] : tensors) {
        write_pod(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(out, static_cast<uint32_t>(t->rank()));
        for (size_t i = 0; i < t->rank(); ++i)
            write_pod(out, static_cast<uint64_t>(t->dim(i)));
        out.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<std::streamsize>(t->count() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("short write on checkpoint: " + path);
}

namespace {

struct RawCheckpoint {
    CheckpointInfo info;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

RawCheckpoint read_checkpoint(const std::string& path, bool with_tensors) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    const uint32_t version = read_pod<uint32_t>(in);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version in " + path);
    const uint64_t mlen = read_pod<uint64_t>(in);
    std::string mtext(mlen, '\0');
    in.read(mtext.data(), static_cast<std::streamsize>(mlen));
    if (!in) throw std::runtime_error("checkpoint: truncated metadata in " + path);
    json meta = json::parse(mtext);

    RawCheckpoint raw;
    raw.info.config = NetworkConfig::from_json(meta.at("config").dump());
    raw.info.iteration = meta.at("iteration").get<int64_t>();
    raw.info.seed = meta.at("seed").get<uint64_t>();
    if (!with_tensors) return raw;

    const size_t count = meta.at("tensor_count").get<size_t>();
    raw.tensors.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        const uint32_t nlen = read_pod<uint32_t>(in);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        if (!in) throw std::runtime_error("checkpoint: truncated tensor name");
        const uint32_t rank = read_pod<uint32_t>(in);
        std::vector<int64_t> shape(rank);
        for (uint32_t r = 0; r < rank; ++r)
            shape[r] = static_cast<int64_t>(read_pod<uint64_t>(in));
        Tensor<float> t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.count() * sizeof(float)));
        if (!in) throw std::runtime_error("checkpoint: truncated tensor " + name);
        raw.tensors.emplace_back(std::move(name), std::move(t));
    }
    return raw;
}

} // namespace

CheckpointInfo peek_checkpoint(const std::string& path) {
    return read_checkpoint(path, false).info;
}

std::pair<ResDsnNet<float>, CheckpointInfo> load_checkpoint(const std::string& path) {
    RawCheckpoint raw = read_checkpoint(path, true);
    ResDsnNet<float> net(raw.info.config, raw.info.seed);
    auto tensors = net.state_tensors();
    if (tensors.size() != raw.tensors.size())
        throw std::runtime_error("checkpoint tensor count mismatch in " + path);
    for (size_t i = 0; i < tensors.size(); ++i) {
        if (tensors[i].first != raw.tensors[i].first)
            throw std::runtime_error("checkpoint tensor name mismatch: expected " +
                                     tensors[i].first + ", found " + raw.tensors[i].first);
        if (tensors[i].second->shape() != raw.tensors[i].second.shape())
            throw std::runtime_error("checkpoint tensor shape mismatch: " + tensors[i].first);
        *tensors[i].second = std::move(raw.tensors[i].second);
    }
    return {net, raw.info};
}

template class ResDsnNet<float>;
template class ResDsnNet<double>;
template LossBreakdown loss_overall<float>(const NetworkOutputs<float>&, const Tensor<float>&,
                                           const NetworkConfig&, Tensor<float>*,
                                           std::vector<Tensor<float>>*);
template LossBreakdown loss_overall<double>(const NetworkOutputs<double>&,
                                            const Tensor<double>&, const NetworkConfig&,
                                            Tensor<double>*, std::vector<Tensor<double>>*);
template Tensor<float> predict_prob<float>(ResDsnNet<float>&, const Tensor<float>&);
template Tensor<double> predict_prob<double>(ResDsnNet<double>&, const Tensor<double>&);

} // namespace voxseg
