#include "voxseg/layers.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

#include "voxseg/kernels.hpp"
#include "voxseg/kernels_ref.hpp"
#include "voxseg/thread_pool.hpp"

namespace voxseg {

using kernels::ConvGeom;

namespace {

// Kernel shims: float goes through the dispatched table (scalar or AVX2),
// double always uses the reference templates (gradient-check precision mode).
template <typename T>
struct K;

template <>
struct K<float> {
    static void conv_fwd(const ConvGeom& g, const float* x, const float* w,
                         const float* b, float* out, int64_t lo, int64_t hi) {
        kernels::active_ops().conv_fwd(g, x, w, b, out, lo, hi);
    }
    static void conv_bwd_w(const ConvGeom& g, const float* x, const float* gout,
                           float* gw, int64_t lo, int64_t hi) {
        kernels::active_ops().conv_bwd_w(g, x, gout, gw, lo, hi);
    }
    static void conv_bwd_in(const ConvGeom& g, const float* gout, const float* w,
                            float* gin, int64_t lo, int64_t hi) {
        kernels::conv_bwd_in_ref_f32(g, gout, w, gin, lo, hi);
    }
    static void dconv_fwd(const ConvGeom& g, const float* x, const float* w,
                          const float* b, float* out, int64_t lo, int64_t hi) {
        kernels::active_ops().dconv_fwd(g, x, w, b, out, lo, hi);
    }
    static void dconv_bwd_in(const ConvGeom& g, const float* gd, const float* w,
                             float* gin, int64_t lo, int64_t hi) {
        kernels::active_ops().dconv_bwd_in(g, gd, w, gin, lo, hi);
    }
    static void dconv_bwd_w(const ConvGeom& g, const float* x, const float* gd,
                            float* gw, int64_t lo, int64_t hi) {
        kernels::active_ops().dconv_bwd_w(g, x, gd, gw, lo, hi);
    }
    static void add(float* y, const float* a, const float* b, int64_t lo, int64_t hi) {
        kernels::active_ops().add(y, a, b, lo, hi);
    }
    static void acc(float* y, const float* x, int64_t lo, int64_t hi) {
        kernels::active_ops().acc(y, x, lo, hi);
    }
    static void relu_f(float* y, const float* x, int64_t lo, int64_t hi) {
        kernels::active_ops().relu_fwd(y, x, lo, hi);
    }
    static void relu_b(float* gx, const float* x, const float* gy, int64_t lo, int64_t hi) {
        kernels::active_ops().relu_bwd(gx, x, gy, lo, hi);
    }
    static void affine(float* y, const float* x, float a, float b, int64_t lo, int64_t hi) {
        kernels::active_ops().affine(y, x, a, b, lo, hi);
    }
    static void affine2(float* gx, const float* gy, const float* x, float A, float B,
                        float C, int64_t lo, int64_t hi) {
        kernels::active_ops().affine2(gx, gy, x, A, B, C, lo, hi);
    }
    static float sum_blk(const float* x, int64_t n) {
        return kernels::active_ops().sum_blk(x, n);
    }
    static float dot_blk(const float* x, const float* y, int64_t n) {
        return kernels::active_ops().dot_blk(x, y, n);
    }
    static void deint(float* d, const float* s, int64_t rows, int64_t len) {
        kernels::active_ops().deinterleave_rows(d, s, rows, len);
    }
};

template <>
struct K<double> {
    static void conv_fwd(const ConvGeom& g, const double* x, const double* w,
                         const double* b, double* out, int64_t lo, int64_t hi) {
        kernels::conv_fwd_ref<double>(g, x, w, b, out, lo, hi);
    }
    static void conv_bwd_w(const ConvGeom& g, const double* x, const double* gout,
                           double* gw, int64_t lo, int64_t hi) {
        kernels::conv_bwd_w_ref<double>(g, x, gout, gw, lo, hi);
    }
    static void conv_bwd_in(const ConvGeom& g, const double* gout, const double* w,
                            double* gin, int64_t lo, int64_t hi) {
        kernels::conv_bwd_in_ref<double>(g, gout, w, gin, lo, hi);
    }
    static void dconv_fwd(const ConvGeom& g, const double* x, const double* w,
                          const double* b, double* out, int64_t lo, int64_t hi) {
        kernels::dconv_fwd_ref<double>(g, x, w, b, out, lo, hi);
    }
    static void dconv_bwd_in(const ConvGeom& g, const double* gd, const double* w,
                             double* gin, int64_t lo, int64_t hi) {
        kernels::dconv_bwd_in_ref<double>(g, gd, w, gin, lo, hi);
    }
    static void dconv_bwd_w(const ConvGeom& g, const double* x, const double* gd,
                            double* gw, int64_t lo, int64_t hi) {
        kernels::dconv_bwd_w_ref<double>(g, x, gd, gw, lo, hi);
    }
    static void add(double* y, const double* a, const double* b, int64_t lo, int64_t hi) {
        kernels::add_ref<double>(y, a, b, lo, hi);
    }
    static void acc(double* y, const double* x, int64_t lo, int64_t hi) {
        kernels::acc_ref<double>(y, x, lo, hi);
    }
    static void relu_f(double* y, const double* x, int64_t lo, int64_t hi) {
        kernels::relu_fwd_ref<double>(y, x, lo, hi);
    }
    static void relu_b(double* gx, const double* x, const double* gy, int64_t lo, int64_t hi) {
        kernels::relu_bwd_ref<double>(gx, x, gy, lo, hi);
    }
    static void affine(double* y, const double* x, double a, double b, int64_t lo, int64_t hi) {
        kernels::affine_ref<double>(y, x, a, b, lo, hi);
    }
    static void affine2(double* gx, const double* gy, const double* x, double A, double B,
                        double C, int64_t lo, int64_t hi) {
        kernels::affine2_ref<double>(gx, gy, x, A, B, C, lo, hi);
    }
    static double sum_blk(const double* x, int64_t n) {
        return kernels::sum_blk_ref<double>(x, n);
    }
    static double dot_blk(const double* x, const double* y, int64_t n) {
        return kernels::dot_blk_ref<double>(x, y, n);
    }
    static void deint(double* d, const double* s, int64_t rows, int64_t len) {
        kernels::deinterleave_rows_ref<double>(d, s, rows, len);
    }
};

struct Shape5 {
    int64_t b, c, z, y, x;
    int64_t spatial() const { return z * y * x; }
};

Shape5 as5(const std::vector<int64_t>& s, const char* what) {
    if (s.size() != 5) throw std::invalid_argument(std::string(what) + ": expected a 5-d tensor");
    return {s[0], s[1], s[2], s[3], s[4]};
}

template <typename T>
ConvGeom conv_geom(const Tensor<T>& x, const ConvSpec& spec) {
    const Shape5 s = as5(x.shape(), "conv3d");
    if (s.c != spec.in_channels) throw std::invalid_argument("conv3d: input channel mismatch");
    if (spec.kernel < 1 || spec.stride < 1 || spec.pad < 0)
        throw std::invalid_argument("conv3d: invalid spec");
    ConvGeom g;
    g.batch = s.b;
    g.cin = spec.in_channels;
    g.cout = spec.out_channels;
    g.inx = s.x; g.iny = s.y; g.inz = s.z;
    g.k = spec.kernel; g.stride = spec.stride; g.pad = spec.pad;
    auto oext = [&](int64_t in) {
        const int64_t num = in + 2 * spec.pad - spec.kernel;
        if (num < 0 || num % spec.stride)
            throw std::invalid_argument("conv3d: non-integral output extent");
        return num / spec.stride + 1;
    };
    g.outx = oext(s.x); g.outy = oext(s.y); g.outz = oext(s.z);
    return g;
}

template <typename T>
ConvGeom deconv_geom(const Tensor<T>& x, const ConvSpec& spec) {
    const Shape5 s = as5(x.shape(), "deconv3d");
    if (s.c != spec.in_channels) throw std::invalid_argument("deconv3d: input channel mismatch");
    ConvGeom g;
    g.batch = s.b;
    g.cin = spec.in_channels;
    g.cout = spec.out_channels;
    g.inx = s.x; g.iny = s.y; g.inz = s.z;
    g.k = spec.kernel; g.stride = spec.stride; g.pad = spec.pad;
    auto oext = [&](int64_t in) { return (in - 1) * spec.stride - 2 * spec.pad + spec.kernel; };
    g.outx = oext(s.x); g.outy = oext(s.y); g.outz = oext(s.z);
    if (g.outx < 1 || g.outy < 1 || g.outz < 1)
        throw std::invalid_argument("deconv3d: empty output");
    return g;
}

template <typename T>
void check_conv_params(const ConvGeom& g, const Tensor<T>& w, const Tensor<T>& b,
                       bool transposed) {
    const int64_t kk = g.k * g.k * g.k;
    const int64_t want = (transposed ? g.cin * g.cout : g.cout * g.cin) * kk;
    if (w.count() != want) throw std::invalid_argument("conv3d: weight shape mismatch");
    if (b.count() != g.cout) throw std::invalid_argument("conv3d: bias shape mismatch");
}

} // namespace

// ---------------------------------------------------------------- conv3d

template <typename T>
Tensor<T> conv3d_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                     const ConvSpec& spec) {
    const ConvGeom g = conv_geom(x, spec);
    check_conv_params(g, w, b, false);
    Tensor<T> out({g.batch, g.cout, g.outz, g.outy, g.outx});
    ThreadPool::instance().parallel_for(g.batch * g.cout, [&](int64_t lo, int64_t hi) {
        K<T>::conv_fwd(g, x.data(), w.data(), b.data(), out.data(), lo, hi);
    });
    return out;
}

template <typename T>
void conv3d_bwd(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec,
                const Tensor<T>& gout, Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb) {
    const ConvGeom g = conv_geom(x, spec);
    gout.require_shape({g.batch, g.cout, g.outz, g.outy, g.outx}, "conv3d_bwd");
    const int64_t kk = g.k * g.k * g.k;

    if (gw) {
        *gw = Tensor<T>({g.cout, g.cin, g.k, g.k, g.k});
        ThreadPool::instance().parallel_for(g.cout * g.cin, [&](int64_t lo, int64_t hi) {
            K<T>::conv_bwd_w(g, x.data(), gout.data(), gw->data(), lo, hi);
        });
    }
    if (gb) {
        *gb = Tensor<T>({g.cout});
        const int64_t ovox = g.out_voxels();
        ThreadPool::instance().parallel_for(g.cout, [&](int64_t lo, int64_t hi) {
            for (int64_t oc = lo; oc < hi; ++oc) {
                T s = T(0);
                for (int64_t bb = 0; bb < g.batch; ++bb)
                    s += K<T>::sum_blk(gout.data() + (bb * g.cout + oc) * ovox, ovox);
                (*gb)[oc] = s;
            }
        });
    }
    if (gx) {
        *gx = Tensor<T>({g.batch, g.cin, g.inz, g.iny, g.inx});
        if (g.stride == 1) {
            // correlation with the flipped, transposed kernel
            Tensor<T> wt({g.cin, g.cout, g.k, g.k, g.k});
            for (int64_t oc = 0; oc < g.cout; ++oc)
                for (int64_t ci = 0; ci < g.cin; ++ci)
                    for (int64_t t = 0; t < kk; ++t)
                        wt[(ci * g.cout + oc) * kk + t] = w[(oc * g.cin + ci) * kk + (kk - 1 - t)];
            ConvGeom gb2 = g;
            gb2.cin = g.cout; gb2.cout = g.cin;
            gb2.inx = g.outx; gb2.iny = g.outy; gb2.inz = g.outz;
            gb2.outx = g.inx; gb2.outy = g.iny; gb2.outz = g.inz;
            gb2.pad = g.k - 1 - g.pad;
            ThreadPool::instance().parallel_for(g.batch * g.cin, [&](int64_t lo, int64_t hi) {
                K<T>::conv_fwd(gb2, gout.data(), wt.data(), nullptr, gx->data(), lo, hi);
            });
        } else {
            ThreadPool::instance().parallel_for(g.batch * g.cin, [&](int64_t lo, int64_t hi) {
                K<T>::conv_bwd_in(g, gout.data(), w.data(), gx->data(), lo, hi);
            });
        }
    }
}

// -------------------------------------------------------------- deconv3d

template <typename T>
Tensor<T> deconv3d_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                       const ConvSpec& spec) {
    const ConvGeom g = deconv_geom(x, spec);
    check_conv_params(g, w, b, true);
    Tensor<T> out({g.batch, g.cout, g.outz, g.outy, g.outx});
    ThreadPool::instance().parallel_for(g.batch * g.cout, [&](int64_t lo, int64_t hi) {
        K<T>::dconv_fwd(g, x.data(), w.data(), b.data(), out.data(), lo, hi);
    });
    return out;
}

template <typename T>
void deconv3d_bwd(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec,
                  const Tensor<T>& gout, Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb) {
    const ConvGeom g = deconv_geom(x, spec);
    gout.require_shape({g.batch, g.cout, g.outz, g.outy, g.outx}, "deconv3d_bwd");

    if (gb) {
        *gb = Tensor<T>({g.cout});
        const int64_t ovox = g.out_voxels();
        ThreadPool::instance().parallel_for(g.cout, [&](int64_t lo, int64_t hi) {
            for (int64_t oc = lo; oc < hi; ++oc) {
                T s = T(0);
                for (int64_t bb = 0; bb < g.batch; ++bb)
                    s += K<T>::sum_blk(gout.data() + (bb * g.cout + oc) * ovox, ovox);
                (*gb)[oc] = s;
            }
        });
    }

    const bool fast = g.k == 4 && g.stride == 2 && g.pad == 1;
    Tensor<T> gout_d;
    const Tensor<T>* gref = &gout;
    if ((gx || gw) && fast) {
        gout_d = Tensor<T>(gout.shape());
        const int64_t rows = g.batch * g.cout * g.outz * g.outy;
        ThreadPool::instance().parallel_for(rows, [&](int64_t lo, int64_t hi) {
            K<T>::deint(gout_d.data() + lo * g.outx, gout.data() + lo * g.outx,
                        hi - lo, g.outx);
        });
        gref = &gout_d;
    }

    if (gx) {
        *gx = Tensor<T>({g.batch, g.cin, g.inz, g.iny, g.inx});
        if (fast) {
            ThreadPool::instance().parallel_for(g.batch * g.cin, [&](int64_t lo, int64_t hi) {
                K<T>::dconv_bwd_in(g, gref->data(), w.data(), gx->data(), lo, hi);
            });
        } else {
            // gin[ci][i] = sum_oc sum_k w[ci][oc][k] * gout[oc][i*s - p + k]
            // == correlation with the untransposed weight, handled by the
            // generic conv gather with swapped roles.
            kernels::ConvGeom cg;
            cg.batch = g.batch;
            cg.cin = g.cout; cg.cout = g.cin;
            cg.inx = g.outx; cg.iny = g.outy; cg.inz = g.outz;
            cg.outx = g.inx; cg.outy = g.iny; cg.outz = g.inz;
            cg.k = g.k; cg.stride = g.stride; cg.pad = g.pad;
            ThreadPool::instance().parallel_for(g.batch * g.cin, [&](int64_t lo, int64_t hi) {
                K<T>::conv_fwd(cg, gout.data(), w.data(), nullptr, gx->data(), lo, hi);
            });
        }
    }
    if (gw) {
        *gw = Tensor<T>({g.cin, g.cout, g.k, g.k, g.k});
        if (fast) {
            ThreadPool::instance().parallel_for(g.cin * g.cout, [&](int64_t lo, int64_t hi) {
                K<T>::dconv_bwd_w(g, x.data(), gref->data(), gw->data(), lo, hi);
            });
        } else {
            // generic scalar path for non-network shapes
            const int64_t kk = g.k * g.k * g.k;
            const int64_t ivox = g.in_voxels(), ovox = g.out_voxels();
            ThreadPool::instance().parallel_for(g.cin * g.cout, [&](int64_t lo, int64_t hi) {
                for (int64_t job = lo; job < hi; ++job) {
                    const int64_t ci = job / g.cout, oc = job % g.cout;
                    for (int64_t kz = 0; kz < g.k; ++kz)
                        for (int64_t ky = 0; ky < g.k; ++ky)
                            for (int64_t kx = 0; kx < g.k; ++kx) {
                                T acc[32] = {};
                                int64_t lane = 0;
                                for (int64_t bb = 0; bb < g.batch; ++bb) {
                                    const T* xc = x.data() + (bb * g.cin + ci) * ivox;
                                    const T* go = gout.data() + (bb * g.cout + oc) * ovox;
                                    for (int64_t iz = 0; iz < g.inz; ++iz) {
                                        const int64_t oz = iz * g.stride - g.pad + kz;
                                        if (oz < 0 || oz >= g.outz) continue;
                                        for (int64_t iy = 0; iy < g.iny; ++iy) {
                                            const int64_t oy = iy * g.stride - g.pad + ky;
                                            if (oy < 0 || oy >= g.outy) continue;
                                            lane = 0;
                                            for (int64_t ix = 0; ix < g.inx; ++ix) {
                                                const int64_t ox = ix * g.stride - g.pad + kx;
                                                if (ox < 0 || ox >= g.outx) continue;
                                                acc[lane & 31] +=
                                                    xc[(iz * g.iny + iy) * g.inx + ix] *
                                                    go[(oz * g.outy + oy) * g.outx + ox];
                                                ++lane;
                                            }
                                        }
                                    }
                                }
                                (*gw)[job * kk + (kz * g.k + ky) * g.k + kx] =
                                    kernels::detail::tree32(acc);
                            }
                }
            });
        }
    }
}

// -------------------------------------------------------------- maxpool3d

template <typename T>
MaxPoolResult<T> maxpool3d_fwd(const Tensor<T>& x) {
    const Shape5 s = as5(x.shape(), "maxpool3d");
    if (s.x % 2 || s.y % 2 || s.z % 2)
        throw std::invalid_argument("maxpool3d: odd spatial extent");
    const int64_t oz = s.z / 2, oy = s.y / 2, ox = s.x / 2;
    MaxPoolResult<T> res;
    res.out = Tensor<T>({s.b, s.c, oz, oy, ox});
    res.argmax.assign(static_cast<size_t>(res.out.count()), 0);
    const int64_t ivox = s.spatial(), ovox = oz * oy * ox;
    ThreadPool::instance().parallel_for(s.b * s.c, [&](int64_t lo, int64_t hi) {
        for (int64_t slab = lo; slab < hi; ++slab) {
            const T* in = x.data() + slab * ivox;
            T* out = res.out.data() + slab * ovox;
            int64_t* am = res.argmax.data() + slab * ovox;
            for (int64_t z = 0; z < oz; ++z)
                for (int64_t y = 0; y < oy; ++y)
                    for (int64_t xx = 0; xx < ox; ++xx) {
                        T best{};
                        int64_t besti = -1;
                        for (int64_t dz = 0; dz < 2; ++dz)
                            for (int64_t dy = 0; dy < 2; ++dy)
                                for (int64_t dx = 0; dx < 2; ++dx) {
                                    const int64_t idx =
                                        ((2 * z + dz) * s.y + (2 * y + dy)) * s.x + 2 * xx + dx;
                                    if (besti < 0 || in[idx] > best) {
                                        best = in[idx];
                                        besti = idx;
                                    }
                                }
                        out[(z * oy + y) * ox + xx] = best;
                        am[(z * oy + y) * ox + xx] = besti;
                    }
        }
    });
    return res;
}

template <typename T>
Tensor<T> maxpool3d_bwd(const MaxPoolResult<T>& res, const Tensor<T>& gout,
                        const std::vector<int64_t>& in_shape) {
    gout.require_shape(res.out.shape(), "maxpool3d_bwd");
    Tensor<T> gx(in_shape);
    const Shape5 s = as5(in_shape, "maxpool3d_bwd");
    const int64_t ivox = s.spatial();
    const int64_t ovox = res.out.count() / (s.b * s.c);
    ThreadPool::instance().parallel_for(s.b * s.c, [&](int64_t lo, int64_t hi) {
        for (int64_t slab = lo; slab < hi; ++slab) {
            const T* go = gout.data() + slab * ovox;
            const int64_t* am = res.argmax.data() + slab * ovox;
            T* gi = gx.data() + slab * ivox;
            for (int64_t i = 0; i < ovox; ++i) gi[am[i]] += go[i];
        }
    });
    return gx;
}

// ------------------------------------------------------------ batchnorm3d

template <typename T>
Tensor<T> batchnorm3d_fwd(const Tensor<T>& x, const Tensor<T>& gamma,
                          const Tensor<T>& beta, BatchNormState<T>& state,
                          bool train, BatchNormSaved<T>* saved) {
    const Shape5 s = as5(x.shape(), "batchnorm3d");
    if (gamma.count() != s.c || beta.count() != s.c ||
        state.running_mean.count() != s.c || state.running_var.count() != s.c)
        throw std::invalid_argument("batchnorm3d: channel mismatch");
    const int64_t svox = s.spatial();
    const int64_t n = s.b * svox;

    std::vector<T> mean(s.c), inv(s.c);
    if (train) {
        for (int64_t c = 0; c < s.c; ++c) {
            T sum = T(0), sumsq = T(0);
            for (int64_t b = 0; b < s.b; ++b) {
                const T* slab = x.data() + (b * s.c + c) * svox;
                sum += K<T>::sum_blk(slab, svox);
                sumsq += K<T>::dot_blk(slab, slab, svox);
            }
            const T mu = sum / static_cast<T>(n);
            T var = sumsq / static_cast<T>(n) - mu * mu;
            if (var < T(0)) var = T(0);
            mean[c] = mu;
            inv[c] = T(1) / std::sqrt(var + static_cast<T>(kBnEps));
            const T km = static_cast<T>(kBnMomentum);
            state.running_mean[c] = km * state.running_mean[c] + (T(1) - km) * mu;
            state.running_var[c] = km * state.running_var[c] + (T(1) - km) * var;
        }
    } else {
        for (int64_t c = 0; c < s.c; ++c) {
            mean[c] = state.running_mean[c];
            inv[c] = T(1) / std::sqrt(state.running_var[c] + static_cast<T>(kBnEps));
        }
    }
    if (saved) {
        saved->mean = mean;
        saved->inv = inv;
    }

    Tensor<T> out(x.shape());
    ThreadPool::instance().parallel_for(s.b * s.c, [&](int64_t lo, int64_t hi) {
        for (int64_t slab = lo; slab < hi; ++slab) {
            const int64_t c = slab % s.c;
            const T a = gamma[c] * inv[c];
            const T bconst = beta[c] - a * mean[c];
            K<T>::affine(out.data() + slab * svox, x.data() + slab * svox, a, bconst, 0, svox);
        }
    });
    return out;
}

template <typename T>
void batchnorm3d_bwd(const Tensor<T>& x, const Tensor<T>& gamma,
                     const BatchNormSaved<T>& saved, const Tensor<T>& gout,
                     Tensor<T>* gx, Tensor<T>* ggamma, Tensor<T>* gbeta) {
    const Shape5 s = as5(x.shape(), "batchnorm3d_bwd");
    gout.require_shape(x.shape(), "batchnorm3d_bwd");
    const int64_t svox = s.spatial();
    const int64_t n = s.b * svox;

    if (ggamma) *ggamma = Tensor<T>({s.c});
    if (gbeta) *gbeta = Tensor<T>({s.c});
    if (gx) *gx = Tensor<T>(x.shape());

    std::vector<T> s1(s.c), s2(s.c);
    for (int64_t c = 0; c < s.c; ++c) {
        T sum_gy = T(0), dot_gyx = T(0);
        for (int64_t b = 0; b < s.b; ++b) {
            const int64_t off = (b * s.c + c) * svox;
            sum_gy += K<T>::sum_blk(gout.data() + off, svox);
            dot_gyx += K<T>::dot_blk(gout.data() + off, x.data() + off, svox);
        }
        s1[c] = sum_gy;
        s2[c] = saved.inv[c] * (dot_gyx - saved.mean[c] * sum_gy); // sum gy * xhat
        if (ggamma) (*ggamma)[c] = s2[c];
        if (gbeta) (*gbeta)[c] = s1[c];
    }

    if (gx) {
        ThreadPool::instance().parallel_for(s.b * s.c, [&](int64_t lo, int64_t hi) {
            for (int64_t slab = lo; slab < hi; ++slab) {
                const int64_t c = slab % s.c;
                const T A = gamma[c] * saved.inv[c];
                const T D = A * saved.inv[c] * s2[c] / static_cast<T>(n);
                const T C = -D;
                const T B = D * saved.mean[c] - A * s1[c] / static_cast<T>(n);
                K<T>::affine2(gx->data() + slab * svox, gout.data() + slab * svox,
                              x.data() + slab * svox, A, B, C, 0, svox);
            }
        });
    }
}

// --------------------------------------------------------------- pointwise

template <typename T>
Tensor<T> relu_fwd(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    ThreadPool::instance().parallel_for(x.count(), [&](int64_t lo, int64_t hi) {
        K<T>::relu_f(y.data(), x.data(), lo, hi);
    });
    return y;
}

template <typename T>
Tensor<T> relu_bwd(const Tensor<T>& x, const Tensor<T>& gout) {
    gout.require_shape(x.shape(), "relu_bwd");
    Tensor<T> gx(x.shape());
    ThreadPool::instance().parallel_for(x.count(), [&](int64_t lo, int64_t hi) {
        K<T>::relu_b(gx.data(), x.data(), gout.data(), lo, hi);
    });
    return gx;
}

template <typename T>
Tensor<T> residual_add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("residual_add: shape mismatch");
    Tensor<T> y(a.shape());
    ThreadPool::instance().parallel_for(a.count(), [&](int64_t lo, int64_t hi) {
        K<T>::add(y.data(), a.data(), b.data(), lo, hi);
    });
    return y;
}

template <typename T>
void accumulate(Tensor<T>& y, const Tensor<T>& x) {
    if (!y.same_shape(x)) throw std::invalid_argument("accumulate: shape mismatch");
    ThreadPool::instance().parallel_for(y.count(), [&](int64_t lo, int64_t hi) {
        K<T>::acc(y.data(), x.data(), lo, hi);
    });
}

// ------------------------------------------------------------ softmax_xent

template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, const Tensor<T>& labels) {
    const Shape5 s = as5(logits.shape(), "softmax_xent");
    if (s.c != 2) throw std::invalid_argument("softmax_xent: expected 2 channels");
    const int64_t svox = s.spatial();
    if (labels.count() != s.b * svox)
        throw std::invalid_argument("softmax_xent: label count mismatch");

    XentResult<T> res;
    res.grad = Tensor<T>(logits.shape());
    const int64_t n = s.b * svox;
    const T invn = T(1) / static_cast<T>(n);

    std::vector<double> partial(static_cast<size_t>(s.b), 0.0);
    std::atomic<bool> bad_label{false};
    ThreadPool::instance().parallel_for(s.b, [&](int64_t blo, int64_t bhi) {
        for (int64_t b = blo; b < bhi; ++b) {
            const T* l0 = logits.data() + (b * 2 + 0) * svox;
            const T* l1 = logits.data() + (b * 2 + 1) * svox;
            T* g0 = res.grad.data() + (b * 2 + 0) * svox;
            T* g1 = res.grad.data() + (b * 2 + 1) * svox;
            const T* lab = labels.data() + b * svox;
            double acc = 0.0;
            for (int64_t i = 0; i < svox; ++i) {
                const T y = lab[i];
                if (y != T(0) && y != T(1)) {
                    bad_label.store(true, std::memory_order_relaxed);
                    break;
                }
                const T m = l0[i] > l1[i] ? l0[i] : l1[i];
                const T e0 = std::exp(l0[i] - m);
                const T e1 = std::exp(l1[i] - m);
                const T z = e0 + e1;
                const T p1 = e1 / z;
                const T p0 = e0 / z;
                const T ly = y == T(1) ? l1[i] : l0[i];
                acc += static_cast<double>(m) + std::log(static_cast<double>(z)) -
                       static_cast<double>(ly);
                g0[i] = (p0 - (y == T(0) ? T(1) : T(0))) * invn;
                g1[i] = (p1 - (y == T(1) ? T(1) : T(0))) * invn;
            }
            partial[static_cast<size_t>(b)] = acc;
        }
    });
    if (bad_label.load()) throw std::invalid_argument("softmax_xent: label outside {0,1}");
    double total = 0.0;
    for (double p : partial) total += p;
    res.loss = total / static_cast<double>(n);
    return res;
}

template <typename T>
Tensor<T> softmax_fg_prob(const Tensor<T>& logits) {
    const Shape5 s = as5(logits.shape(), "softmax_fg_prob");
    if (s.c != 2) throw std::invalid_argument("softmax_fg_prob: expected 2 channels");
    const int64_t svox = s.spatial();
    Tensor<T> prob({s.b, s.z, s.y, s.x});
    ThreadPool::instance().parallel_for(s.b, [&](int64_t blo, int64_t bhi) {
        for (int64_t b = blo; b < bhi; ++b) {
            const T* l0 = logits.data() + (b * 2 + 0) * svox;
            const T* l1 = logits.data() + (b * 2 + 1) * svox;
            T* p = prob.data() + b * svox;
            for (int64_t i = 0; i < svox; ++i) {
                const T m = l0[i] > l1[i] ? l0[i] : l1[i];
                const T e0 = std::exp(l0[i] - m);
                const T e1 = std::exp(l1[i] - m);
                p[i] = e1 / (e0 + e1);
            }
        }
    });
    return prob;
}

// ----------------------------------------------------- explicit instances

#define VOXSEG_INSTANTIATE_LAYERS(T)                                                      \
    template Tensor<T> conv3d_fwd<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                     const ConvSpec&);                                    \
    template void conv3d_bwd<T>(const Tensor<T>&, const Tensor<T>&, const ConvSpec&,      \
                                const Tensor<T>&, Tensor<T>*, Tensor<T>*, Tensor<T>*);    \
    template Tensor<T> deconv3d_fwd<T>(const Tensor<T>&, const Tensor<T>&,                \
                                       const Tensor<T>&, const ConvSpec&);                \
    template void deconv3d_bwd<T>(const Tensor<T>&, const Tensor<T>&, const ConvSpec&,    \
                                  const Tensor<T>&, Tensor<T>*, Tensor<T>*, Tensor<T>*);  \
    template MaxPoolResult<T> maxpool3d_fwd<T>(const Tensor<T>&);                         \
    template Tensor<T> maxpool3d_bwd<T>(const MaxPoolResult<T>&, const Tensor<T>&,        \
                                        const std::vector<int64_t>&);                     \
    template Tensor<T> batchnorm3d_fwd<T>(const Tensor<T>&, const Tensor<T>&,             \
                                          const Tensor<T>&, BatchNormState<T>&, bool,     \
                                          BatchNormSaved<T>*);                            \
    template void batchnorm3d_bwd<T>(const Tensor<T>&, const Tensor<T>&,                  \
                                     const BatchNormSaved<T>&, const Tensor<T>&,          \
                                     Tensor<T>*, Tensor<T>*, Tensor<T>*);                 \
    template Tensor<T> relu_fwd<T>(const Tensor<T>&);                                     \
    template Tensor<T> relu_bwd<T>(const Tensor<T>&, const Tensor<T>&);                   \
    template Tensor<T> residual_add<T>(const Tensor<T>&, const Tensor<T>&);               \
    template void accumulate<T>(Tensor<T>&, const Tensor<T>&);                            \
    template XentResult<T> softmax_xent<T>(const Tensor<T>&, const Tensor<T>&);           \
    template Tensor<T> softmax_fg_prob<T>(const Tensor<T>&);

VOXSEG_INSTANTIATE_LAYERS(float)
VOXSEG_INSTANTIATE_LAYERS(double)

} // namespace voxseg
