// Scalar reference vs AVX2 equivalence: outputs must match bit for bit on
// random geometries, including awkward row lengths and edge padding.

#include <cstring>

#include "doctest.h"
#include "oracles.hpp"
#include "voxseg/kernels.hpp"
#include "voxseg/kernels_ref.hpp"
#include "voxseg/rng.hpp"

using namespace voxseg;
using kernels::ConvGeom;

namespace {

std::vector<float> random_vec(Rng& rng, int64_t n, double scale = 1.0) {
    std::vector<float> v(static_cast<size_t>(n));
    for (auto& x : v) x = static_cast<float>(rng.next_normal() * scale);
    return v;
}

bool bits_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

ConvGeom conv_geom(int64_t b, int64_t ci, int64_t co, int64_t e, int64_t k, int64_t pad) {
    ConvGeom g;
    g.batch = b;
    g.cin = ci;
    g.cout = co;
    g.inx = g.iny = g.inz = e;
    g.k = k;
    g.stride = 1;
    g.pad = pad;
    g.outx = g.outy = g.outz = e + 2 * pad - k + 1;
    return g;
}

ConvGeom dconv_geom(int64_t b, int64_t ci, int64_t co, int64_t e) {
    ConvGeom g;
    g.batch = b;
    g.cin = ci;
    g.cout = co;
    g.inx = g.iny = g.inz = e;
    g.k = 4;
    g.stride = 2;
    g.pad = 1;
    g.outx = g.outy = g.outz = 2 * e;
    return g;
}

} // namespace

TEST_CASE("conv_fwd matches the naive oracle exactly, both backends") {
    const auto* avx2 = kernels::avx2_ops();
    Rng rng(42);
    for (int it = 0; it < 40; ++it) {
        Rng r = rng.stream(it);
        const int64_t b = 1 + r.next_below(2);
        const int64_t ci = 1 + r.next_below(2);
        const int64_t co = 1 + r.next_below(3);
        const int64_t e = 2 + r.next_below(5); // up to 6^3
        const int64_t k = 1 + 2 * r.next_below(2); // 1 or 3
        const int64_t pad = r.next_below(k); // keeps out extent positive
        if (e + 2 * pad - k + 1 < 1) continue;
        const ConvGeom g = conv_geom(b, ci, co, e, k, pad);

        Tensor<float> x({b, ci, e, e, e}), w({co, ci, k, k, k}), bias({co});
        for (int64_t i = 0; i < x.count(); ++i) x[i] = static_cast<float>(r.next_normal());
        for (int64_t i = 0; i < w.count(); ++i) w[i] = static_cast<float>(r.next_normal());
        for (int64_t i = 0; i < bias.count(); ++i)
            bias[i] = static_cast<float>(r.next_normal());

        Tensor<float> oracle = oracles::conv3d_naive(x, w, bias, k, 1, pad);
        std::vector<float> got(static_cast<size_t>(oracle.count()));

        kernels::scalar_ops().conv_fwd(g, x.data(), w.data(), bias.data(), got.data(), 0,
                                       b * co);
        CHECK(bits_equal(got, oracle.vec()));

        if (avx2) {
            std::vector<float> got2(got.size(), -1.0f);
            avx2->conv_fwd(g, x.data(), w.data(), bias.data(), got2.data(), 0, b * co);
            CHECK(bits_equal(got2, oracle.vec()));
        }
    }
}

TEST_CASE("conv_fwd scalar/AVX2 bitwise equivalence on larger rows") {
    const auto* avx2 = kernels::avx2_ops();
    if (!avx2) return;
    Rng rng(7);
    for (int it = 0; it < 12; ++it) {
        Rng r = rng.stream(it);
        ConvGeom g;
        g.batch = 1;
        g.cin = 1 + r.next_below(3);
        g.cout = 1 + r.next_below(4);
        g.k = 3;
        g.stride = 1;
        g.pad = 1;
        g.inx = 1 + r.next_below(70); // exercises tile tails and tiny rows
        g.iny = 1 + r.next_below(12);
        g.inz = 1 + r.next_below(6);
        g.outx = g.inx;
        g.outy = g.iny;
        g.outz = g.inz;
        std::vector<float> x = random_vec(r, g.batch * g.cin * g.in_voxels());
        std::vector<float> w = random_vec(r, g.cout * g.cin * 27);
        std::vector<float> bias = random_vec(r, g.cout);
        std::vector<float> a(static_cast<size_t>(g.batch * g.cout * g.out_voxels()));
        std::vector<float> b2(a.size());
        kernels::scalar_ops().conv_fwd(g, x.data(), w.data(), bias.data(), a.data(), 0,
                                       g.batch * g.cout);
        avx2->conv_fwd(g, x.data(), w.data(), bias.data(), b2.data(), 0, g.batch * g.cout);
        CHECK(bits_equal(a, b2));
    }
}

TEST_CASE("conv_bwd_w scalar/AVX2 bitwise equivalence") {
    const auto* avx2 = kernels::avx2_ops();
    if (!avx2) return;
    Rng rng(11);
    for (int it = 0; it < 12; ++it) {
        Rng r = rng.stream(it);
        ConvGeom g;
        g.batch = 1 + r.next_below(2);
        g.cin = 1 + r.next_below(3);
        g.cout = 1 + r.next_below(3);
        g.k = 3;
        g.stride = 1;
        g.pad = 1;
        g.inx = 1 + r.next_below(40);
        g.iny = 1 + r.next_below(10);
        g.inz = 1 + r.next_below(5);
        g.outx = g.inx;
        g.outy = g.iny;
        g.outz = g.inz;
        std::vector<float> x = random_vec(r, g.batch * g.cin * g.in_voxels());
        std::vector<float> gout = random_vec(r, g.batch * g.cout * g.out_voxels());
        std::vector<float> a(static_cast<size_t>(g.cout * g.cin * 27));
        std::vector<float> b2(a.size());
        kernels::scalar_ops().conv_bwd_w(g, x.data(), gout.data(), a.data(), 0,
                                         g.cout * g.cin);
        avx2->conv_bwd_w(g, x.data(), gout.data(), b2.data(), 0, g.cout * g.cin);
        CHECK(bits_equal(a, b2));
    }
}

TEST_CASE("dconv_fwd matches the scatter oracle and AVX2 matches scalar") {
    const auto* avx2 = kernels::avx2_ops();
    Rng rng(13);
    for (int it = 0; it < 16; ++it) {
        Rng r = rng.stream(it);
        const int64_t b = 1 + r.next_below(2);
        const int64_t ci = 1 + r.next_below(3);
        const int64_t co = 1 + r.next_below(3);
        const int64_t e = 1 + r.next_below(9);
        const ConvGeom g = dconv_geom(b, ci, co, e);

        Tensor<float> x({b, ci, e, e, e}), w({ci, co, 4, 4, 4}), bias({co});
        for (int64_t i = 0; i < x.count(); ++i) x[i] = static_cast<float>(r.next_normal());
        for (int64_t i = 0; i < w.count(); ++i) w[i] = static_cast<float>(r.next_normal());
        for (int64_t i = 0; i < bias.count(); ++i)
            bias[i] = static_cast<float>(r.next_normal());

        // scatter oracle agrees within fp tolerance (different add order)
        Tensor<float> oracle = oracles::deconv3d_scatter(x, w, bias, 4, 2, 1);
        std::vector<float> got(static_cast<size_t>(oracle.count()));
        kernels::scalar_ops().dconv_fwd(g, x.data(), w.data(), bias.data(), got.data(), 0,
                                        b * co);
        for (size_t i = 0; i < got.size(); ++i)
            CHECK(std::fabs(got[i] - oracle[static_cast<int64_t>(i)]) < 1e-4f);

        if (avx2) {
            std::vector<float> got2(got.size(), -1.0f);
            avx2->dconv_fwd(g, x.data(), w.data(), bias.data(), got2.data(), 0, b * co);
            CHECK(bits_equal(got2, got));
        }
    }
}

TEST_CASE("dconv single delta input: output sum equals kernel sum") {
    // one input voxel set to 1, kernel all ones, zero bias
    const int64_t e = 4;
    const ConvGeom g = dconv_geom(1, 1, 1, e);
    Tensor<float> x({1, 1, e, e, e}), w({1, 1, 4, 4, 4}), bias({1});
    w.fill(1.0f);
    x[static_cast<int64_t>((2 * e + 2) * e + 2)] = 1.0f; // interior voxel
    std::vector<float> out(static_cast<size_t>(g.out_voxels()));
    kernels::scalar_ops().dconv_fwd(g, x.data(), w.data(), bias.data(), out.data(), 0, 1);
    double sum = 0.0;
    for (float v : out) sum += v;
    CHECK(sum == doctest::Approx(64.0)); // 4^3 taps, all land in bounds
}

TEST_CASE("dconv backward kernels: scalar/AVX2 bitwise equivalence") {
    const auto* avx2 = kernels::avx2_ops();
    if (!avx2) return;
    Rng rng(17);
    for (int it = 0; it < 12; ++it) {
        Rng r = rng.stream(it);
        const int64_t b = 1 + r.next_below(2);
        const int64_t ci = 1 + r.next_below(3);
        const int64_t co = 1 + r.next_below(3);
        const int64_t e = 1 + r.next_below(12);
        const ConvGeom g = dconv_geom(b, ci, co, e);

        std::vector<float> x = random_vec(r, b * ci * g.in_voxels());
        std::vector<float> gout = random_vec(r, b * co * g.out_voxels());
        std::vector<float> gout_d(gout.size());
        kernels::scalar_ops().deinterleave_rows(gout_d.data(), gout.data(),
                                                b * co * g.outz * g.outy, g.outx);
        std::vector<float> w = random_vec(r, ci * co * 64);

        std::vector<float> gin_a(x.size()), gin_b(x.size());
        kernels::scalar_ops().dconv_bwd_in(g, gout_d.data(), w.data(), gin_a.data(), 0,
                                           b * ci);
        avx2->dconv_bwd_in(g, gout_d.data(), w.data(), gin_b.data(), 0, b * ci);
        CHECK(bits_equal(gin_a, gin_b));

        std::vector<float> gw_a(w.size()), gw_b(w.size());
        kernels::scalar_ops().dconv_bwd_w(g, x.data(), gout_d.data(), gw_a.data(), 0,
                                          ci * co);
        avx2->dconv_bwd_w(g, x.data(), gout_d.data(), gw_b.data(), 0, ci * co);
        CHECK(bits_equal(gw_a, gw_b));
    }
}

TEST_CASE("elementwise and reduction kernels: scalar/AVX2 bitwise equivalence") {
    const auto* avx2 = kernels::avx2_ops();
    if (!avx2) return;
    Rng rng(23);
    for (int it = 0; it < 10; ++it) {
        Rng r = rng.stream(it);
        const int64_t n = 1 + r.next_below(1000);
        std::vector<float> a = random_vec(r, n), b = random_vec(r, n), c = random_vec(r, n);
        std::vector<float> y1(a.size()), y2(a.size());

        kernels::scalar_ops().add(y1.data(), a.data(), b.data(), 0, n);
        avx2->add(y2.data(), a.data(), b.data(), 0, n);
        CHECK(bits_equal(y1, y2));

        y1 = c; y2 = c;
        kernels::scalar_ops().acc(y1.data(), a.data(), 0, n);
        avx2->acc(y2.data(), a.data(), 0, n);
        CHECK(bits_equal(y1, y2));

        kernels::scalar_ops().relu_fwd(y1.data(), a.data(), 0, n);
        avx2->relu_fwd(y2.data(), a.data(), 0, n);
        CHECK(bits_equal(y1, y2));

        kernels::scalar_ops().relu_bwd(y1.data(), a.data(), b.data(), 0, n);
        avx2->relu_bwd(y2.data(), a.data(), b.data(), 0, n);
        CHECK(bits_equal(y1, y2));

        kernels::scalar_ops().affine(y1.data(), a.data(), 1.7f, -0.3f, 0, n);
        avx2->affine(y2.data(), a.data(), 1.7f, -0.3f, 0, n);
        CHECK(bits_equal(y1, y2));

        kernels::scalar_ops().affine2(y1.data(), a.data(), b.data(), 0.9f, 0.1f, -0.2f, 0, n);
        avx2->affine2(y2.data(), a.data(), b.data(), 0.9f, 0.1f, -0.2f, 0, n);
        CHECK(bits_equal(y1, y2));

        std::vector<float> w1 = a, w2 = a, v1 = b, v2 = b;
        kernels::scalar_ops().sgd_update(w1.data(), v1.data(), c.data(), 0.9f, 5e-4f, 0.01f,
                                         0, n);
        avx2->sgd_update(w2.data(), v2.data(), c.data(), 0.9f, 5e-4f, 0.01f, 0, n);
        CHECK(bits_equal(w1, w2));
        CHECK(bits_equal(v1, v2));

        const float s1 = kernels::scalar_ops().sum_blk(a.data(), n);
        const float s2 = avx2->sum_blk(a.data(), n);
        CHECK(std::memcmp(&s1, &s2, 4) == 0);
        const float d1 = kernels::scalar_ops().dot_blk(a.data(), b.data(), n);
        const float d2 = avx2->dot_blk(a.data(), b.data(), n);
        CHECK(std::memcmp(&d1, &d2, 4) == 0);
    }
}

TEST_CASE("identity kernel convolution returns its input") {
    // k=3 kernel with centre weight 1, pad 1
    const int64_t e = 5;
    Tensor<float> x({1, 1, e, e, e}), w({1, 1, 3, 3, 3}), b({1});
    Rng r(3);
    for (int64_t i = 0; i < x.count(); ++i) x[i] = static_cast<float>(r.next_normal());
    w[13] = 1.0f; // centre of the 3x3x3 kernel
    const ConvGeom g = conv_geom(1, 1, 1, e, 3, 1);
    std::vector<float> out(static_cast<size_t>(g.out_voxels()));
    kernels::active_ops().conv_fwd(g, x.data(), w.data(), b.data(), out.data(), 0, 1);
    CHECK(bits_equal(out, x.vec()));
}

TEST_CASE("all-ones kernel on constant input gives 27 + bias at the interior") {
    const int64_t e = 5;
    Tensor<float> x({1, 1, e, e, e}), w({1, 1, 3, 3, 3}), b({1});
    x.fill(1.0f);
    w.fill(1.0f);
    b[0] = 0.25f;
    const ConvGeom g = conv_geom(1, 1, 1, e, 3, 1);
    std::vector<float> out(static_cast<size_t>(g.out_voxels()));
    kernels::active_ops().conv_fwd(g, x.data(), w.data(), b.data(), out.data(), 0, 1);
    const int64_t mid = (2 * e + 2) * e + 2;
    CHECK(out[static_cast<size_t>(mid)] == 27.25f);
}
