// Finite-difference checks of every layer backward (f64, step 1e-4) plus the
// handful of closed-form layer examples.

#include <cmath>

#include "doctest.h"
#include "grad_checks.hpp"

using namespace voxseg;

TEST_CASE("conv3d gradient check") {
    for (uint64_t s = 0; s < 3; ++s) {
        auto res = gradcheck::check_conv3d(s);
        CHECK(res.max_rel_err < 1e-4);
    }
}

TEST_CASE("deconv3d gradient check and shape arithmetic") {
    for (uint64_t s = 0; s < 3; ++s) {
        auto res = gradcheck::check_deconv3d(s);
        CHECK(res.max_rel_err < 1e-4);
    }
    // extent 8, k=4, s=2, p=1 -> 16
    Tensor<float> x({1, 1, 8, 8, 8}), w({1, 1, 4, 4, 4}), b({1});
    auto out = deconv3d_fwd(x, w, b, ConvSpec{1, 1, 4, 2, 1});
    CHECK(out.dim(2) == 16);
    CHECK(out.dim(3) == 16);
    CHECK(out.dim(4) == 16);
}

TEST_CASE("maxpool gradient check and examples") {
    for (uint64_t s = 0; s < 3; ++s) {
        auto res = gradcheck::check_maxpool(s);
        CHECK(res.max_rel_err < 1e-4);
    }
    // constant input -> constant output; 1..8 block -> 8
    Tensor<float> x({1, 1, 2, 2, 2});
    for (int64_t i = 0; i < 8; ++i) x[i] = static_cast<float>(i + 1);
    auto res = maxpool3d_fwd(x);
    CHECK(res.out.count() == 1);
    CHECK(res.out[0] == 8.0f);
    Tensor<float> c({1, 1, 4, 4, 4});
    c.fill(3.25f);
    CHECK(maxpool3d_fwd(c).out[0] == 3.25f);
    CHECK_THROWS(maxpool3d_fwd(Tensor<float>({1, 1, 3, 3, 3})));
}

TEST_CASE("batchnorm gradient check and train-mode statistics") {
    for (uint64_t s = 0; s < 3; ++s) {
        auto res = gradcheck::check_batchnorm(s);
        CHECK(res.max_rel_err < 1e-4);
    }
    // train output has ~zero mean / unit variance per channel with identity affine
    Rng r(5);
    Tensor<float> x = gradcheck::randn(r, {2, 3, 4, 4, 4}).cast<float>();
    Tensor<float> gamma({3}), beta({3});
    gamma.fill(1.0f);
    BatchNormState<float> st;
    st.running_mean = Tensor<float>({3});
    st.running_var = Tensor<float>({3});
    st.running_var.fill(1.0f);
    auto y = batchnorm3d_fwd(x, gamma, beta, st, true,
                             static_cast<BatchNormSaved<float>*>(nullptr));
    const int64_t svox = 64;
    for (int64_t c = 0; c < 3; ++c) {
        double sum = 0, ss = 0;
        for (int64_t b = 0; b < 2; ++b)
            for (int64_t i = 0; i < svox; ++i) {
                const double v = y[(b * 3 + c) * svox + i];
                sum += v;
                ss += v * v;
            }
        const double mean = sum / 128.0, var = ss / 128.0 - mean * mean;
        CHECK(std::fabs(mean) < 1e-5);
        CHECK(std::fabs(var - 1.0) < 1e-4);
    }

    // eval with running stats equal to batch stats reproduces train output
    BatchNormState<float> st2;
    st2.running_mean = Tensor<float>({3});
    st2.running_var = Tensor<float>({3});
    BatchNormSaved<float> saved;
    BatchNormState<float> tmp;
    tmp.running_mean = Tensor<float>({3});
    tmp.running_var = Tensor<float>({3});
    tmp.running_var.fill(1.0f);
    auto ytrain = batchnorm3d_fwd(x, gamma, beta, tmp, true, &saved);
    for (int64_t c = 0; c < 3; ++c) {
        st2.running_mean[c] = saved.mean[c];
        st2.running_var[c] = 1.0f / (saved.inv[c] * saved.inv[c]) - 1e-5f;
    }
    auto yeval = batchnorm3d_fwd(x, gamma, beta, st2, false,
                                 static_cast<BatchNormSaved<float>*>(nullptr));
    for (int64_t i = 0; i < ytrain.count(); ++i)
        CHECK(std::fabs(ytrain[i] - yeval[i]) < 1e-5f);
}

TEST_CASE("relu gradient check and examples") {
    for (uint64_t s = 0; s < 3; ++s) {
        auto res = gradcheck::check_relu(s);
        CHECK(res.max_rel_err < 1e-4);
    }
    Tensor<float> x({1, 1, 1, 1, 3});
    x[0] = -3.0f;
    x[1] = 0.0f;
    x[2] = 5.0f;
    auto y = relu_fwd(x);
    CHECK(y[0] == 0.0f);
    CHECK(y[1] == 0.0f);
    CHECK(y[2] == 5.0f);
    // nonnegative input -> identity
    Tensor<float> nn({1, 1, 1, 1, 4});
    for (int64_t i = 0; i < 4; ++i) nn[i] = static_cast<float>(i) * 0.5f;
    auto ynn = relu_fwd(nn);
    for (int64_t i = 0; i < 4; ++i) CHECK(ynn[i] == nn[i]);
}

TEST_CASE("residual_add gradient and identities") {
    for (uint64_t s = 0; s < 3; ++s) {
        auto res = gradcheck::check_residual(s);
        CHECK(res.max_rel_err < 1e-4);
    }
    Rng r(9);
    Tensor<float> a = gradcheck::randn(r, {1, 2, 2, 2, 2}).cast<float>();
    Tensor<float> zero(a.shape());
    auto y = residual_add(a, zero);
    for (int64_t i = 0; i < a.count(); ++i) CHECK(y[i] == a[i]);
    auto y2 = residual_add(a, a);
    for (int64_t i = 0; i < a.count(); ++i) CHECK(y2[i] == 2.0f * a[i]);
    CHECK_THROWS(residual_add(a, Tensor<float>({1, 2, 2, 2, 3})));
}

TEST_CASE("softmax_xent gradient check and closed forms") {
    for (uint64_t s = 0; s < 3; ++s) {
        auto res = gradcheck::check_softmax_xent(s);
        CHECK(res.max_rel_err < 1e-4);
    }
    // equal logits everywhere -> ln 2
    Tensor<float> logits({1, 2, 2, 2, 2});
    Tensor<float> labels({1, 2, 2, 2});
    labels[3] = 1.0f;
    auto xr = softmax_xent(logits, labels);
    CHECK(xr.loss == doctest::Approx(std::log(2.0)).epsilon(1e-6));
    // +20 margin on the correct class -> loss below 1e-8
    Tensor<float> big({1, 2, 1, 1, 1});
    big[0] = 0.0f;  // class 0 logit
    big[1] = 20.0f; // class 1 logit
    Tensor<float> lab1({1, 1, 1, 1});
    lab1[0] = 1.0f;
    CHECK(softmax_xent(big, lab1).loss < 1e-8);
    // labels outside {0,1} rejected
    Tensor<float> bad({1, 1, 1, 1});
    bad[0] = 0.5f;
    CHECK_THROWS(softmax_xent(big, bad));
}

TEST_CASE("softmax probabilities sum to one and equal logits give one half") {
    Rng r(11);
    Tensor<float> logits = gradcheck::randn(r, {1, 2, 3, 3, 3}).cast<float>();
    auto p = softmax_fg_prob(logits);
    for (int64_t i = 0; i < 27; ++i) {
        const float l0 = logits[i], l1 = logits[27 + i];
        const float q = 1.0f / (1.0f + std::exp(l1 - l0)); // background prob
        CHECK(std::fabs(p[i] + q - 1.0f) < 1e-6f);
    }
    Tensor<float> eq({1, 2, 1, 1, 2});
    auto pe = softmax_fg_prob(eq);
    CHECK(pe[0] == 0.5f);
    CHECK(pe[1] == 0.5f);
}

TEST_CASE("conv3d interface errors") {
    Tensor<float> x({1, 2, 4, 4, 4}), w({3, 2, 3, 3, 3}), b({3});
    CHECK_THROWS(conv3d_fwd(x, w, b, ConvSpec{3, 3, 3, 1, 1}));        // channel mismatch
    CHECK_THROWS(conv3d_fwd(x, w, b, ConvSpec{2, 3, 3, 2, 0}));        // non-integral extent
    CHECK_NOTHROW(conv3d_fwd(x, w, b, ConvSpec{2, 3, 3, 1, 1}));
}
