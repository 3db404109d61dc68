#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "pydnet/gradcheck.hpp"
#include "pydnet/ops.hpp"

using namespace pydnet;

namespace {

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::fabs(static_cast<double>(a.data()[i]) - b.data()[i]));
    return m;
}

Tensor<float> random_f32(int n, int c, int h, int w, SeededRng& rng) {
    Tensor<float> t(n, c, h, w);
    for (size_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

}  // namespace

TEST_SUITE_BEGIN("ops");

// ------------------------------ convolution -------------------------------

TEST_CASE("conv2d on a single pixel multiplies input by the kernel") {
    Tensor<float> x(1, 1, 1, 1), w(1, 1, 1, 1);
    x.at(0, 0, 0, 0) = 5.0f;
    w.at(0, 0, 0, 0) = 2.0f;
    Tensor<float> y = conv2d_fwd(x, w, ConvSpec::make(1, 1, 1, 1));
    CHECK(y.numel() == 1);
    CHECK(y.at(0, 0, 0, 0) == 10.0f);
}

TEST_CASE("conv2d all-ones 3x3 with same padding counts the overlap window") {
    Tensor<float> x(1, 1, 3, 3), w(1, 1, 3, 3);
    x.fill(1.0f);
    w.fill(1.0f);
    Tensor<float> y = conv2d_fwd(x, w, ConvSpec::make(3, 1, 1, 1));
    const float expected[3][3] = {{4, 6, 4}, {6, 9, 6}, {4, 6, 4}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(y.at(0, 0, i, j) == expected[i][j]);
}

TEST_CASE("conv2d zero input gives zero output") {
    SeededRng rng(3);
    Tensor<float> x(2, 3, 5, 5);
    x.fill(0.0f);
    Tensor<float> w = random_f32(4, 3, 3, 3, rng);
    Tensor<float> y = conv2d_fwd(x, w, ConvSpec::make(3, 1, 3, 4));
    for (size_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == 0.0f);
}

TEST_CASE("conv2d output height/width follow ceil(in/stride)") {
    SeededRng rng(4);
    Tensor<float> x = random_f32(1, 2, 7, 7, rng);
    Tensor<float> w = random_f32(3, 2, 3, 3, rng);
    Tensor<float> y1 = conv2d_fwd(x, w, ConvSpec::make(3, 1, 2, 3));
    CHECK(y1.h() == 7);
    Tensor<float> y2 = conv2d_fwd(x, w, ConvSpec::make(3, 2, 2, 3));
    CHECK(y2.h() == 4);  // ceil(7/2)
}

TEST_CASE("conv2d rejects malformed specs and mismatched channels") {
    SeededRng rng(5);
    Tensor<float> x = random_f32(1, 3, 4, 4, rng);
    Tensor<float> w = random_f32(4, 3, 3, 3, rng);
    CHECK_THROWS(ConvSpec::make(2, 1, 3, 4));   // even kernel
    CHECK_THROWS(ConvSpec::make(3, 3, 3, 4));   // stride not 1/2
    CHECK_THROWS(ConvSpec::make(3, 1, 0, 4));   // zero channels
    Tensor<float> wbad = random_f32(4, 2, 3, 3, rng);
    CHECK_THROWS(conv2d_fwd(x, wbad, ConvSpec::make(3, 1, 3, 4)));
    CHECK_THROWS(conv2d_fwd(x, w, ConvSpec::make(3, 1, 4, 4)));  // spec/input mismatch
}

TEST_CASE("conv2d is translation covariant away from the padded border") {
    // Convolving a cropped (shifted) input must equal the matching shift of
    // the full output wherever the window never touches padding.
    SeededRng rng(17);
    Tensor<float> x = random_f32(1, 2, 12, 12, rng);
    Tensor<float> w = random_f32(3, 2, 3, 3, rng);
    const ConvSpec spec = ConvSpec::make(3, 1, 2, 3);
    Tensor<float> y_full = conv2d_fwd(x, w, spec);

    Tensor<float> x_crop(1, 2, 10, 10);
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j) x_crop.at(0, c, i, j) = x.at(0, c, i + 1, j + 1);
    Tensor<float> y_crop = conv2d_fwd(x_crop, w, spec);

    for (int c = 0; c < 3; ++c)
        for (int i = 1; i < 9; ++i)
            for (int j = 1; j < 9; ++j)
                CHECK(std::fabs(y_crop.at(0, c, i, j) - y_full.at(0, c, i + 1, j + 1)) <=
                      1e-6f);
}

TEST_CASE("conv2d backward with zero upstream gradient yields zero weight gradient") {
    SeededRng rng(6);
    const ConvSpec spec = ConvSpec::make(3, 1, 2, 3);
    Tensor<double> x = random_tensor(1, 2, 5, 5, rng);
    Tensor<double> w = random_tensor(3, 2, 3, 3, rng);
    Tensor<double> gout(1, 3, 5, 5);
    gout.fill(0.0);
    Tensor<double> dx(1, 2, 5, 5), dw(3, 2, 3, 3);
    conv2d_bwd(x, w, spec, gout, dx, dw);
    for (size_t i = 0; i < dw.numel(); ++i) CHECK(dw.data()[i] == 0.0);
    for (size_t i = 0; i < dx.numel(); ++i) CHECK(dx.data()[i] == 0.0);
}

// ------------------------------- depthwise --------------------------------

TEST_CASE("depthwise with a center-one kernel is the identity") {
    SeededRng rng(7);
    Tensor<float> x = random_f32(2, 3, 5, 5, rng);
    Tensor<float> w(3, 1, 3, 3);
    w.fill(0.0f);
    for (int c = 0; c < 3; ++c) w.at(c, 0, 1, 1) = 1.0f;
    Tensor<float> y = depthwise_fwd(x, w, ConvSpec::make(3, 1, 3, 3));
    CHECK(std::memcmp(y.data(), x.data(), x.numel() * sizeof(float)) == 0);
}

TEST_CASE("depthwise keeps channels independent") {
    // Channel 0 all ones, channel 1 all twos, all-ones 3x3 kernels: interior
    // outputs are 9 and 18 and never mix.
    Tensor<float> x(1, 2, 5, 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            x.at(0, 0, i, j) = 1.0f;
            x.at(0, 1, i, j) = 2.0f;
        }
    Tensor<float> w(2, 1, 3, 3);
    w.fill(1.0f);
    Tensor<float> y = depthwise_fwd(x, w, ConvSpec::make(3, 1, 2, 2));
    CHECK(y.at(0, 0, 2, 2) == 9.0f);
    CHECK(y.at(0, 1, 2, 2) == 18.0f);
}

TEST_CASE("depthwise stride 2 halves spatial dims") {
    SeededRng rng(8);
    Tensor<float> x = random_f32(1, 4, 4, 4, rng);
    Tensor<float> w = random_f32(4, 1, 3, 3, rng);
    Tensor<float> y = depthwise_fwd(x, w, ConvSpec::make(3, 2, 4, 4));
    CHECK(y.n() == 1);
    CHECK(y.c() == 4);
    CHECK(y.h() == 2);
    CHECK(y.w() == 2);
}

TEST_CASE("depthwise rejects weight/channel mismatch") {
    SeededRng rng(9);
    Tensor<float> x = random_f32(1, 4, 4, 4, rng);
    Tensor<float> w = random_f32(3, 1, 3, 3, rng);
    CHECK_THROWS(depthwise_fwd(x, w, ConvSpec::make(3, 1, 4, 4)));
}

// ------------------------------- pointwise --------------------------------

TEST_CASE("pointwise mixes channels per pixel") {
    Tensor<float> x(1, 2, 1, 1);
    x.at(0, 0, 0, 0) = 3.0f;
    x.at(0, 1, 0, 0) = 4.0f;
    Tensor<float> w(1, 2, 1, 1);
    w.fill(1.0f);
    Tensor<float> y = pointwise_fwd(x, w);
    CHECK(y.at(0, 0, 0, 0) == 7.0f);
}

TEST_CASE("pointwise with the identity matrix passes input through") {
    SeededRng rng(10);
    Tensor<float> x = random_f32(2, 3, 4, 4, rng);
    Tensor<float> w(3, 3, 1, 1);
    w.fill(0.0f);
    for (int c = 0; c < 3; ++c) w.at(c, c, 0, 0) = 1.0f;
    Tensor<float> y = pointwise_fwd(x, w);
    CHECK(std::memcmp(y.data(), x.data(), x.numel() * sizeof(float)) == 0);
}

TEST_CASE("pointwise agrees bit-for-bit with conv2d at kernel 1") {
    SeededRng rng(11);
    Tensor<float> x = random_f32(2, 5, 6, 6, rng);
    Tensor<float> w = random_f32(3, 5, 1, 1, rng);
    Tensor<float> a = pointwise_fwd(x, w);
    Tensor<float> b = conv2d_fwd(x, w, ConvSpec::make(1, 1, 5, 3));
    CHECK(std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)) == 0);
}

// -------------------------------- pyramid ---------------------------------

TEST_CASE("pyramid with a single 3x3 branch reduces to plain depthwise") {
    SeededRng rng(12);
    Tensor<float> x = random_f32(2, 4, 6, 6, rng);
    Tensor<float> w = random_f32(4, 1, 3, 3, rng);
    std::vector<Tensor<float>> ws{w};
    for (Fusion fusion : {Fusion::Add, Fusion::Concat}) {
        for (int stride : {1, 2}) {
            PyramidSpec pyr;
            pyr.kernels = {3};
            pyr.fusion = fusion;
            Tensor<float> a = pyramid_dw_fwd(x, ws, pyr, stride);
            Tensor<float> b = depthwise_fwd(x, w, ConvSpec::make(3, stride, 4, 4));
            CHECK(a.same_shape(b));
            CHECK(std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)) == 0);
        }
    }
}

TEST_CASE("pyramid add over K={3,5} on constant input sums both window areas") {
    // With all-ones kernels on a constant image c, interior outputs are
    // (9 + 25) * c = 34c once the image is at least 7x7.
    const float c = 2.0f;
    Tensor<float> x(1, 1, 9, 9);
    x.fill(c);
    std::vector<Tensor<float>> ws;
    ws.emplace_back(1, 1, 3, 3);
    ws.emplace_back(1, 1, 5, 5);
    ws[0].fill(1.0f);
    ws[1].fill(1.0f);
    PyramidSpec pyr;
    pyr.kernels = {3, 5};
    pyr.fusion = Fusion::Add;
    Tensor<float> y = pyramid_dw_fwd(x, ws, pyr, 1);
    CHECK(y.at(0, 0, 4, 4) == 34.0f * c);
    CHECK(y.at(0, 0, 4, 4) == 68.0f);
}

TEST_CASE("pyramid concat over K={3,5,7} stacks branch outputs channelwise") {
    SeededRng rng(13);
    Tensor<float> x = random_f32(1, 4, 8, 8, rng);
    std::vector<Tensor<float>> ws;
    for (int k : {3, 5, 7}) ws.push_back(random_f32(4, 1, k, k, rng));
    PyramidSpec pyr;
    pyr.kernels = {3, 5, 7};
    pyr.fusion = Fusion::Concat;
    Tensor<float> y = pyramid_dw_fwd(x, ws, pyr, 1);
    CHECK(y.c() == 12);
    // Branch order is the kernel order: slice m recovers branch m exactly.
    for (int m = 0; m < 3; ++m) {
        Tensor<float> branch =
            depthwise_fwd(x, ws[static_cast<size_t>(m)],
                          ConvSpec::make(pyr.kernels[static_cast<size_t>(m)], 1, 4, 4));
        Tensor<float> part = channel_slice(y, 4 * m, 4 * (m + 1));
        CHECK(std::memcmp(part.data(), branch.data(), branch.numel() * sizeof(float)) == 0);
    }
}

TEST_CASE("pyramid rejects branch/weight count mismatch and empty kernel list") {
    SeededRng rng(14);
    Tensor<float> x = random_f32(1, 4, 6, 6, rng);
    std::vector<Tensor<float>> ws;
    ws.push_back(random_f32(4, 1, 3, 3, rng));
    PyramidSpec pyr;
    pyr.kernels = {3, 5};
    pyr.fusion = Fusion::Add;
    CHECK_THROWS(pyramid_dw_fwd(x, ws, pyr, 1));
    PyramidSpec empty;
    empty.kernels = {};
    CHECK_THROWS(empty.validate());
}

TEST_CASE("add fusion backward routes the same upstream gradient to every branch") {
    SeededRng rng(15);
    Tensor<double> x = random_tensor(1, 3, 6, 6, rng);
    std::vector<Tensor<double>> ws;
    for (int k : {3, 5}) ws.push_back(random_tensor(3, 1, k, k, rng));
    PyramidSpec pyr;
    pyr.kernels = {3, 5};
    pyr.fusion = Fusion::Add;
    Tensor<double> gout = random_tensor(1, 3, 6, 6, rng);
    Tensor<double> dx(1, 3, 6, 6);
    std::vector<Tensor<double>> dws;
    pyramid_dw_bwd(x, ws, pyr, 1, gout, dx, dws);
    // Each branch's weight gradient must equal the standalone depthwise
    // backward fed with the identical upstream gradient.
    for (size_t m = 0; m < ws.size(); ++m) {
        const ConvSpec spec = ConvSpec::make(pyr.kernels[m], 1, 3, 3);
        Tensor<double> dxi(1, 3, 6, 6), dwi(3, 1, pyr.kernels[m], pyr.kernels[m]);
        depthwise_bwd(x, ws[m], spec, gout, dxi, dwi);
        CHECK(max_abs_diff(dws[m], dwi) == 0.0);
    }
}

// ------------------------------- batchnorm --------------------------------

TEST_CASE("batchnorm on constant input returns beta") {
    Tensor<float> x(2, 2, 3, 3);
    x.fill(5.0f);
    BatchNormState<float> st(2);
    st.beta[0] = 0.25f;
    st.beta[1] = -1.5f;
    Tensor<float> y = batchnorm_fwd(x, st, Mode::Train);
    for (int img = 0; img < 2; ++img)
        for (int i = 0; i < 9; ++i) {
            CHECK(y.plane(img, 0)[i] == doctest::Approx(0.25).epsilon(1e-5));
            CHECK(y.plane(img, 1)[i] == doctest::Approx(-1.5).epsilon(1e-5));
        }
}

TEST_CASE("batchnorm maps a two-point batch {1,3} to approximately {-1,+1}") {
    Tensor<float> x(2, 1, 1, 1);
    x.at(0, 0, 0, 0) = 1.0f;
    x.at(1, 0, 0, 0) = 3.0f;
    BatchNormState<float> st(1);
    Tensor<float> y = batchnorm_fwd(x, st, Mode::Train);
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(y.at(1, 0, 0, 0) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("batchnorm eval uses running statistics") {
    SeededRng rng(16);
    Tensor<float> x = random_f32(2, 3, 4, 4, rng);
    BatchNormState<float> st(3);  // running mean 0, var 1, gamma 1, beta 0
    Tensor<float> y = batchnorm_fwd(x, st, Mode::Eval);
    CHECK(max_abs_diff(y, x) < 1e-4);  // only the eps shift separates them
}

TEST_CASE("batchnorm updates running stats with momentum 0.9") {
    Tensor<float> x(4, 1, 1, 1);
    x.at(0, 0, 0, 0) = 1.0f;
    x.at(1, 0, 0, 0) = 2.0f;
    x.at(2, 0, 0, 0) = 3.0f;
    x.at(3, 0, 0, 0) = 4.0f;  // batch mean 2.5, population var 1.25
    BatchNormState<float> st(1);
    batchnorm_fwd(x, st, Mode::Train);
    CHECK(st.running_mean[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.5));
    CHECK(st.running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.25));
}

TEST_CASE("batchnorm rejects undefined variance and channel mismatch") {
    Tensor<float> x(1, 2, 1, 1);
    BatchNormState<float> st(2);
    CHECK_THROWS(batchnorm_fwd(x, st, Mode::Train));  // n*h*w = 1
    CHECK_NOTHROW(batchnorm_fwd(x, st, Mode::Eval));
    Tensor<float> x3(2, 3, 2, 2);
    CHECK_THROWS(batchnorm_fwd(x3, st, Mode::Train));
}

// ------------------------------ relu / pool -------------------------------

TEST_CASE("relu clips negatives and passes positives") {
    Tensor<float> x(1, 1, 1, 4);
    x.data()[0] = -2.0f;
    x.data()[1] = -0.0f;
    x.data()[2] = 0.5f;
    x.data()[3] = 3.0f;
    Tensor<float> y = relu_fwd(x);
    CHECK(y.data()[0] == 0.0f);
    CHECK(y.data()[1] == 0.0f);
    CHECK(y.data()[2] == 0.5f);
    CHECK(y.data()[3] == 3.0f);

    Tensor<float> g(1, 1, 1, 4);
    g.fill(1.0f);
    Tensor<float> dx = relu_bwd(x, g);
    CHECK(dx.data()[0] == 0.0f);
    CHECK(dx.data()[2] == 1.0f);
    CHECK(dx.data()[3] == 1.0f);
}

TEST_CASE("global average pool averages each channel plane") {
    Tensor<float> x(1, 1, 2, 2);
    x.data()[0] = 1.0f;
    x.data()[1] = 2.0f;
    x.data()[2] = 3.0f;
    x.data()[3] = 4.0f;
    Tensor<float> y = global_avg_pool(x);
    CHECK(y.n() == 1);
    CHECK(y.c() == 1);
    CHECK(y.h() == 1);
    CHECK(y.w() == 1);
    CHECK(y.at(0, 0, 0, 0) == 2.5f);

    Tensor<float> ones(2, 3, 8, 8);
    ones.fill(1.0f);
    Tensor<float> p = global_avg_pool(ones);
    for (size_t i = 0; i < p.numel(); ++i) CHECK(p.data()[i] == 1.0f);
}

TEST_CASE("global average pool backward spreads gradient uniformly") {
    Tensor<float> x(1, 1, 2, 2);
    x.fill(0.0f);
    Tensor<float> g(1, 1, 1, 1);
    g.at(0, 0, 0, 0) = 8.0f;
    Tensor<float> dx = global_avg_pool_bwd(x, g);
    for (size_t i = 0; i < dx.numel(); ++i) CHECK(dx.data()[i] == 2.0f);
}

// --------------------------- dense and softmax ----------------------------

TEST_CASE("fully connected validates feature width") {
    SeededRng rng(18);
    Tensor<float> x = random_f32(2, 5, 1, 1, rng);
    Tensor<float> w = random_f32(4, 6, 1, 1, rng);
    Tensor<float> bias = random_f32(4, 1, 1, 1, rng);
    CHECK_THROWS(fully_connected(x, w, bias));
}

TEST_CASE("softmax cross entropy of uniform logits is ln(classes)") {
    Tensor<float> logits(2, 10, 1, 1);
    logits.fill(0.3f);  // any constant row is a uniform distribution
    auto [loss, dlogits] = softmax_cross_entropy(logits, {4, 7});
    CHECK(loss == doctest::Approx(std::log(10.0)).epsilon(1e-6));
    CHECK(loss == doctest::Approx(2.302585).epsilon(1e-5));

    SUBCASE("gradient rows sum to zero") {
        for (int img = 0; img < 2; ++img) {
            double s = 0.0;
            for (int c = 0; c < 10; ++c) s += dlogits.at(img, c, 0, 0);
            CHECK(s == doctest::Approx(0.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("softmax cross entropy of a dominant true logit is near zero") {
    Tensor<float> logits(1, 5, 1, 1);
    logits.fill(0.0f);
    logits.at(0, 3, 0, 0) = 100.0f;
    auto [loss, dlogits] = softmax_cross_entropy(logits, {3});
    (void)dlogits;
    CHECK(loss >= 0.0f);
    CHECK(loss < 1e-6f);
}

TEST_CASE("softmax cross entropy rejects out-of-range labels") {
    Tensor<float> logits(1, 5, 1, 1);
    logits.fill(0.0f);
    CHECK_THROWS(softmax_cross_entropy(logits, {5}));
    CHECK_THROWS(softmax_cross_entropy(logits, {-1}));
    CHECK_THROWS(softmax_cross_entropy(logits, {0, 1}));  // label/batch mismatch
}

// ---------------------------- naive reference -----------------------------

TEST_CASE("naive reference agrees with the fast paths") {
    SeededRng rng(19);
    Tensor<float> x = random_f32(2, 4, 9, 9, rng);

    SUBCASE("groups=1 matches conv2d") {
        Tensor<float> w = random_f32(5, 4, 3, 3, rng);
        const ConvSpec spec = ConvSpec::make(3, 1, 4, 5);
        CHECK(max_abs_diff(naive_conv_reference(x, w, spec, 1), conv2d_fwd(x, w, spec)) <=
              1e-6);
    }
    SUBCASE("groups=d_i matches depthwise") {
        Tensor<float> w = random_f32(4, 1, 3, 3, rng);
        const ConvSpec spec = ConvSpec::make(3, 1, 4, 4);
        CHECK(max_abs_diff(naive_conv_reference(x, w, spec, 4),
                           depthwise_fwd(x, w, spec)) <= 1e-6);
    }
    SUBCASE("kernel 1 matches pointwise") {
        Tensor<float> w = random_f32(6, 4, 1, 1, rng);
        const ConvSpec spec = ConvSpec::make(1, 1, 4, 6);
        CHECK(max_abs_diff(naive_conv_reference(x, w, spec, 1), pointwise_fwd(x, w)) <=
              1e-6);
    }
    SUBCASE("stride 2 agrees too") {
        Tensor<float> w = random_f32(5, 4, 3, 3, rng);
        const ConvSpec spec = ConvSpec::make(3, 2, 4, 5);
        CHECK(max_abs_diff(naive_conv_reference(x, w, spec, 1), conv2d_fwd(x, w, spec)) <=
              1e-6);
    }
    SUBCASE("unsupported group counts are rejected") {
        Tensor<float> w = random_f32(4, 2, 3, 3, rng);
        CHECK_THROWS(naive_conv_reference(x, w, ConvSpec::make(3, 1, 4, 4), 2));
    }
}

TEST_CASE("depthwise+pointwise equals the grouped-conv composition on 100 cases") {
    double worst = 0.0;
    for (uint64_t seed = 1; seed <= 100; ++seed) {
        SeededRng rng(seed);
        const int d_i = 3 + static_cast<int>(rng.below(4));
        const int d_j = 2 + static_cast<int>(rng.below(5));
        const int hw = 5 + static_cast<int>(rng.below(4));
        const int stride = rng.coin() ? 2 : 1;
        const ConvSpec dw_spec = ConvSpec::make(3, stride, d_i, d_i);
        Tensor<float> x = random_f32(2, d_i, hw, hw, rng);
        Tensor<float> wd = random_f32(d_i, 1, 3, 3, rng);
        Tensor<float> wp = random_f32(d_j, d_i, 1, 1, rng);
        Tensor<float> fast = pointwise_fwd(depthwise_fwd(x, wd, dw_spec), wp);
        Tensor<float> slow = naive_conv_reference(
            naive_conv_reference(x, wd, dw_spec, d_i), wp, ConvSpec::make(1, 1, d_i, d_j),
            1);
        worst = std::max(worst, max_abs_diff(fast, slow));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("concat plus replicated pointwise equals add plus shared pointwise") {
    // sum_m W x_m == [W W ... W] concat(x_1..x_M): the two fusions agree
    // once the pointwise absorbs the branch sum.
    double worst = 0.0;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        SeededRng rng(seed);
        const int d = 4, d_j = 5, m = 3;
        PyramidSpec add_pyr, cat_pyr;
        add_pyr.kernels = {3, 5, 7};
        cat_pyr.kernels = {3, 5, 7};
        add_pyr.fusion = Fusion::Add;
        cat_pyr.fusion = Fusion::Concat;
        Tensor<float> x = random_f32(2, d, 8, 8, rng);
        std::vector<Tensor<float>> ws;
        for (int k : add_pyr.kernels) ws.push_back(random_f32(d, 1, k, k, rng));
        Tensor<float> wp = random_f32(d_j, d, 1, 1, rng);
        Tensor<float> wp_rep(d_j, m * d, 1, 1);
        for (int o = 0; o < d_j; ++o)
            for (int b = 0; b < m; ++b)
                for (int c = 0; c < d; ++c) wp_rep.at(o, b * d + c, 0, 0) = wp.at(o, c, 0, 0);
        Tensor<float> via_add = pointwise_fwd(pyramid_dw_fwd(x, ws, add_pyr, 1), wp);
        Tensor<float> via_cat = pointwise_fwd(pyramid_dw_fwd(x, ws, cat_pyr, 1), wp_rep);
        worst = std::max(worst, max_abs_diff(via_add, via_cat));
    }
    CHECK(worst <= 1e-5);
}

TEST_SUITE_END();
