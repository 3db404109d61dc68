#include <doctest.h>

#include <array>
#include <cmath>
#include <cstring>
#include <vector>

#include "pydnet/tensor.hpp"

using namespace pydnet;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("indexing round-trips a distinct value through every coordinate") {
    for (const auto [n, c, h, w] : {std::array<int, 4>{1, 1, 1, 1},
                                    std::array<int, 4>{2, 3, 5, 7},
                                    std::array<int, 4>{4, 8, 16, 16}}) {
        Tensor<float> t(n, c, h, w);
        float v = 0.0f;
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci)
                for (int hi = 0; hi < h; ++hi)
                    for (int wi = 0; wi < w; ++wi) t.at(ni, ci, hi, wi) = v++;
        // The write order above is exactly NCHW row-major, so the flat
        // buffer must be the sequence 0,1,2,... and reads must agree.
        for (size_t i = 0; i < t.numel(); ++i) CHECK(t.data()[i] == static_cast<float>(i));
        v = 0.0f;
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci)
                for (int hi = 0; hi < h; ++hi)
                    for (int wi = 0; wi < w; ++wi) CHECK(t.at(ni, ci, hi, wi) == v++);
    }
}

TEST_CASE("plane points at the start of one (n, c) image plane") {
    Tensor<float> t(2, 3, 4, 5);
    for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<float>(i);
    CHECK(t.plane(1, 2)[0] == t.at(1, 2, 0, 0));
    CHECK(t.plane(0, 1)[7] == t.at(0, 1, 1, 2));
}

TEST_CASE("elementwise_add adds matching shapes") {
    Tensor<float> a(1, 2, 2, 2), b(1, 2, 2, 2);
    a.fill(1.0f);
    b.fill(2.0f);
    Tensor<float> s = elementwise_add(a, b);
    for (size_t i = 0; i < s.numel(); ++i) CHECK(s.data()[i] == 3.0f);

    SUBCASE("zero tensor is the identity") {
        Tensor<float> z(1, 2, 2, 2);
        z.fill(0.0f);
        Tensor<float> same = elementwise_add(a, z);
        CHECK(std::memcmp(same.data(), a.data(), a.numel() * sizeof(float)) == 0);
    }
    SUBCASE("opposite values cancel") {
        Tensor<float> p(1, 1, 1, 2), q(1, 1, 1, 2);
        p.data()[0] = 1.0f;
        p.data()[1] = -1.0f;
        q.data()[0] = -1.0f;
        q.data()[1] = 1.0f;
        Tensor<float> r = elementwise_add(p, q);
        CHECK(r.data()[0] == 0.0f);
        CHECK(r.data()[1] == 0.0f);
    }
    SUBCASE("shape mismatch is rejected") {
        Tensor<float> bad(1, 2, 2, 3);
        CHECK_THROWS(elementwise_add(a, bad));
    }
}

namespace {
Tensor<float> random_f32(int n, int c, int h, int w, SeededRng& rng) {
    Tensor<float> t(n, c, h, w);
    for (size_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}
}  // namespace

TEST_CASE("channel_concat stacks along channels and preserves order") {
    SeededRng rng(11);
    Tensor<float> a = random_f32(1, 4, 8, 8, rng);
    Tensor<float> b = random_f32(1, 4, 8, 8, rng);
    Tensor<float> c = random_f32(1, 4, 8, 8, rng);
    Tensor<float> cat = channel_concat(std::vector<Tensor<float>>{a, b, c});
    CHECK(cat.n() == 1);
    CHECK(cat.c() == 12);
    CHECK(cat.h() == 8);
    CHECK(cat.w() == 8);

    SUBCASE("slice recovers each part bitwise") {
        Tensor<float> sa = channel_slice(cat, 0, 4);
        Tensor<float> sb = channel_slice(cat, 4, 8);
        Tensor<float> sc = channel_slice(cat, 8, 12);
        CHECK(std::memcmp(sa.data(), a.data(), a.numel() * sizeof(float)) == 0);
        CHECK(std::memcmp(sb.data(), b.data(), b.numel() * sizeof(float)) == 0);
        CHECK(std::memcmp(sc.data(), c.data(), c.numel() * sizeof(float)) == 0);
    }
    SUBCASE("single part concat is the identity") {
        Tensor<float> one = channel_concat(std::vector<Tensor<float>>{a});
        CHECK(one.same_shape(a));
        CHECK(std::memcmp(one.data(), a.data(), a.numel() * sizeof(float)) == 0);
    }
    SUBCASE("mismatched spatial dims are rejected") {
        Tensor<float> bad(1, 4, 8, 7);
        CHECK_THROWS(channel_concat(std::vector<Tensor<float>>{a, bad}));
    }
    SUBCASE("empty part list is rejected") {
        CHECK_THROWS(channel_concat(std::vector<Tensor<float>>{}));
    }
}

TEST_CASE("xavier init respects the uniform bound sqrt(6/(fan_in+fan_out))") {
    SUBCASE("fans 3/3 give bound exactly 1") {
        SeededRng rng(5);
        Tensor<float> t = xavier_uniform_init<float>(1, 1, 100, 100, 3, 3, rng);
        for (size_t i = 0; i < t.numel(); ++i) {
            CHECK(t.data()[i] >= -1.0f);
            CHECK(t.data()[i] <= 1.0f);
        }
    }
    SUBCASE("fans 144/144 give bound ~0.1443 and samples reach near it") {
        SeededRng rng(6);
        const double bound = std::sqrt(6.0 / (144.0 + 144.0));
        CHECK(bound == doctest::Approx(0.1443).epsilon(1e-3));
        Tensor<float> t = xavier_uniform_init<float>(4, 4, 50, 50, 144, 144, rng);
        float lo = 0.0f, hi = 0.0f;
        for (size_t i = 0; i < t.numel(); ++i) {
            CHECK(std::fabs(t.data()[i]) <= bound * (1.0 + 1e-6));
            lo = std::min(lo, t.data()[i]);
            hi = std::max(hi, t.data()[i]);
        }
        CHECK(hi > 0.9 * bound);
        CHECK(lo < -0.9 * bound);
    }
    SUBCASE("zero fan is rejected") {
        SeededRng rng(7);
        CHECK_THROWS(xavier_uniform_init<float>(1, 1, 2, 2, 0, 0, rng));
    }
}

TEST_CASE("xavier sample moments match the uniform distribution") {
    SeededRng rng(42);
    // > 1e5 samples; Var(U[-b,b]) = b^2/3, and the sample mean should sit
    // within 3 standard errors of zero.
    Tensor<float> t = xavier_uniform_init<float>(2, 8, 100, 100, 72, 72, rng);
    REQUIRE(t.numel() >= 100000);
    const double b = std::sqrt(6.0 / 144.0);
    double sum = 0.0, sumsq = 0.0;
    for (size_t i = 0; i < t.numel(); ++i) {
        sum += t.data()[i];
        sumsq += static_cast<double>(t.data()[i]) * t.data()[i];
    }
    const double n = static_cast<double>(t.numel());
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double expected_var = b * b / 3.0;
    CHECK(std::fabs(var - expected_var) < 0.05 * expected_var);
    const double stderr_mean = std::sqrt(expected_var / n);
    CHECK(std::fabs(mean) < 3.0 * stderr_mean);
}

TEST_CASE("same seed reproduces identical tensors, different seeds differ") {
    SeededRng r1(123), r2(123), r3(124);
    Tensor<float> a = xavier_uniform_init<float>(2, 3, 5, 5, 27, 27, r1);
    Tensor<float> b = xavier_uniform_init<float>(2, 3, 5, 5, 27, 27, r2);
    Tensor<float> c = xavier_uniform_init<float>(2, 3, 5, 5, 27, 27, r3);
    CHECK(std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)) == 0);
    CHECK(std::memcmp(a.data(), c.data(), a.numel() * sizeof(float)) != 0);
}

TEST_CASE("seeded rng basics") {
    SeededRng rng(9);
    SUBCASE("uniform01 stays in [0,1)") {
        for (int i = 0; i < 1000; ++i) {
            const double u = rng.uniform01();
            CHECK(u >= 0.0);
            CHECK(u < 1.0);
        }
    }
    SUBCASE("below(n) stays in range and hits every residue") {
        std::vector<int> seen(7, 0);
        for (int i = 0; i < 2000; ++i) ++seen[static_cast<size_t>(rng.below(7))];
        for (int count : seen) CHECK(count > 0);
    }
    SUBCASE("derived seeds differ by tag and index") {
        CHECK(derive_seed(9, "shuffle") != derive_seed(9, "augment"));
        CHECK(derive_seed(9, 0) != derive_seed(9, 1));
        CHECK(derive_seed(9, "shuffle") == derive_seed(9, "shuffle"));
    }
}

TEST_SUITE_END();
