#include <doctest.h>

#include "gradient_harness.hpp"

using namespace pydnet;
using namespace pydnet::testing;

TEST_SUITE_BEGIN("gradients");

// Every differentiable operation is checked against central finite
// differences in double precision across 20 random instances; the relative
// error bound is 1e-4 with denominator max(1, |analytic|, |numeric|).

TEST_CASE("conv2d gradients match finite differences (20 seeds, both strides)") {
    GradCheckStats stats;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        stats.absorb(grad_conv2d(seed, 1));
        stats.absorb(grad_conv2d(seed + 1000, 2));
    }
    CHECK(stats.count > 0);
    CHECK(stats.max_rel_err < kGradTol);
}

TEST_CASE("depthwise gradients match finite differences (20 seeds, both strides)") {
    GradCheckStats stats;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        stats.absorb(grad_depthwise(seed, 1));
        stats.absorb(grad_depthwise(seed + 1000, 2));
    }
    CHECK(stats.max_rel_err < kGradTol);
}

TEST_CASE("pointwise gradients match finite differences (20 seeds)") {
    GradCheckStats stats;
    for (uint64_t seed = 1; seed <= 20; ++seed) stats.absorb(grad_pointwise(seed));
    CHECK(stats.max_rel_err < kGradTol);
}

TEST_CASE("pyramid gradients match finite differences (20 seeds, both fusions)") {
    GradCheckStats stats;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        stats.absorb(grad_pyramid(seed, Fusion::Add, 1));
        stats.absorb(grad_pyramid(seed + 1000, Fusion::Concat, 2));
    }
    CHECK(stats.max_rel_err < kGradTol);
}

TEST_CASE("batchnorm gradients match finite differences (20 seeds)") {
    GradCheckStats stats;
    for (uint64_t seed = 1; seed <= 20; ++seed) stats.absorb(grad_batchnorm(seed));
    CHECK(stats.max_rel_err < kGradTol);
}

TEST_CASE("relu gradients match finite differences away from the kink (20 seeds)") {
    GradCheckStats stats;
    for (uint64_t seed = 1; seed <= 20; ++seed) stats.absorb(grad_relu(seed));
    CHECK(stats.max_rel_err < kGradTol);
}

TEST_CASE("pool, dense and softmax gradients match finite differences (20 seeds)") {
    GradCheckStats stats;
    for (uint64_t seed = 1; seed <= 20; ++seed) stats.absorb(grad_pool_dense_softmax(seed));
    CHECK(stats.max_rel_err < kGradTol);
}

TEST_CASE("tiny end-to-end networks pass kink-filtered gradient checks") {
    // Subsampled coordinates; three seeds per block kind here, the full
    // 20-seed sweep runs in the acceptance gate.
    for (BlockKind kind : {BlockKind::DWConv, BlockKind::PydAdd, BlockKind::PydConcat}) {
        FilteredCheckStats stats;
        for (uint64_t seed = 1; seed <= 3; ++seed) {
            stats.absorb(grad_end_to_end(seed, kind, /*input_probes=*/8, /*param_probes=*/2));
        }
        INFO("kind=", static_cast<int>(kind), " max_rel=", stats.max_rel_err,
             " skipped=", stats.skipped, "/", stats.count);
        CHECK(stats.count > 0);
        CHECK(stats.max_rel_err < kGradTol);
        CHECK(stats.skipped <= stats.count / 10);
    }
}

TEST_SUITE_END();
