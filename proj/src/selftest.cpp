#include "pydnet/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "pydnet/cost.hpp"
#include "pydnet/gradcheck.hpp"
#include "pydnet/model_names.hpp"
#include "pydnet/network.hpp"
#include "pydnet/ops.hpp"

namespace pydnet {

namespace {

constexpr double kStep = 1e-4;
constexpr double kGradTol = 1e-4;

// ------------------------- gradient-check fixtures -------------------------

GradCheckStats check_conv2d(uint64_t seed, int stride, bool sabotage) {
    SeededRng rng(seed);
    const ConvSpec spec = ConvSpec::make(3, stride, 3, 4);
    Tensor<double> x = random_tensor(2, 3, 6, 6, rng);
    Tensor<double> w = random_tensor(4, 3, 3, 3, rng);
    const int ho = spec.out_dim(6), wo = spec.out_dim(6);
    Tensor<double> proj = random_projection(2, 4, ho, wo, rng);
    Tensor<double> dx(2, 3, 6, 6), dw(4, 3, 3, 3);
    conv2d_bwd(x, w, spec, proj, dx, dw);
    if (sabotage) dw.data()[0] += 1e-2;
    auto loss = [&] { return dot(conv2d_fwd(x, w, spec), proj); };
    GradCheckStats stats;
    check_gradient_array(x.data(), dx.data(), x.numel(), loss, kStep, stats);
    check_gradient_array(w.data(), dw.data(), w.numel(), loss, kStep, stats);
    return stats;
}

GradCheckStats check_depthwise(uint64_t seed, int stride) {
    SeededRng rng(seed);
    const ConvSpec spec = ConvSpec::make(3, stride, 4, 4);
    Tensor<double> x = random_tensor(2, 4, 6, 6, rng);
    Tensor<double> w = random_tensor(4, 1, 3, 3, rng);
    Tensor<double> proj = random_projection(2, 4, spec.out_dim(6), spec.out_dim(6), rng);
    Tensor<double> dx(2, 4, 6, 6), dw(4, 1, 3, 3);
    depthwise_bwd(x, w, spec, proj, dx, dw);
    auto loss = [&] { return dot(depthwise_fwd(x, w, spec), proj); };
    GradCheckStats stats;
    check_gradient_array(x.data(), dx.data(), x.numel(), loss, kStep, stats);
    check_gradient_array(w.data(), dw.data(), w.numel(), loss, kStep, stats);
    return stats;
}

GradCheckStats check_pyramid(uint64_t seed, Fusion fusion, int stride) {
    SeededRng rng(seed);
    PyramidSpec pyr;
    pyr.kernels = {3, 5};
    pyr.fusion = fusion;
    Tensor<double> x = random_tensor(2, 3, 6, 6, rng);
    std::vector<Tensor<double>> ws;
    for (int k : pyr.kernels) ws.push_back(random_tensor(3, 1, k, k, rng));
    const int ho = (6 + stride - 1) / stride;
    const int oc = fusion == Fusion::Concat ? 3 * static_cast<int>(pyr.kernels.size()) : 3;
    Tensor<double> proj = random_projection(2, oc, ho, ho, rng);
    Tensor<double> dx(2, 3, 6, 6);
    std::vector<Tensor<double>> dws;
    pyramid_dw_bwd(x, ws, pyr, stride, proj, dx, dws);
    auto loss = [&] { return dot(pyramid_dw_fwd(x, ws, pyr, stride), proj); };
    GradCheckStats stats;
    check_gradient_array(x.data(), dx.data(), x.numel(), loss, kStep, stats);
    for (size_t b = 0; b < ws.size(); ++b) {
        check_gradient_array(ws[b].data(), dws[b].data(), ws[b].numel(), loss, kStep, stats);
    }
    return stats;
}

GradCheckStats check_batchnorm(uint64_t seed) {
    SeededRng rng(seed);
    Tensor<double> x = random_tensor(3, 4, 5, 5, rng);
    BatchNormState<double> st(4);
    for (int c = 0; c < 4; ++c) {
        st.gamma[static_cast<size_t>(c)] = rng.uniform(0.5, 1.5);
        st.beta[static_cast<size_t>(c)] = rng.uniform(-0.5, 0.5);
    }
    Tensor<double> proj = random_projection(3, 4, 5, 5, rng);
    BatchNormCache<double> cache;
    batchnorm_fwd(x, st, Mode::Train, &cache);
    std::vector<double> dgamma(4, 0.0), dbeta(4, 0.0);
    Tensor<double> dx = batchnorm_bwd(proj, st, cache, dgamma, dbeta);
    auto loss = [&] { return dot(batchnorm_fwd(x, st, Mode::Train), proj); };
    GradCheckStats stats;
    check_gradient_array(x.data(), dx.data(), x.numel(), loss, kStep, stats);
    check_gradient_array(st.gamma.data(), dgamma.data(), 4, loss, kStep, stats);
    check_gradient_array(st.beta.data(), dbeta.data(), 4, loss, kStep, stats);
    return stats;
}

GradCheckStats check_relu(uint64_t seed) {
    SeededRng rng(seed);
    Tensor<double> x = random_tensor(2, 3, 4, 4, rng);
    // Keep activations away from the kink, where finite differences lie.
    for (size_t i = 0; i < x.numel(); ++i) {
        if (std::fabs(x.data()[i]) < 1e-2) x.data()[i] = 0.1;
    }
    Tensor<double> proj = random_projection(2, 3, 4, 4, rng);
    Tensor<double> dx = relu_bwd(x, proj);
    auto loss = [&] { return dot(relu_fwd(x), proj); };
    GradCheckStats stats;
    check_gradient_array(x.data(), dx.data(), x.numel(), loss, kStep, stats);
    return stats;
}

GradCheckStats check_pool_dense_softmax(uint64_t seed) {
    SeededRng rng(seed);
    Tensor<double> x = random_tensor(2, 5, 3, 3, rng);
    Tensor<double> w = random_tensor(4, 5, 1, 1, rng);
    Tensor<double> bias = random_tensor(4, 1, 1, 1, rng);
    const std::vector<int> labels = {1, 3};
    auto loss = [&] {
        Tensor<double> pooled = global_avg_pool(x);
        Tensor<double> logits = fully_connected(pooled, w, bias);
        return static_cast<double>(softmax_cross_entropy(logits, labels).first);
    };
    Tensor<double> pooled = global_avg_pool(x);
    Tensor<double> logits = fully_connected(pooled, w, bias);
    auto [l0, dlogits] = softmax_cross_entropy(logits, labels);
    (void)l0;
    Tensor<double> dpooled(2, 5, 1, 1), dw(4, 5, 1, 1), dbias(4, 1, 1, 1);
    fully_connected_bwd(pooled, w, dlogits, dpooled, dw, dbias);
    Tensor<double> dx = global_avg_pool_bwd(x, dpooled);
    GradCheckStats stats;
    check_gradient_array(x.data(), dx.data(), x.numel(), loss, kStep, stats);
    check_gradient_array(w.data(), dw.data(), w.numel(), loss, kStep, stats);
    check_gradient_array(bias.data(), dbias.data(), bias.numel(), loss, kStep, stats);
    return stats;
}

// Tiny end-to-end network: subsamples coordinates (full finite differences
// over every parameter would dwarf the runtime budget) and uses the
// kink-filtered checker since the composite function contains ReLUs.
FilteredCheckStats check_end_to_end(uint64_t seed, BlockKind kind) {
    SeededRng rng(seed);
    NetworkConfig cfg;
    cfg.kind = kind;
    cfg.blocks_per_stage = 1;
    cfg.stage_channels = {4, 8, 16};
    cfg.classes = 3;
    cfg.alpha = 1.0;
    cfg.kernels = {3, 5};
    SeededRng init(derive_seed(seed, "init"));
    Network<double> net(cfg, init);
    Tensor<double> x = random_tensor(2, 3, 8, 8, rng);
    const std::vector<int> labels = {0, 2};

    auto loss = [&] {
        Tensor<double> logits = net.forward(x, Mode::Train);
        return static_cast<double>(softmax_cross_entropy(logits, labels).first);
    };
    net.zero_grad();
    Tensor<double> logits = net.forward(x, Mode::Train);
    auto [l0, dlogits] = softmax_cross_entropy(logits, labels);
    (void)l0;
    Tensor<double> dx = net.backward(dlogits);

    FilteredCheckStats stats;
    check_gradient_array_filtered(x.data(), dx.data(), 16, loss, kStep, stats);
    for (auto& p : net.params()) {
        const size_t probes = std::min<size_t>(p.size, 4);
        for (size_t t = 0; t < probes; ++t) {
            const size_t at = p.size <= 4 ? t : rng.below(p.size);
            check_gradient_array_filtered(p.value + at, p.grad + at, 1, loss, kStep, stats);
        }
    }
    return stats;
}

// --------------------------- equivalence oracles ---------------------------

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
    if (!a.same_shape(b)) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
    return m;
}

// depthwise followed by pointwise vs naive grouped conv composed with naive
// 1x1 conv.
double decomposition_diff(uint64_t seed) {
    SeededRng rng(seed);
    const int d_i = 3 + static_cast<int>(rng.below(4));
    const int d_j = 2 + static_cast<int>(rng.below(5));
    const int hw = 5 + static_cast<int>(rng.below(4));
    const int stride = rng.coin() ? 2 : 1;
    const ConvSpec dw_spec = ConvSpec::make(3, stride, d_i, d_i);
    Tensor<double> x = random_tensor(2, d_i, hw, hw, rng);
    Tensor<double> wd = random_tensor(d_i, 1, 3, 3, rng);
    Tensor<double> wp = random_tensor(d_j, d_i, 1, 1, rng);

    Tensor<double> fast = pointwise_fwd(depthwise_fwd(x, wd, dw_spec), wp);
    Tensor<double> slow = naive_conv_reference(
        naive_conv_reference(x, wd, dw_spec, /*groups=*/d_i), wp,
        ConvSpec::make(1, 1, d_i, d_j), /*groups=*/1);
    return max_abs_diff(fast, slow);
}

// Pyramid with K={3} must reduce to plain depthwise under both fusions.
double single_kernel_reduction_diff(uint64_t seed, Fusion fusion, int stride) {
    SeededRng rng(seed);
    const ConvSpec spec = ConvSpec::make(3, stride, 4, 4);
    PyramidSpec pyr;
    pyr.kernels = {3};
    pyr.fusion = fusion;
    Tensor<double> x = random_tensor(2, 4, 6, 6, rng);
    Tensor<double> w = random_tensor(4, 1, 3, 3, rng);
    std::vector<Tensor<double>> ws;
    ws.push_back(w);
    return max_abs_diff(pyramid_dw_fwd(x, ws, pyr, stride), depthwise_fwd(x, w, spec));
}

// Concat fusion followed by a pointwise whose weight replicates the Add-case
// pointwise across the M branch copies equals Add fusion followed by that
// pointwise: sum_m W x_m == W_rep concat(x_m).
double replicated_pointwise_bridge_diff(uint64_t seed) {
    SeededRng rng(seed);
    const int d = 4, d_j = 5;
    PyramidSpec add_pyr, cat_pyr;
    add_pyr.kernels = {3, 5, 7};
    cat_pyr.kernels = {3, 5, 7};
    add_pyr.fusion = Fusion::Add;
    cat_pyr.fusion = Fusion::Concat;
    const int m = static_cast<int>(add_pyr.kernels.size());
    Tensor<double> x = random_tensor(2, d, 8, 8, rng);
    std::vector<Tensor<double>> ws;
    for (int k : add_pyr.kernels) ws.push_back(random_tensor(d, 1, k, k, rng));
    Tensor<double> wp = random_tensor(d_j, d, 1, 1, rng);
    Tensor<double> wp_rep(d_j, m * d, 1, 1);
    for (int o = 0; o < d_j; ++o) {
        for (int b = 0; b < m; ++b) {
            for (int c = 0; c < d; ++c) {
                wp_rep.at(o, b * d + c, 0, 0) = wp.at(o, c, 0, 0);
            }
        }
    }
    Tensor<double> via_add = pointwise_fwd(pyramid_dw_fwd(x, ws, add_pyr, 1), wp);
    Tensor<double> via_cat = pointwise_fwd(pyramid_dw_fwd(x, ws, cat_pyr, 1), wp_rep);
    return max_abs_diff(via_add, via_cat);
}

}  // namespace

int run_selftest(std::ostream& out, bool sabotage_gradient) {
    int failures = 0;
    const auto section = [&](const std::string& name, bool ok, const std::string& detail) {
        out << (ok ? "PASS" : "FAIL") << "  " << name << " (" << detail << ")\n";
        if (!ok) ++failures;
    };

    {
        GradCheckStats stats;
        for (uint64_t seed = 1; seed <= 3; ++seed) {
            stats.absorb(check_conv2d(seed, 1, sabotage_gradient));
            stats.absorb(check_conv2d(seed + 100, 2, false));
            stats.absorb(check_depthwise(seed, 1));
            stats.absorb(check_depthwise(seed + 100, 2));
            stats.absorb(check_pyramid(seed, Fusion::Add, 1));
            stats.absorb(check_pyramid(seed, Fusion::Concat, 2));
            stats.absorb(check_batchnorm(seed));
            stats.absorb(check_relu(seed));
            stats.absorb(check_pool_dense_softmax(seed));
        }
        const FilteredCheckStats e2e = check_end_to_end(7, BlockKind::PydConcat);
        const double worst = std::max(stats.max_rel_err, e2e.max_rel_err);
        const bool ok = worst < kGradTol && e2e.skipped <= e2e.count / 10;
        char detail[128];
        std::snprintf(detail, sizeof(detail),
                      "max rel err %.3g over %zu coords (%zu kink-adjacent skipped), tol %g",
                      worst, stats.count + e2e.count, e2e.skipped, kGradTol);
        section("gradient checks", ok, detail);
    }

    {
        double worst = 0.0;
        for (uint64_t seed = 1; seed <= 10; ++seed) {
            worst = std::max(worst, decomposition_diff(seed));
        }
        char detail[96];
        std::snprintf(detail, sizeof(detail), "max abs diff %.3g, tol 1e-6", worst);
        section("depthwise+pointwise vs grouped-conv oracle", worst <= 1e-6, detail);
    }

    {
        double worst = 0.0;
        for (uint64_t seed = 1; seed <= 5; ++seed) {
            worst = std::max(worst, single_kernel_reduction_diff(seed, Fusion::Add, 1));
            worst = std::max(worst, single_kernel_reduction_diff(seed, Fusion::Concat, 2));
        }
        char detail[96];
        std::snprintf(detail, sizeof(detail), "max abs diff %.3g, exact required", worst);
        section("single-kernel pyramid reduction", worst == 0.0, detail);
    }

    {
        double worst = 0.0;
        for (uint64_t seed = 1; seed <= 5; ++seed) {
            worst = std::max(worst, replicated_pointwise_bridge_diff(seed));
        }
        char detail[96];
        std::snprintf(detail, sizeof(detail), "max abs diff %.3g, tol 1e-5", worst);
        section("replicated-pointwise concat/add bridge", worst <= 1e-5, detail);
    }

    {
        bool ok = true;
        std::string bad;
        for (const NetworkConfig& cfg : benchmark_grid()) {
            const CostReport report = analyze_network(cfg);
            SeededRng rng(1);
            Network<float> model(cfg, rng);
            const uint64_t enumerated = count_params_enumerated(model);
            if (report.total_params != enumerated) {
                ok = false;
                bad = canonical_model_name(cfg);
                break;
            }
        }
        section("cost model closed-form vs enumerated parameters",
                ok, ok ? "22 grid points equal" : "mismatch at " + bad);
    }

    out << (failures == 0 ? "selftest: all sections passed\n"
                          : "selftest: " + std::to_string(failures) + " section(s) FAILED\n");
    return failures == 0 ? 0 : 1;
}

}  // namespace pydnet
