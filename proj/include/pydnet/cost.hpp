#pragma once

#include <cstdint>
#include <numeric>

#include "pydnet/network.hpp"

namespace pydnet {

// Closed-form parameter and multiply-accumulate model. All counts are exact
// 64-bit integers; h and w are the layer's OUTPUT spatial dims so the same
// formulas cover strided layers.

enum class FlopsConvention { MACs, TwoMACs };

struct Rational {
    uint64_t num = 0, den = 1;

    Rational reduced() const {
        const uint64_t g = std::gcd(num, den);
        return {num / g, den / g};
    }
    bool operator==(const Rational& o) const {
        const Rational a = reduced(), b = o.reduced();
        return a.num == b.num && a.den == b.den;
    }
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

uint64_t cost_std_conv(uint64_t h, uint64_t w, uint64_t d_i, uint64_t d_j, uint64_t k);
uint64_t cost_dwsep(uint64_t h, uint64_t w, uint64_t d_i, uint64_t d_j, uint64_t k);
uint64_t cost_pyd_add(uint64_t h, uint64_t w, uint64_t d_i, uint64_t d_j,
                      const std::vector<int>& kernels);
uint64_t cost_pyd_concat(uint64_t h, uint64_t w, uint64_t d_i, uint64_t d_j,
                         const std::vector<int>& kernels);

// Exact cost ratio standard / depthwise-separable: k^2*d_j / (k^2 + d_j).
Rational cost_ratio_std_over_dwsep(uint64_t k, uint64_t d_j);

// Channel count a block instantiates under width multiplier alpha:
// round(alpha * d), half away from zero.
uint64_t scaled_channels(double alpha, uint64_t d);

// The width multiplier applied exactly as the blocks instantiate it: the
// depthwise-separable path runs at alpha*d_i and stays linear in alpha;
// the standard convolution scales both ends, hence roughly alpha^2.
uint64_t cost_dwsep_alpha(uint64_t h, uint64_t w, uint64_t d_i, uint64_t d_j, uint64_t k,
                          double alpha);
uint64_t cost_std_conv_alpha(uint64_t h, uint64_t w, uint64_t d_i, uint64_t d_j, uint64_t k,
                             double alpha);

struct CostRow {
    std::string name;
    int out_c = 0, out_h = 0, out_w = 0;
    uint64_t params = 0;
    uint64_t macs = 0;
};

struct CostReport {
    std::string model_name;
    std::vector<CostRow> rows;
    uint64_t total_params = 0;
    uint64_t total_macs = 0;
    // What the counts include, so deviations from published tables are
    // explainable.
    std::string params_note;

    uint64_t flops(FlopsConvention conv) const {
        return conv == FlopsConvention::MACs ? total_macs : 2 * total_macs;
    }

    std::string to_table(FlopsConvention conv = FlopsConvention::MACs) const;
    std::string to_csv(FlopsConvention conv = FlopsConvention::MACs) const;
};

// Per-layer walk of the built topology using the closed forms. Parameter
// counts include conv weights, BN gamma/beta and the classifier weight and
// bias. MAC totals include BN, ReLU, fusion/residual additions and pooling
// at one op per element.
CostReport analyze_network(const NetworkConfig& cfg, int input_h = 32, int input_w = 32);

// Oracle for analyze_network: sums element counts of every trainable tensor
// of an instantiated model.
uint64_t count_params_enumerated(Network<float>& model);

}  // namespace pydnet
