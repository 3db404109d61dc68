#include "pydnet/cost.hpp"

#include <cstdio>
#include <sstream>

#include "pydnet/model_names.hpp"

namespace pydnet {

namespace {

void require_positive(std::initializer_list<uint64_t> dims) {
    for (uint64_t d : dims)
        if (d == 0) throw std::invalid_argument("cost model: zero dimension rejected");
}

uint64_t sum_k2(const std::vector<int>& kernels) {
    if (kernels.empty()) throw std::invalid_argument("cost model: empty kernel set");
    uint64_t s = 0;
    for (int k : kernels) {
        if (k < 1) throw std::invalid_argument("cost model: bad kernel size");
        s += static_cast<uint64_t>(k) * k;
    }
    return s;
}

}  // namespace

uint64_t cost_std_conv(uint64_t h, uint64_t w, uint64_t d_i, uint64_t d_j, uint64_t k) {
    require_positive({h, w, d_i, d_j, k});
    return h * w * d_i * d_j * k * k;
}

uint64_t cost_dwsep(uint64_t h, uint64_t w, uint64_t d_i, uint64_t d_j, uint64_t k) {
    require_positive({h, w, d_i, d_j, k});
    return h * w * d_i * (k * k + d_j);
}

uint64_t cost_pyd_add(uint64_t h, uint64_t w, uint64_t d_i, uint64_t d_j,
                      const std::vector<int>& kernels) {
    require_positive({h, w, d_i, d_j});
    const uint64_t m = kernels.size();
    return h * w * d_i * (m - 1 + sum_k2(kernels) + d_j);
}

uint64_t cost_pyd_concat(uint64_t h, uint64_t w, uint64_t d_i, uint64_t d_j,
                         const std::vector<int>& kernels) {
    require_positive({h, w, d_i, d_j});
    const uint64_t m = kernels.size();
    return h * w * d_i * (sum_k2(kernels) + m * d_j);
}

Rational cost_ratio_std_over_dwsep(uint64_t k, uint64_t d_j) {
    require_positive({k, d_j});
    return Rational{k * k * d_j, k * k + d_j};
}

uint64_t scaled_channels(double alpha, uint64_t d) {
    if (alpha <= 0.0) throw std::invalid_argument("cost model: alpha must be positive");
    const long long s = std::llround(alpha * static_cast<double>(d));
    if (s < 1) throw std::invalid_argument("cost model: alpha*d rounds to zero");
    return static_cast<uint64_t>(s);
}

uint64_t cost_dwsep_alpha(uint64_t h, uint64_t w, uint64_t d_i, uint64_t d_j, uint64_t k,
                          double alpha) {
    return cost_dwsep(h, w, scaled_channels(alpha, d_i), d_j, k);
}

uint64_t cost_std_conv_alpha(uint64_t h, uint64_t w, uint64_t d_i, uint64_t d_j, uint64_t k,
                             double alpha) {
    return cost_std_conv(h, w, scaled_channels(alpha, d_i), scaled_channels(alpha, d_j), k);
}

namespace {

struct Walk {
    CostReport report;
    void row(const std::string& name, int c, int h, int w, uint64_t params, uint64_t macs) {
        report.rows.push_back({name, c, h, w, params, macs});
        report.total_params += params;
        report.total_macs += macs;
    }
    void bn_relu(const std::string& prefix, int c, int h, int w) {
        const uint64_t hw = static_cast<uint64_t>(h) * w;
        row(prefix + ".bn", c, h, w, 2ull * c, hw * c);
        row(prefix + ".relu", c, h, w, 0, hw * c);
    }
};

}  // namespace

CostReport analyze_network(const NetworkConfig& cfg, int input_h, int input_w) {
    cfg.validate();
    Walk walk;
    walk.report.model_name = canonical_model_name(cfg);
    walk.report.params_note =
        "params: conv weights (no bias), BN gamma/beta, classifier weight+bias; "
        "macs: convs plus BN, ReLU, additions and pooling at one op per element";

    int h = input_h, w = input_w;
    const int c0 = cfg.stage_channels[0];
    walk.row("stem", c0, h, w, 9ull * 3 * c0, cost_std_conv(h, w, 3, c0, 3));

    const auto blocks = cfg.block_configs();
    for (size_t i = 0; i < blocks.size(); ++i) {
        const BlockConfig& bc = blocks[i];
        const std::string p = "block" + std::to_string(i);
        const uint64_t d_i = bc.in_channels, d_j = bc.out_channels;
        const uint64_t b = bc.bottleneck_width();
        const int ho = h / bc.stride, wo = w / bc.stride;
        const uint64_t hw_in = static_cast<uint64_t>(h) * w;
        const uint64_t hw_out = static_cast<uint64_t>(ho) * wo;

        walk.bn_relu(p + ".pre1", static_cast<int>(d_i), h, w);
        walk.row(p + ".reduce", static_cast<int>(b), h, w, d_i * b,
                 cost_std_conv(h, w, d_i, b, 1));
        walk.bn_relu(p + ".pre2", static_cast<int>(b), h, w);

        uint64_t expand_in = b;
        switch (bc.kind) {
            case BlockKind::StdConv:
                walk.row(p + ".conv3x3", static_cast<int>(b), ho, wo, b * b * 9,
                         cost_std_conv(ho, wo, b, b, 3));
                break;
            case BlockKind::DWConv:
                walk.row(p + ".dw3x3", static_cast<int>(b), ho, wo, b * 9, hw_out * b * 9);
                break;
            case BlockKind::PydAdd: {
                const uint64_t m = bc.kernels.size();
                uint64_t k2 = 0, wparams = 0;
                for (int k : bc.kernels) {
                    k2 += static_cast<uint64_t>(k) * k;
                    wparams += b * k * k;
                }
                walk.row(p + ".pyd_add", static_cast<int>(b), ho, wo, wparams,
                         hw_out * b * (k2 + m - 1));
                break;
            }
            case BlockKind::PydConcat: {
                const uint64_t m = bc.kernels.size();
                uint64_t k2 = 0, wparams = 0;
                for (int k : bc.kernels) {
                    k2 += static_cast<uint64_t>(k) * k;
                    wparams += b * k * k;
                }
                expand_in = m * b;
                walk.row(p + ".pyd_concat", static_cast<int>(expand_in), ho, wo, wparams,
                         hw_out * b * k2);
                break;
            }
        }

        walk.bn_relu(p + ".pre3", static_cast<int>(expand_in), ho, wo);
        walk.row(p + ".expand", static_cast<int>(d_j), ho, wo, expand_in * d_j,
                 cost_std_conv(ho, wo, expand_in, d_j, 1));
        if (bc.stride == 2) {
            walk.row(p + ".sc_bn", static_cast<int>(d_i), h, w, 2 * d_i, hw_in * d_i);
            walk.row(p + ".sc_conv", static_cast<int>(d_j), ho, wo, d_i * d_j,
                     cost_std_conv(ho, wo, d_i, d_j, 1));
        }
        walk.row(p + ".add", static_cast<int>(d_j), ho, wo, 0, hw_out * d_j);
        h = ho;
        w = wo;
    }

    const int c2 = cfg.stage_channels[2];
    walk.bn_relu("final", c2, h, w);
    walk.row("pool", c2, 1, 1, 0, static_cast<uint64_t>(h) * w * c2);
    walk.row("fc", cfg.classes, 1, 1,
             static_cast<uint64_t>(c2) * cfg.classes + cfg.classes,
             static_cast<uint64_t>(c2) * cfg.classes + cfg.classes);
    return walk.report;
}

uint64_t count_params_enumerated(Network<float>& model) {
    uint64_t total = 0;
    for (const auto& p : model.params()) total += p.size;
    return total;
}

namespace {

std::string format_shape(const CostRow& r) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%dx%dx%d", r.out_h, r.out_w, r.out_c);
    return buf;
}

}  // namespace

std::string CostReport::to_table(FlopsConvention conv) const {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof(line), "%-22s %-12s %12s %14s\n", "layer", "out_shape",
                  "params", conv == FlopsConvention::MACs ? "macs" : "flops(2xmacs)");
    os << model_name << "\n" << line;
    for (const CostRow& r : rows) {
        const uint64_t m = conv == FlopsConvention::MACs ? r.macs : 2 * r.macs;
        std::snprintf(line, sizeof(line), "%-22s %-12s %12llu %14llu\n", r.name.c_str(),
                      format_shape(r).c_str(), static_cast<unsigned long long>(r.params),
                      static_cast<unsigned long long>(m));
        os << line;
    }
    std::snprintf(line, sizeof(line), "%-22s %-12s %12llu %14llu\n", "total", "",
                  static_cast<unsigned long long>(total_params),
                  static_cast<unsigned long long>(flops(conv)));
    os << line;
    os << "note: " << params_note << "\n";
    return os.str();
}

std::string CostReport::to_csv(FlopsConvention conv) const {
    std::ostringstream os;
    os << "layer,out_shape,params," << (conv == FlopsConvention::MACs ? "macs" : "flops") << "\n";
    for (const CostRow& r : rows) {
        const uint64_t m = conv == FlopsConvention::MACs ? r.macs : 2 * r.macs;
        os << r.name << "," << format_shape(r) << "," << r.params << "," << m << "\n";
    }
    os << "total,," << total_params << "," << flops(conv) << "\n";
    return os.str();
}

}  // namespace pydnet
