#pragma once

#include <memory>

#include "pydnet/layers.hpp"

namespace pydnet {

enum class BlockKind { StdConv, DWConv, PydAdd, PydConcat };

inline const char* block_kind_name(BlockKind k) {
    switch (k) {
        case BlockKind::StdConv: return "StdConv";
        case BlockKind::DWConv: return "DWConv";
        case BlockKind::PydAdd: return "PydAdd";
        case BlockKind::PydConcat: return "PydConcat";
    }
    return "?";
}

// One residual block's recipe: main-conv variant, channel transform
// d_i -> d_j, width multiplier and stride.
struct BlockConfig {
    BlockKind kind = BlockKind::DWConv;
    int in_channels = 0;   // d_i
    int out_channels = 0;  // d_j
    double alpha = 1.0;
    int stride = 1;
    std::vector<int> kernels{3, 5, 7};  // pyramid kinds only

    // round(alpha * d_i), half away from zero. On the stock grids the
    // product is always an integer so rounding never fires.
    int bottleneck_width() const {
        const long long b = std::llround(alpha * in_channels);
        if (b < 1)
            throw std::invalid_argument("BlockConfig: alpha*d_i rounds to zero");
        return static_cast<int>(b);
    }

    void validate() const {
        if (in_channels < 1 || out_channels < 1)
            throw std::invalid_argument("BlockConfig: channel counts must be >= 1");
        if (alpha <= 0.0) throw std::invalid_argument("BlockConfig: alpha must be positive");
        if (stride != 1 && stride != 2)
            throw std::invalid_argument("BlockConfig: stride must be 1 or 2");
        if (stride == 1 && in_channels != out_channels)
            throw std::invalid_argument("BlockConfig: identity shortcut requires d_i == d_j");
        (void)bottleneck_width();
    }
};

// Pre-activation bottleneck residual block:
//   [BN, ReLU, 1x1 d_i->b] -> [BN, ReLU, main conv at width b, stride s]
//   -> [BN, ReLU, 1x1 -> d_j], summed with the shortcut.
// b = round(alpha*d_i). The Concat pyramid widens the main output to M*b
// before the final 1x1. Stride-2 blocks carry BN + 1x1(s=2) on the
// shortcut; stride-1 blocks use the identity. No ReLU after the sum.
template <typename T>
class ResidualBlock {
public:
    ResidualBlock(const BlockConfig& cfg, SeededRng& rng) : cfg_(cfg) {
        cfg_.validate();
        const int b = cfg_.bottleneck_width();
        bn1_ = std::make_unique<BatchNormLayer<T>>(cfg_.in_channels);
        reduce_ = std::make_unique<Conv2dLayer<T>>(1, 1, cfg_.in_channels, b, rng);
        bn2_ = std::make_unique<BatchNormLayer<T>>(b);
        int expand_in = b;
        switch (cfg_.kind) {
            case BlockKind::StdConv:
                main_conv_ = std::make_unique<Conv2dLayer<T>>(3, cfg_.stride, b, b, rng);
                break;
            case BlockKind::DWConv:
                main_dw_ = std::make_unique<DepthwiseLayer<T>>(3, cfg_.stride, b, rng);
                break;
            case BlockKind::PydAdd:
            case BlockKind::PydConcat: {
                PyramidSpec pyr;
                pyr.kernels = cfg_.kernels;
                pyr.fusion =
                    cfg_.kind == BlockKind::PydAdd ? Fusion::Add : Fusion::Concat;
                main_pyr_ = std::make_unique<PyramidDepthwiseLayer<T>>(pyr, cfg_.stride, b, rng);
                expand_in = main_pyr_->out_channels(b);
                break;
            }
        }
        bn3_ = std::make_unique<BatchNormLayer<T>>(expand_in);
        expand_ = std::make_unique<Conv2dLayer<T>>(1, 1, expand_in, cfg_.out_channels, rng);
        if (cfg_.stride == 2) {
            shortcut_bn_ = std::make_unique<BatchNormLayer<T>>(cfg_.in_channels);
            shortcut_conv_ = std::make_unique<Conv2dLayer<T>>(1, 2, cfg_.in_channels,
                                                              cfg_.out_channels, rng);
        }
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        Tensor<T> main = bn1_->forward(x, mode);
        main = relu1_.forward(main);
        main = reduce_->forward(main);
        main = bn2_->forward(main, mode);
        main = relu2_.forward(main);
        main = forward_main_conv(main);
        main = bn3_->forward(main, mode);
        main = relu3_.forward(main);
        main = expand_->forward(main);
        if (cfg_.stride == 2) {
            Tensor<T> sc = shortcut_bn_->forward(x, mode);
            sc = shortcut_conv_->forward(sc);
            return elementwise_add(main, sc);
        }
        return elementwise_add(main, x);
    }

    // Returns d(loss)/d(block input); weight gradients accumulate in place.
    Tensor<T> backward(const Tensor<T>& gout) {
        Tensor<T> g = expand_->backward(gout);
        g = relu3_.backward(g);
        g = bn3_->backward(g);
        g = backward_main_conv(g);
        g = relu2_.backward(g);
        g = bn2_->backward(g);
        g = reduce_->backward(g);
        g = relu1_.backward(g);
        g = bn1_->backward(g);
        if (cfg_.stride == 2) {
            Tensor<T> gsc = shortcut_conv_->backward(gout);
            gsc = shortcut_bn_->backward(gsc);
            return elementwise_add(g, gsc);
        }
        return elementwise_add(g, gout);
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        bn1_->collect_params(prefix + ".bn1", out);
        reduce_->collect_params(prefix + ".reduce", out);
        bn2_->collect_params(prefix + ".bn2", out);
        if (main_conv_) main_conv_->collect_params(prefix + ".conv", out);
        if (main_dw_) main_dw_->collect_params(prefix + ".dw", out);
        if (main_pyr_) main_pyr_->collect_params(prefix + ".pyd", out);
        bn3_->collect_params(prefix + ".bn3", out);
        expand_->collect_params(prefix + ".expand", out);
        if (shortcut_bn_) shortcut_bn_->collect_params(prefix + ".sc_bn", out);
        if (shortcut_conv_) shortcut_conv_->collect_params(prefix + ".sc_conv", out);
    }

    void collect_state(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        bn1_->collect_state(prefix + ".bn1", out);
        bn2_->collect_state(prefix + ".bn2", out);
        bn3_->collect_state(prefix + ".bn3", out);
        if (shortcut_bn_) shortcut_bn_->collect_state(prefix + ".sc_bn", out);
    }

    const BlockConfig& config() const { return cfg_; }

    // Direct access for structural tests.
    Conv2dLayer<T>* expand_conv() { return expand_.get(); }
    DepthwiseLayer<T>* main_dw() { return main_dw_.get(); }
    PyramidDepthwiseLayer<T>* main_pyramid() { return main_pyr_.get(); }

private:
    Tensor<T> forward_main_conv(const Tensor<T>& x) {
        if (main_conv_) return main_conv_->forward(x);
        if (main_dw_) return main_dw_->forward(x);
        return main_pyr_->forward(x);
    }
    Tensor<T> backward_main_conv(const Tensor<T>& g) {
        if (main_conv_) return main_conv_->backward(g);
        if (main_dw_) return main_dw_->backward(g);
        return main_pyr_->backward(g);
    }

    BlockConfig cfg_;
    std::unique_ptr<BatchNormLayer<T>> bn1_, bn2_, bn3_;
    std::unique_ptr<Conv2dLayer<T>> reduce_, expand_;
    std::unique_ptr<Conv2dLayer<T>> main_conv_;
    std::unique_ptr<DepthwiseLayer<T>> main_dw_;
    std::unique_ptr<PyramidDepthwiseLayer<T>> main_pyr_;
    std::unique_ptr<BatchNormLayer<T>> shortcut_bn_;
    std::unique_ptr<Conv2dLayer<T>> shortcut_conv_;
    ReluLayer<T> relu1_, relu2_, relu3_;
};

template <typename T>
std::unique_ptr<ResidualBlock<T>> build_block(const BlockConfig& cfg, SeededRng& rng) {
    return std::make_unique<ResidualBlock<T>>(cfg, rng);
}

}  // namespace pydnet
