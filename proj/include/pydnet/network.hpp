#pragma once

#include <array>

#include "pydnet/blocks.hpp"

namespace pydnet {

// Full network description: stem 3x3 conv into stage_channels[0], three
// stages of residual blocks, BN+ReLU, global average pooling, classifier.
// Stage 1 runs at stride 1 throughout; stages 2 and 3 open with one
// stride-2 block. blocks_per_stage 3 gives the 29-layer net, 6 the
// 56-layer one.
struct NetworkConfig {
    BlockKind kind = BlockKind::DWConv;
    int blocks_per_stage = 3;
    std::array<int, 3> stage_channels{32, 64, 128};
    int classes = 10;
    double alpha = 1.0;
    std::vector<int> kernels{3, 5, 7};

    void validate() const {
        if (blocks_per_stage < 1)
            throw std::invalid_argument("NetworkConfig: blocks_per_stage must be >= 1");
        if (classes < 2) throw std::invalid_argument("NetworkConfig: classes must be >= 2");
        if (alpha <= 0.0) throw std::invalid_argument("NetworkConfig: alpha must be positive");
        for (int c : stage_channels)
            if (c < 1) throw std::invalid_argument("NetworkConfig: stage channels must be >= 1");
    }

    std::vector<BlockConfig> block_configs() const {
        validate();
        std::vector<BlockConfig> out;
        int prev = stage_channels[0];
        for (int stage = 0; stage < 3; ++stage) {
            for (int b = 0; b < blocks_per_stage; ++b) {
                BlockConfig bc;
                bc.kind = kind;
                bc.alpha = alpha;
                bc.kernels = kernels;
                bc.in_channels = (b == 0) ? prev : stage_channels[stage];
                bc.out_channels = stage_channels[stage];
                bc.stride = (b == 0 && stage > 0) ? 2 : 1;
                out.push_back(bc);
            }
            prev = stage_channels[stage];
        }
        return out;
    }
};

// Layer-counting convention behind the Net-29 / Net-56 names: stem +
// three weighted convolutions per block + classifier.
inline int nominal_depth(const NetworkConfig& cfg) {
    cfg.validate();
    return 1 + 3 * cfg.blocks_per_stage * 3 + 1;
}

template <typename T>
class Network {
public:
    Network(const NetworkConfig& cfg, SeededRng& rng) : cfg_(cfg) {
        cfg_.validate();
        stem_ = std::make_unique<Conv2dLayer<T>>(3, 1, 3, cfg_.stage_channels[0], rng);
        for (const BlockConfig& bc : cfg_.block_configs())
            blocks_.push_back(std::make_unique<ResidualBlock<T>>(bc, rng));
        final_bn_ = std::make_unique<BatchNormLayer<T>>(cfg_.stage_channels[2]);
        fc_ = std::make_unique<DenseLayer<T>>(cfg_.stage_channels[2], cfg_.classes, rng);
    }

    // Input (n, 3, h, w) -> logits (n, classes, 1, 1).
    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        Tensor<T> y = stem_->forward(x);
        for (auto& block : blocks_) y = block->forward(y, mode);
        y = final_bn_->forward(y, mode);
        y = final_relu_.forward(y);
        y = pool_.forward(y);
        return fc_->forward(y);
    }

    // dlogits -> d(input); parameter gradients accumulate in the layers.
    Tensor<T> backward(const Tensor<T>& dlogits) {
        Tensor<T> g = fc_->backward(dlogits);
        g = pool_.backward(g);
        g = final_relu_.backward(g);
        g = final_bn_->backward(g);
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = (*it)->backward(g);
        return stem_->backward(g);
    }

    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> out;
        stem_->collect_params("stem", out);
        for (size_t i = 0; i < blocks_.size(); ++i)
            blocks_[i]->collect_params("block" + std::to_string(i), out);
        final_bn_->collect_params("final_bn", out);
        fc_->collect_params("fc", out);
        return out;
    }

    // Non-trainable persistent state (BN running statistics).
    std::vector<ParamRef<T>> state() {
        std::vector<ParamRef<T>> out;
        for (size_t i = 0; i < blocks_.size(); ++i)
            blocks_[i]->collect_state("block" + std::to_string(i), out);
        final_bn_->collect_state("final_bn", out);
        return out;
    }

    void zero_grad() {
        for (auto& p : params())
            if (p.grad) std::fill(p.grad, p.grad + p.size, T(0));
    }

    const NetworkConfig& config() const { return cfg_; }
    std::vector<std::unique_ptr<ResidualBlock<T>>>& blocks() { return blocks_; }
    Conv2dLayer<T>* stem() { return stem_.get(); }

private:
    NetworkConfig cfg_;
    std::unique_ptr<Conv2dLayer<T>> stem_;
    std::vector<std::unique_ptr<ResidualBlock<T>>> blocks_;
    std::unique_ptr<BatchNormLayer<T>> final_bn_;
    ReluLayer<T> final_relu_;
    GlobalAvgPoolLayer<T> pool_;
    std::unique_ptr<DenseLayer<T>> fc_;
};

template <typename T>
std::unique_ptr<Network<T>> build_network(const NetworkConfig& cfg, SeededRng& rng) {
    return std::make_unique<Network<T>>(cfg, rng);
}

}  // namespace pydnet
