#pragma once

#include <functional>
#include <string>

#include "pydnet/ops.hpp"

// Parameterized forward/backward units. Each layer owns its weights and
// gradient accumulators, caches what its backward needs (documented per
// layer) and exposes the tensors through collect_params/collect_state so
// the optimizer, the checkpointer and the parameter counter share one view.

namespace pydnet {

// Flat view of one trainable tensor (or one piece of persistent state).
template <typename T>
struct ParamRef {
    std::string name;
    T* value = nullptr;
    T* grad = nullptr;  // null for non-trainable state (BN running stats)
    size_t size = 0;
    std::vector<int> dims;
};

template <typename T>
Tensor<T> xavier_conv_weight(int d_j, int d_i, int k, int fan_in, int fan_out, SeededRng& rng) {
    return xavier_uniform_init<T>(d_j, d_i, k, k, fan_in, fan_out, rng);
}

// Standard convolution (covers pointwise with k = 1). Backward caches the
// forward input.
template <typename T>
class Conv2dLayer {
public:
    Conv2dLayer(int k, int stride, int d_i, int d_j, SeededRng& rng)
        : spec_(ConvSpec::make(k, stride, d_i, d_j)),
          weight_(xavier_conv_weight<T>(d_j, d_i, k, d_i * k * k, d_j * k * k, rng)),
          dweight_(d_j, d_i, k, k) {}

    Tensor<T> forward(const Tensor<T>& x) {
        input_ = x;
        return conv2d_fwd(x, weight_, spec_);
    }

    Tensor<T> backward(const Tensor<T>& gout) {
        if (input_.empty()) throw std::logic_error("Conv2dLayer: backward before forward");
        Tensor<T> dx;
        conv2d_bwd(input_, weight_, spec_, gout, dx, dweight_);
        return dx;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".weight", weight_.data(), dweight_.data(), weight_.numel(),
                       {weight_.n(), weight_.c(), weight_.h(), weight_.w()}});
    }

    const ConvSpec& spec() const { return spec_; }
    Tensor<T>& weight() { return weight_; }
    Tensor<T>& weight_grad() { return dweight_; }

private:
    ConvSpec spec_;
    Tensor<T> weight_, dweight_;
    Tensor<T> input_;
};

template <typename T>
class DepthwiseLayer {
public:
    DepthwiseLayer(int k, int stride, int channels, SeededRng& rng)
        : spec_(ConvSpec::make(k, stride, channels, channels)),
          weight_(xavier_uniform_init<T>(channels, 1, k, k, k * k, k * k, rng)),
          dweight_(channels, 1, k, k) {}

    Tensor<T> forward(const Tensor<T>& x) {
        input_ = x;
        return depthwise_fwd(x, weight_, spec_);
    }

    Tensor<T> backward(const Tensor<T>& gout) {
        if (input_.empty()) throw std::logic_error("DepthwiseLayer: backward before forward");
        Tensor<T> dx;
        depthwise_bwd(input_, weight_, spec_, gout, dx, dweight_);
        return dx;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".weight", weight_.data(), dweight_.data(), weight_.numel(),
                       {weight_.n(), weight_.c(), weight_.h(), weight_.w()}});
    }

    Tensor<T>& weight() { return weight_; }

private:
    ConvSpec spec_;
    Tensor<T> weight_, dweight_;
    Tensor<T> input_;
};

// M depthwise branches over the pyramid kernel set, Add or Concat fusion.
template <typename T>
class PyramidDepthwiseLayer {
public:
    PyramidDepthwiseLayer(const PyramidSpec& pyr, int stride, int channels, SeededRng& rng)
        : pyr_(pyr), stride_(stride) {
        pyr_.validate();
        for (int k : pyr_.kernels) {
            weights_.push_back(xavier_uniform_init<T>(channels, 1, k, k, k * k, k * k, rng));
            dweights_.emplace_back(channels, 1, k, k);
        }
    }

    Tensor<T> forward(const Tensor<T>& x) {
        input_ = x;
        return pyramid_dw_fwd(x, weights_, pyr_, stride_);
    }

    Tensor<T> backward(const Tensor<T>& gout) {
        if (input_.empty()) throw std::logic_error("PyramidDepthwiseLayer: backward before forward");
        Tensor<T> dx;
        pyramid_dw_bwd(input_, weights_, pyr_, stride_, gout, dx, dweights_);
        return dx;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        for (size_t m = 0; m < weights_.size(); ++m)
            out.push_back({prefix + ".k" + std::to_string(pyr_.kernels[m]) + ".weight",
                           weights_[m].data(), dweights_[m].data(), weights_[m].numel(),
                           {weights_[m].n(), weights_[m].c(), weights_[m].h(), weights_[m].w()}});
    }

    int out_channels(int in_channels) const {
        return pyr_.fusion == Fusion::Concat ? pyr_.branches() * in_channels : in_channels;
    }

    std::vector<Tensor<T>>& weights() { return weights_; }
    const PyramidSpec& spec() const { return pyr_; }

private:
    PyramidSpec pyr_;
    int stride_;
    std::vector<Tensor<T>> weights_, dweights_;
    Tensor<T> input_;
};

// Backward caches the normalized input and the batch inverse std.
template <typename T>
class BatchNormLayer {
public:
    explicit BatchNormLayer(int channels)
        : state_(channels), dgamma_(channels, T(0)), dbeta_(channels, T(0)) {}

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        return batchnorm_fwd(x, state_, mode, &cache_);
    }

    Tensor<T> backward(const Tensor<T>& gout) {
        return batchnorm_bwd(gout, state_, cache_, dgamma_, dbeta_);
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        const int c = state_.channels();
        out.push_back({prefix + ".gamma", state_.gamma.data(), dgamma_.data(),
                       state_.gamma.size(), {c}});
        out.push_back({prefix + ".beta", state_.beta.data(), dbeta_.data(),
                       state_.beta.size(), {c}});
    }

    void collect_state(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        const int c = state_.channels();
        out.push_back({prefix + ".running_mean", state_.running_mean.data(), nullptr,
                       state_.running_mean.size(), {c}});
        out.push_back({prefix + ".running_var", state_.running_var.data(), nullptr,
                       state_.running_var.size(), {c}});
    }

    BatchNormState<T>& state() { return state_; }

private:
    BatchNormState<T> state_;
    BatchNormCache<T> cache_;
    std::vector<T> dgamma_, dbeta_;
};

template <typename T>
class ReluLayer {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        input_ = x;
        return relu_fwd(x);
    }
    Tensor<T> backward(const Tensor<T>& gout) {
        if (input_.empty()) throw std::logic_error("ReluLayer: backward before forward");
        return relu_bwd(input_, gout);
    }

private:
    Tensor<T> input_;
};

template <typename T>
class GlobalAvgPoolLayer {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        input_ = x;
        return global_avg_pool(x);
    }
    Tensor<T> backward(const Tensor<T>& gout) {
        if (input_.empty()) throw std::logic_error("GlobalAvgPoolLayer: backward before forward");
        return global_avg_pool_bwd(input_, gout);
    }

private:
    Tensor<T> input_;
};

// Classifier head: weight (classes, features), zero-initialized bias.
template <typename T>
class DenseLayer {
public:
    DenseLayer(int features, int classes, SeededRng& rng)
        : weight_(xavier_uniform_init<T>(classes, features, 1, 1, features, classes, rng)),
          bias_(classes, 1, 1, 1),
          dweight_(classes, features, 1, 1),
          dbias_(classes, 1, 1, 1) {}

    Tensor<T> forward(const Tensor<T>& x) {
        input_ = x;
        return fully_connected(x, weight_, bias_);
    }

    Tensor<T> backward(const Tensor<T>& gout) {
        if (input_.empty()) throw std::logic_error("DenseLayer: backward before forward");
        Tensor<T> dx;
        fully_connected_bwd(input_, weight_, gout, dx, dweight_, dbias_);
        return dx;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".weight", weight_.data(), dweight_.data(), weight_.numel(),
                       {weight_.n(), weight_.c()}});
        out.push_back({prefix + ".bias", bias_.data(), dbias_.data(), bias_.numel(),
                       {bias_.n()}});
    }

private:
    Tensor<T> weight_, bias_, dweight_, dbias_;
    Tensor<T> input_;
};

}  // namespace pydnet
