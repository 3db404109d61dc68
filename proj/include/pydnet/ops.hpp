#pragma once

#include <algorithm>
#include <optional>
#include <utility>

#include "pydnet/tensor.hpp"

// Layer primitives: forward and reverse-mode backward for standard,
// depthwise, pointwise and pyramid-depthwise convolution, batch norm,
// relu, global average pooling, the classifier head and the loss.
//
// All kernels are sequential; every accumulation runs in a fixed order
// (kernel window order for direct loops, the k-index order inside the
// GEMMs), so results are bit-identical from run to run.

namespace pydnet {

enum class Mode { Train, Eval };

struct ConvSpec {
    int kernel = 1;        // square, odd
    int stride = 1;        // 1 or 2
    int pad = 0;           // always (kernel - 1) / 2
    int in_channels = 0;   // d_i
    int out_channels = 0;  // d_j

    static ConvSpec make(int kernel, int stride, int in_channels, int out_channels) {
        if (kernel < 1 || kernel % 2 == 0)
            throw std::invalid_argument("ConvSpec: kernel must be odd and >= 1");
        if (stride != 1 && stride != 2)
            throw std::invalid_argument("ConvSpec: stride must be 1 or 2");
        if (in_channels < 1 || out_channels < 1)
            throw std::invalid_argument("ConvSpec: channel counts must be >= 1");
        ConvSpec s;
        s.kernel = kernel;
        s.stride = stride;
        s.pad = (kernel - 1) / 2;
        s.in_channels = in_channels;
        s.out_channels = out_channels;
        return s;
    }

    int out_dim(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
};

struct PyramidSpec {
    std::vector<int> kernels{3, 5, 7};  // strictly increasing, odd
    enum class Fusion { Add, Concat } fusion = Fusion::Add;

    int branches() const { return static_cast<int>(kernels.size()); }

    void validate() const {
        if (kernels.empty())
            throw std::invalid_argument("PyramidSpec: empty kernel set");
        for (size_t i = 0; i < kernels.size(); ++i) {
            if (kernels[i] < 1 || kernels[i] % 2 == 0)
                throw std::invalid_argument("PyramidSpec: kernels must be odd");
            if (i > 0 && kernels[i] <= kernels[i - 1])
                throw std::invalid_argument("PyramidSpec: kernels must be strictly increasing");
        }
    }
};

using Fusion = PyramidSpec::Fusion;

namespace detail {

// C(m x n) = A(m x k) * B(k x n), all row-major. accumulate=false zeroes C
// first. ikj order keeps the inner loop contiguous and the per-element
// reduction order fixed.
template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate) {
    if (!accumulate)
        std::fill(c, c + static_cast<size_t>(m) * n, T(0));
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<size_t>(i) * n;
        const T* arow = a + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const T av = arow[kk];
            if (av == T(0)) continue;
            const T* brow = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C(m x n) += A(m x k) * B(n x k)^T : rows of A dotted with rows of B.
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<size_t>(i) * k;
        T* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + static_cast<size_t>(j) * k;
            T acc = T(0);
            for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] += acc;
        }
    }
}

// C(m x n) = A(k x m)^T * B(k x n).
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n) {
    std::fill(c, c + static_cast<size_t>(m) * n, T(0));
    for (int kk = 0; kk < k; ++kk) {
        const T* arow = a + static_cast<size_t>(kk) * m;
        const T* brow = b + static_cast<size_t>(kk) * n;
        for (int i = 0; i < m; ++i) {
            const T av = arow[i];
            if (av == T(0)) continue;
            T* crow = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// Unfold one image into a (d_i*k*k) x (h_out*w_out) patch matrix,
// rows ordered (c, ky, kx), zero padding outside the input.
template <typename T>
void im2col(const Tensor<T>& x, int img, const ConvSpec& spec, T* cols) {
    const int h = x.h(), w = x.w();
    const int ho = spec.out_dim(h), wo = spec.out_dim(w);
    const int k = spec.kernel, s = spec.stride, p = spec.pad;
    size_t row = 0;
    for (int c = 0; c < x.c(); ++c) {
        const T* plane = x.plane(img, c);
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row) {
                T* dst = cols + row * static_cast<size_t>(ho) * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * s - p + ky;
                    if (iy < 0 || iy >= h) {
                        for (int ox = 0; ox < wo; ++ox) dst[oy * wo + ox] = T(0);
                        continue;
                    }
                    const T* src = plane + static_cast<size_t>(iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * s - p + kx;
                        dst[oy * wo + ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

// Scatter-add a patch matrix back into an image gradient (inverse of im2col).
template <typename T>
void col2im_acc(const T* cols, int img, const ConvSpec& spec, Tensor<T>& dx) {
    const int h = dx.h(), w = dx.w();
    const int ho = spec.out_dim(h), wo = spec.out_dim(w);
    const int k = spec.kernel, s = spec.stride, p = spec.pad;
    size_t row = 0;
    for (int c = 0; c < dx.c(); ++c) {
        T* plane = dx.plane(img, c);
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row) {
                const T* src = cols + row * static_cast<size_t>(ho) * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * s - p + ky;
                    if (iy < 0 || iy >= h) continue;
                    T* dst = plane + static_cast<size_t>(iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * s - p + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[oy * wo + ox];
                    }
                }
            }
        }
    }
}

inline bool is_pointwise(const ConvSpec& spec) {
    return spec.kernel == 1 && spec.stride == 1 && spec.pad == 0;
}

}  // namespace detail

// Standard cross-correlation with zero padding, no bias (BN supplies the
// offset). weight is (d_j, d_i, k, k).
template <typename T>
Tensor<T> conv2d_fwd(const Tensor<T>& x, const Tensor<T>& weight, const ConvSpec& spec) {
    if (x.c() != spec.in_channels)
        throw std::invalid_argument("conv2d_fwd: input channels " + std::to_string(x.c()) +
                                    " != spec d_i " + std::to_string(spec.in_channels));
    if (weight.n() != spec.out_channels || weight.c() != spec.in_channels ||
        weight.h() != spec.kernel || weight.w() != spec.kernel)
        throw std::invalid_argument("conv2d_fwd: weight shape " + weight.shape_str() +
                                    " does not match spec");
    const int ho = spec.out_dim(x.h()), wo = spec.out_dim(x.w());
    const size_t hw = static_cast<size_t>(ho) * wo;
    Tensor<T> out(x.n(), spec.out_channels, ho, wo);

    if (detail::is_pointwise(spec)) {
        for (int img = 0; img < x.n(); ++img)
            detail::gemm(weight.data(), x.plane(img, 0), out.plane(img, 0),
                         spec.out_channels, spec.in_channels, static_cast<int>(hw), false);
        return out;
    }

    const int patch = spec.in_channels * spec.kernel * spec.kernel;
    std::vector<T> cols(static_cast<size_t>(patch) * hw);
    for (int img = 0; img < x.n(); ++img) {
        detail::im2col(x, img, spec, cols.data());
        detail::gemm(weight.data(), cols.data(), out.plane(img, 0),
                     spec.out_channels, patch, static_cast<int>(hw), false);
    }
    return out;
}

// Gradients of conv2d_fwd. Forward caches nothing beyond the input tensor,
// which the caller retains; the patch matrix is rebuilt here.
template <typename T>
void conv2d_bwd(const Tensor<T>& x, const Tensor<T>& weight, const ConvSpec& spec,
                const Tensor<T>& gout, Tensor<T>& dx, Tensor<T>& dweight) {
    const int ho = spec.out_dim(x.h()), wo = spec.out_dim(x.w());
    if (gout.n() != x.n() || gout.c() != spec.out_channels || gout.h() != ho || gout.w() != wo)
        throw std::invalid_argument("conv2d_bwd: upstream gradient shape mismatch");
    const size_t hw = static_cast<size_t>(ho) * wo;
    dx = Tensor<T>(x.n(), x.c(), x.h(), x.w());
    if (!dweight.same_shape(weight)) dweight = Tensor<T>(weight.n(), weight.c(), weight.h(), weight.w());

    if (detail::is_pointwise(spec)) {
        for (int img = 0; img < x.n(); ++img) {
            detail::gemm_nt_acc(gout.plane(img, 0), x.plane(img, 0), dweight.data(),
                                spec.out_channels, static_cast<int>(hw), spec.in_channels);
            detail::gemm_tn(weight.data(), gout.plane(img, 0), dx.plane(img, 0),
                            spec.in_channels, spec.out_channels, static_cast<int>(hw));
        }
        return;
    }

    const int patch = spec.in_channels * spec.kernel * spec.kernel;
    std::vector<T> cols(static_cast<size_t>(patch) * hw);
    std::vector<T> dcols(static_cast<size_t>(patch) * hw);
    for (int img = 0; img < x.n(); ++img) {
        detail::im2col(x, img, spec, cols.data());
        // dW += gout_img * cols^T ; rows of both are contiguous.
        detail::gemm_nt_acc(gout.plane(img, 0), cols.data(), dweight.data(),
                            spec.out_channels, static_cast<int>(hw), patch);
        // dcols = W^T * gout_img, then fold back into dx.
        detail::gemm_tn(weight.data(), gout.plane(img, 0), dcols.data(),
                        patch, spec.out_channels, static_cast<int>(hw));
        detail::col2im_acc(dcols.data(), img, spec, dx);
    }
}

// Depthwise convolution, channel multiplier 1: weight is (d_i, 1, k, k) and
// output channel c depends only on input channel c.
template <typename T>
Tensor<T> depthwise_fwd(const Tensor<T>& x, const Tensor<T>& weight, const ConvSpec& spec) {
    if (x.c() != spec.in_channels)
        throw std::invalid_argument("depthwise_fwd: input channels mismatch");
    if (weight.n() != spec.in_channels || weight.c() != 1 ||
        weight.h() != spec.kernel || weight.w() != spec.kernel)
        throw std::invalid_argument("depthwise_fwd: weight shape " + weight.shape_str() +
                                    " must be (d_i,1,k,k)");
    const int h = x.h(), w = x.w();
    const int ho = spec.out_dim(h), wo = spec.out_dim(w);
    const int k = spec.kernel, s = spec.stride, p = spec.pad;
    Tensor<T> out(x.n(), x.c(), ho, wo);
    for (int img = 0; img < x.n(); ++img) {
        for (int c = 0; c < x.c(); ++c) {
            const T* in = x.plane(img, c);
            const T* ker = weight.plane(c, 0);
            T* dst = out.plane(img, c);
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox) {
                    T acc = T(0);
                    const int y0 = oy * s - p, x0 = ox * s - p;
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = y0 + ky;
                        if (iy < 0 || iy >= h) continue;
                        const T* row = in + static_cast<size_t>(iy) * w;
                        const T* krow = ker + static_cast<size_t>(ky) * k;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = x0 + kx;
                            if (ix >= 0 && ix < w) acc += krow[kx] * row[ix];
                        }
                    }
                    dst[oy * wo + ox] = acc;
                }
            }
        }
    }
    return out;
}

template <typename T>
void depthwise_bwd(const Tensor<T>& x, const Tensor<T>& weight, const ConvSpec& spec,
                   const Tensor<T>& gout, Tensor<T>& dx, Tensor<T>& dweight) {
    const int h = x.h(), w = x.w();
    const int ho = spec.out_dim(h), wo = spec.out_dim(w);
    if (gout.n() != x.n() || gout.c() != x.c() || gout.h() != ho || gout.w() != wo)
        throw std::invalid_argument("depthwise_bwd: upstream gradient shape mismatch");
    const int k = spec.kernel, s = spec.stride, p = spec.pad;
    dx = Tensor<T>(x.n(), x.c(), h, w);
    if (!dweight.same_shape(weight)) dweight = Tensor<T>(weight.n(), weight.c(), weight.h(), weight.w());
    for (int img = 0; img < x.n(); ++img) {
        for (int c = 0; c < x.c(); ++c) {
            const T* in = x.plane(img, c);
            const T* ker = weight.plane(c, 0);
            const T* g = gout.plane(img, c);
            T* dxp = dx.plane(img, c);
            T* dk = dweight.plane(c, 0);
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox) {
                    const T gv = g[oy * wo + ox];
                    if (gv == T(0)) continue;
                    const int y0 = oy * s - p, x0 = ox * s - p;
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = y0 + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = x0 + kx;
                            if (ix < 0 || ix >= w) continue;
                            dk[ky * k + kx] += gv * in[static_cast<size_t>(iy) * w + ix];
                            dxp[static_cast<size_t>(iy) * w + ix] += gv * ker[ky * k + kx];
                        }
                    }
                }
            }
        }
    }
}

// Pointwise = 1x1 standard convolution; one code path.
template <typename T>
Tensor<T> pointwise_fwd(const Tensor<T>& x, const Tensor<T>& weight) {
    ConvSpec spec = ConvSpec::make(1, 1, x.c(), weight.n());
    return conv2d_fwd(x, weight, spec);
}

// Pyramid of depthwise branches over kernel set K, all stride-matched and
// "same"-padded so branch outputs align; fused by Add or by channel Concat
// in ascending-k order.
template <typename T>
Tensor<T> pyramid_dw_fwd(const Tensor<T>& x, const std::vector<Tensor<T>>& weights,
                         const PyramidSpec& pyr, int stride) {
    pyr.validate();
    if (weights.size() != pyr.kernels.size())
        throw std::invalid_argument("pyramid_dw_fwd: one weight tensor per kernel required");
    std::vector<Tensor<T>> branch_out;
    branch_out.reserve(weights.size());
    for (size_t m = 0; m < pyr.kernels.size(); ++m) {
        ConvSpec spec = ConvSpec::make(pyr.kernels[m], stride, x.c(), x.c());
        branch_out.push_back(depthwise_fwd(x, weights[m], spec));
    }
    if (pyr.fusion == Fusion::Concat) return channel_concat(branch_out);
    Tensor<T> out = std::move(branch_out[0]);
    for (size_t m = 1; m < branch_out.size(); ++m) out = elementwise_add(out, branch_out[m]);
    return out;
}

template <typename T>
void pyramid_dw_bwd(const Tensor<T>& x, const std::vector<Tensor<T>>& weights,
                    const PyramidSpec& pyr, int stride, const Tensor<T>& gout,
                    Tensor<T>& dx, std::vector<Tensor<T>>& dweights) {
    pyr.validate();
    if (weights.size() != pyr.kernels.size())
        throw std::invalid_argument("pyramid_dw_bwd: weight/kernel count mismatch");
    if (dweights.size() != weights.size()) dweights.resize(weights.size());
    dx = Tensor<T>(x.n(), x.c(), x.h(), x.w());
    const int d_i = x.c();
    for (size_t m = 0; m < weights.size(); ++m) {
        ConvSpec spec = ConvSpec::make(pyr.kernels[m], stride, d_i, d_i);
        // Add routes the same upstream into every branch; Concat routes the
        // branch's own channel slice.
        Tensor<T> g_branch = (pyr.fusion == Fusion::Add)
                                 ? gout
                                 : channel_slice(gout, static_cast<int>(m) * d_i,
                                                 static_cast<int>(m + 1) * d_i);
        Tensor<T> dx_branch;
        depthwise_bwd(x, weights[m], spec, g_branch, dx_branch, dweights[m]);
        if (m == 0)
            dx = std::move(dx_branch);
        else
            dx = elementwise_add(dx, dx_branch);
    }
}

template <typename T>
struct BatchNormState {
    std::vector<T> gamma, beta;
    std::vector<T> running_mean, running_var;
    T eps = static_cast<T>(1e-5);
    T momentum = static_cast<T>(0.9);  // running = momentum*running + (1-momentum)*batch

    BatchNormState() = default;
    explicit BatchNormState(int channels)
        : gamma(channels, T(1)), beta(channels, T(0)),
          running_mean(channels, T(0)), running_var(channels, T(1)) {}

    int channels() const { return static_cast<int>(gamma.size()); }
};

template <typename T>
struct BatchNormCache {
    Tensor<T> x_hat;          // normalized input
    std::vector<T> inv_std;   // per channel, 1/sqrt(var + eps)
};

// Train mode normalizes with batch statistics over (n,h,w) per channel and
// updates the running averages; Eval uses the running statistics. Variance
// is the biased (1/N) estimate in both places.
template <typename T>
Tensor<T> batchnorm_fwd(const Tensor<T>& x, BatchNormState<T>& state, Mode mode,
                        BatchNormCache<T>* cache = nullptr) {
    if (x.c() != state.channels())
        throw std::invalid_argument("batchnorm_fwd: channel count mismatch");
    if (x.n() == 0) throw std::invalid_argument("batchnorm_fwd: empty batch");
    const size_t per_channel = static_cast<size_t>(x.n()) * x.h() * x.w();
    Tensor<T> out(x.n(), x.c(), x.h(), x.w());
    const size_t hw = static_cast<size_t>(x.h()) * x.w();

    if (cache) {
        cache->x_hat = Tensor<T>(x.n(), x.c(), x.h(), x.w());
        cache->inv_std.assign(x.c(), T(0));
    }

    if (mode == Mode::Train && per_channel < 2)
        throw std::invalid_argument("batchnorm_fwd: batch variance undefined for n*h*w = 1");

    for (int c = 0; c < x.c(); ++c) {
        T mean, var;
        if (mode == Mode::Train) {
            double sum = 0.0;
            for (int img = 0; img < x.n(); ++img) {
                const T* p = x.plane(img, c);
                for (size_t i = 0; i < hw; ++i) sum += static_cast<double>(p[i]);
            }
            mean = static_cast<T>(sum / static_cast<double>(per_channel));
            double sq = 0.0;
            for (int img = 0; img < x.n(); ++img) {
                const T* p = x.plane(img, c);
                for (size_t i = 0; i < hw; ++i) {
                    const double d = static_cast<double>(p[i]) - static_cast<double>(mean);
                    sq += d * d;
                }
            }
            var = static_cast<T>(sq / static_cast<double>(per_channel));
            state.running_mean[c] = state.momentum * state.running_mean[c] +
                                    (T(1) - state.momentum) * mean;
            state.running_var[c] = state.momentum * state.running_var[c] +
                                   (T(1) - state.momentum) * var;
        } else {
            mean = state.running_mean[c];
            var = state.running_var[c];
        }
        const T inv_std = T(1) / std::sqrt(var + state.eps);
        const T g = state.gamma[c], b = state.beta[c];
        if (cache) cache->inv_std[c] = inv_std;
        for (int img = 0; img < x.n(); ++img) {
            const T* p = x.plane(img, c);
            T* o = out.plane(img, c);
            T* xh = cache ? cache->x_hat.plane(img, c) : nullptr;
            for (size_t i = 0; i < hw; ++i) {
                const T norm = (p[i] - mean) * inv_std;
                if (xh) xh[i] = norm;
                o[i] = g * norm + b;
            }
        }
    }
    return out;
}

// Train-mode backward through the batch statistics.
template <typename T>
Tensor<T> batchnorm_bwd(const Tensor<T>& gout, const BatchNormState<T>& state,
                        const BatchNormCache<T>& cache,
                        std::vector<T>& dgamma, std::vector<T>& dbeta) {
    const Tensor<T>& x_hat = cache.x_hat;
    if (!gout.same_shape(x_hat))
        throw std::invalid_argument("batchnorm_bwd: missing or stale forward cache");
    const size_t hw = static_cast<size_t>(gout.h()) * gout.w();
    const T inv_n = T(1) / static_cast<T>(static_cast<size_t>(gout.n()) * hw);
    if (dgamma.size() != state.gamma.size()) dgamma.assign(state.gamma.size(), T(0));
    if (dbeta.size() != state.beta.size()) dbeta.assign(state.beta.size(), T(0));
    Tensor<T> dx(gout.n(), gout.c(), gout.h(), gout.w());

    for (int c = 0; c < gout.c(); ++c) {
        T sum_g = T(0), sum_gx = T(0);
        for (int img = 0; img < gout.n(); ++img) {
            const T* g = gout.plane(img, c);
            const T* xh = x_hat.plane(img, c);
            for (size_t i = 0; i < hw; ++i) {
                sum_g += g[i];
                sum_gx += g[i] * xh[i];
            }
        }
        dgamma[c] += sum_gx;
        dbeta[c] += sum_g;
        const T scale = state.gamma[c] * cache.inv_std[c];
        for (int img = 0; img < gout.n(); ++img) {
            const T* g = gout.plane(img, c);
            const T* xh = x_hat.plane(img, c);
            T* d = dx.plane(img, c);
            for (size_t i = 0; i < hw; ++i)
                d[i] = scale * (g[i] - inv_n * (sum_g + xh[i] * sum_gx));
        }
    }
    return dx;
}

template <typename T>
Tensor<T> relu_fwd(const Tensor<T>& x) {
    Tensor<T> out(x.n(), x.c(), x.h(), x.w());
    const T* p = x.data();
    T* o = out.data();
    for (size_t i = 0; i < x.numel(); ++i) o[i] = p[i] > T(0) ? p[i] : T(0);
    return out;
}

template <typename T>
Tensor<T> relu_bwd(const Tensor<T>& x, const Tensor<T>& gout) {
    if (!x.same_shape(gout))
        throw std::invalid_argument("relu_bwd: shape mismatch");
    Tensor<T> dx(x.n(), x.c(), x.h(), x.w());
    const T* p = x.data();
    const T* g = gout.data();
    T* d = dx.data();
    for (size_t i = 0; i < x.numel(); ++i) d[i] = p[i] > T(0) ? g[i] : T(0);
    return dx;
}

// Per-channel spatial mean to (n, c, 1, 1); accepts any h, w.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    if (x.h() < 1 || x.w() < 1)
        throw std::invalid_argument("global_avg_pool: empty spatial extent");
    Tensor<T> out(x.n(), x.c(), 1, 1);
    const size_t hw = static_cast<size_t>(x.h()) * x.w();
    for (int img = 0; img < x.n(); ++img)
        for (int c = 0; c < x.c(); ++c) {
            const T* p = x.plane(img, c);
            T acc = T(0);
            for (size_t i = 0; i < hw; ++i) acc += p[i];
            out.at(img, c, 0, 0) = acc / static_cast<T>(hw);
        }
    return out;
}

template <typename T>
Tensor<T> global_avg_pool_bwd(const Tensor<T>& x, const Tensor<T>& gout) {
    if (gout.n() != x.n() || gout.c() != x.c() || gout.h() != 1 || gout.w() != 1)
        throw std::invalid_argument("global_avg_pool_bwd: upstream shape mismatch");
    Tensor<T> dx(x.n(), x.c(), x.h(), x.w());
    const size_t hw = static_cast<size_t>(x.h()) * x.w();
    const T inv = T(1) / static_cast<T>(hw);
    for (int img = 0; img < x.n(); ++img)
        for (int c = 0; c < x.c(); ++c) {
            const T g = gout.at(img, c, 0, 0) * inv;
            T* d = dx.plane(img, c);
            for (size_t i = 0; i < hw; ++i) d[i] = g;
        }
    return dx;
}

// Affine map to class logits. weight is (classes, features, 1, 1) against
// the flattened (c*h*w) input; bias is (classes, 1, 1, 1).
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    const int features = x.c() * x.h() * x.w();
    const int classes = weight.n();
    if (weight.c() * weight.h() * weight.w() != features)
        throw std::invalid_argument("fully_connected: weight width " +
                                    std::to_string(weight.c() * weight.h() * weight.w()) +
                                    " != flattened input length " + std::to_string(features));
    if (bias.n() != classes)
        throw std::invalid_argument("fully_connected: bias length mismatch");
    Tensor<T> out(x.n(), classes, 1, 1);
    for (int img = 0; img < x.n(); ++img) {
        const T* xi = x.plane(img, 0);
        for (int k = 0; k < classes; ++k) {
            const T* wrow = weight.data() + static_cast<size_t>(k) * features;
            T acc = bias.data()[k];
            for (int f = 0; f < features; ++f) acc += wrow[f] * xi[f];
            out.at(img, k, 0, 0) = acc;
        }
    }
    return out;
}

template <typename T>
void fully_connected_bwd(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& gout,
                         Tensor<T>& dx, Tensor<T>& dweight, Tensor<T>& dbias) {
    const int features = x.c() * x.h() * x.w();
    const int classes = weight.n();
    if (gout.n() != x.n() || gout.c() != classes)
        throw std::invalid_argument("fully_connected_bwd: upstream shape mismatch");
    dx = Tensor<T>(x.n(), x.c(), x.h(), x.w());
    if (!dweight.same_shape(weight)) dweight = Tensor<T>(weight.n(), weight.c(), weight.h(), weight.w());
    if (dbias.numel() != static_cast<size_t>(classes)) dbias = Tensor<T>(classes, 1, 1, 1);
    for (int img = 0; img < x.n(); ++img) {
        const T* xi = x.plane(img, 0);
        T* dxi = dx.plane(img, 0);
        for (int k = 0; k < classes; ++k) {
            const T g = gout.at(img, k, 0, 0);
            if (g == T(0)) continue;
            const T* wrow = weight.data() + static_cast<size_t>(k) * features;
            T* dwrow = dweight.data() + static_cast<size_t>(k) * features;
            dbias.data()[k] += g;
            for (int f = 0; f < features; ++f) {
                dwrow[f] += g * xi[f];
                dxi[f] += g * wrow[f];
            }
        }
    }
}

// Mean negative log-softmax of the true class; dlogits = (softmax - onehot)/n.
// Optional per-sample weights support mixup's interpolated targets.
template <typename T>
std::pair<T, Tensor<T>> softmax_cross_entropy(const Tensor<T>& logits,
                                              const std::vector<int>& labels) {
    const int n = logits.n(), classes = logits.c();
    if (logits.h() != 1 || logits.w() != 1)
        throw std::invalid_argument("softmax_cross_entropy: logits must be (n, classes, 1, 1)");
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
    Tensor<T> dlogits(n, classes, 1, 1);
    double loss = 0.0;
    const T inv_n = T(1) / static_cast<T>(n);
    for (int img = 0; img < n; ++img) {
        if (labels[img] < 0 || labels[img] >= classes)
            throw std::invalid_argument("softmax_cross_entropy: label " +
                                        std::to_string(labels[img]) + " out of range");
        const T* row = logits.plane(img, 0);
        T maxv = row[0];
        for (int k = 1; k < classes; ++k) maxv = std::max(maxv, row[k]);
        double denom = 0.0;
        for (int k = 0; k < classes; ++k) denom += std::exp(static_cast<double>(row[k] - maxv));
        const double log_denom = std::log(denom);
        loss += log_denom - static_cast<double>(row[labels[img]] - maxv);
        T* d = dlogits.plane(img, 0);
        for (int k = 0; k < classes; ++k) {
            const double soft = std::exp(static_cast<double>(row[k] - maxv)) / denom;
            d[k] = (static_cast<T>(soft) - (k == labels[img] ? T(1) : T(0))) * inv_n;
        }
    }
    return {static_cast<T>(loss / n), std::move(dlogits)};
}

// Plain septuple-loop convolution used as the oracle for the factorized
// paths. groups = 1 is the standard convolution, groups = d_i the depthwise
// one; weight is (d_j, d_i/groups, k, k).
template <typename T>
Tensor<T> naive_conv_reference(const Tensor<T>& x, const Tensor<T>& weight,
                               const ConvSpec& spec, int groups) {
    if (groups < 1 || spec.in_channels % groups != 0)
        throw std::invalid_argument("naive_conv_reference: d_i not divisible by groups");
    if (groups != 1 && groups != spec.in_channels)
        throw std::invalid_argument("naive_conv_reference: groups must be 1 or d_i");
    if (x.c() != spec.in_channels)
        throw std::invalid_argument("naive_conv_reference: input channel mismatch");
    const int cpg = spec.in_channels / groups;        // channels per group
    const int opg = spec.out_channels / groups;        // outputs per group
    if (spec.out_channels % groups != 0 || weight.c() != cpg ||
        weight.n() != spec.out_channels || weight.h() != spec.kernel)
        throw std::invalid_argument("naive_conv_reference: weight shape mismatch");
    const int h = x.h(), w = x.w();
    const int ho = spec.out_dim(h), wo = spec.out_dim(w);
    Tensor<T> out(x.n(), spec.out_channels, ho, wo);
    for (int img = 0; img < x.n(); ++img)
        for (int g = 0; g < groups; ++g)
            for (int oc = 0; oc < opg; ++oc)
                for (int oy = 0; oy < ho; ++oy)
                    for (int ox = 0; ox < wo; ++ox) {
                        T acc = T(0);
                        for (int ic = 0; ic < cpg; ++ic)
                            for (int ky = 0; ky < spec.kernel; ++ky)
                                for (int kx = 0; kx < spec.kernel; ++kx) {
                                    const int iy = oy * spec.stride - spec.pad + ky;
                                    const int ix = ox * spec.stride - spec.pad + kx;
                                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                    acc += weight.at(g * opg + oc, ic, ky, kx) *
                                           x.at(img, g * cpg + ic, iy, ix);
                                }
                        out.at(img, g * opg + oc, oy, ox) = acc;
                    }
    return out;
}

}  // namespace pydnet
