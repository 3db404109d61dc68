#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pydnet {

// Dense NCHW tensor, contiguous row-major (w fastest). Ops in this library
// treat tensors as immutable inputs and return fresh outputs; the optimizer
// is the only mutator of parameter storage.
template <typename T>
class Tensor {
public:
    Tensor() : n_(0), c_(0), h_(0), w_(0) {}

    Tensor(int n, int c, int h, int w) : n_(n), c_(c), h_(h), w_(w) {
        if (n < 0 || c < 0 || h < 0 || w < 0)
            throw std::invalid_argument("Tensor: negative dimension");
        data_.assign(static_cast<size_t>(n) * c * h * w, T(0));
    }

    static Tensor full(int n, int c, int h, int w, T value) {
        Tensor t(n, c, h, w);
        t.fill(value);
        return t;
    }

    int n() const { return n_; }
    int c() const { return c_; }
    int h() const { return h_; }
    int w() const { return w_; }
    size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    bool same_shape(const Tensor& o) const {
        return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
    }

    std::string shape_str() const {
        return "(" + std::to_string(n_) + "," + std::to_string(c_) + "," +
               std::to_string(h_) + "," + std::to_string(w_) + ")";
    }

    T& at(int n, int c, int h, int w) {
        assert(n >= 0 && n < n_ && c >= 0 && c < c_);
        assert(h >= 0 && h < h_ && w >= 0 && w < w_);
        return data_[((static_cast<size_t>(n) * c_ + c) * h_ + h) * w_ + w];
    }
    const T& at(int n, int c, int h, int w) const {
        return const_cast<Tensor*>(this)->at(n, c, h, w);
    }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    // Pointer to the start of one (n, c) plane of h*w values.
    T* plane(int n, int c) {
        return data_.data() + (static_cast<size_t>(n) * c_ + c) * h_ * w_;
    }
    const T* plane(int n, int c) const {
        return const_cast<Tensor*>(this)->plane(n, c);
    }

    void fill(T value) {
        for (auto& v : data_) v = value;
    }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(n_, c_, h_, w_);
        for (size_t i = 0; i < data_.size(); ++i)
            out.data()[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    int n_, c_, h_, w_;
    std::vector<T> data_;
};

// Debug-build finiteness assertion. Hot loops stay branch-free in release.
#ifndef NDEBUG
#define PYDNET_ASSERT_FINITE(t) assert((t).all_finite() && "non-finite tensor element")
#else
#define PYDNET_ASSERT_FINITE(t) ((void)0)
#endif

// splitmix64, used to derive independent sub-seeds from one master seed.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for a named subsystem: hash the tag into the master seed so streams
// for "shuffle", "augment", "init", ... are independent and documented.
inline uint64_t derive_seed(uint64_t master, const std::string& tag) {
    uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char ch : tag) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return splitmix64(master ^ h);
}

inline uint64_t derive_seed(uint64_t master, uint64_t index) {
    return splitmix64(master ^ (0x517cc1b727220a95ULL * (index + 1)));
}

// Deterministic generator: xoshiro-style splitmix64 stream. The sequence is
// a pure function of the seed, identical on every platform and build.
// Uniform doubles take the top 53 bits, so draws are bit-exact everywhere
// (std::uniform_real_distribution is implementation-defined; this is not).
class SeededRng {
public:
    explicit SeededRng(uint64_t seed) : state_(splitmix64(seed ^ 0xd1b54a32d192ed03ULL)) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform on [0, 1).
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // Uniform integer on [0, n).
    uint64_t below(uint64_t n) {
        assert(n > 0);
        // Rejection-free modulo bias is negligible for the small n used here,
        // but do the widening multiply anyway; it is exact and branchless.
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    bool coin() { return (next_u64() >> 63) != 0; }

    // Beta(a, a) via Johnk's algorithm; valid for a + a <= 1 regimes used by
    // mixup (a = 0.2). Documented deterministic given this generator.
    double beta_symmetric(double a) {
        for (;;) {
            double u = std::pow(uniform01(), 1.0 / a);
            double v = std::pow(uniform01(), 1.0 / a);
            if (u + v > 0.0 && u + v <= 1.0) return u / (u + v);
        }
    }

private:
    uint64_t state_;
};

// Glorot/Xavier uniform init: bound b = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> xavier_uniform_init(int n, int c, int h, int w, int fan_in, int fan_out,
                              SeededRng& rng) {
    if (fan_in < 1 || fan_out < 1)
        throw std::invalid_argument("xavier_uniform_init: fans must be >= 1");
    const double bound = std::sqrt(6.0 / (static_cast<double>(fan_in) + fan_out));
    Tensor<T> t(n, c, h, w);
    T* p = t.data();
    for (size_t i = 0; i < t.numel(); ++i)
        p[i] = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template <typename T>
Tensor<T> elementwise_add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("elementwise_add: shape mismatch " +
                                    a.shape_str() + " vs " + b.shape_str());
    Tensor<T> out(a.n(), a.c(), a.h(), a.w());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
    PYDNET_ASSERT_FINITE(out);
    return out;
}

// Concatenate along the channel axis. Pure data movement, no arithmetic.
template <typename T>
Tensor<T> channel_concat(const std::vector<const Tensor<T>*>& parts) {
    if (parts.empty())
        throw std::invalid_argument("channel_concat: empty part list");
    const Tensor<T>& first = *parts[0];
    int total_c = 0;
    for (const Tensor<T>* p : parts) {
        if (p->n() != first.n() || p->h() != first.h() || p->w() != first.w())
            throw std::invalid_argument("channel_concat: spatial/batch mismatch " +
                                        p->shape_str() + " vs " + first.shape_str());
        total_c += p->c();
    }
    Tensor<T> out(first.n(), total_c, first.h(), first.w());
    const size_t hw = static_cast<size_t>(first.h()) * first.w();
    for (int n = 0; n < first.n(); ++n) {
        int c_off = 0;
        for (const Tensor<T>* p : parts) {
            for (int c = 0; c < p->c(); ++c) {
                const T* src = p->plane(n, c);
                T* dst = out.plane(n, c_off + c);
                for (size_t i = 0; i < hw; ++i) dst[i] = src[i];
            }
            c_off += p->c();
        }
    }
    return out;
}

template <typename T>
Tensor<T> channel_concat(const std::vector<Tensor<T>>& parts) {
    std::vector<const Tensor<T>*> ptrs;
    ptrs.reserve(parts.size());
    for (const auto& p : parts) ptrs.push_back(&p);
    return channel_concat(ptrs);
}

// Channel slice [c_begin, c_end); used by tests and the concat backward.
template <typename T>
Tensor<T> channel_slice(const Tensor<T>& t, int c_begin, int c_end) {
    if (c_begin < 0 || c_end > t.c() || c_begin >= c_end)
        throw std::invalid_argument("channel_slice: bad range");
    Tensor<T> out(t.n(), c_end - c_begin, t.h(), t.w());
    const size_t hw = static_cast<size_t>(t.h()) * t.w();
    for (int n = 0; n < t.n(); ++n)
        for (int c = c_begin; c < c_end; ++c) {
            const T* src = t.plane(n, c);
            T* dst = out.plane(n, c - c_begin);
            for (size_t i = 0; i < hw; ++i) dst[i] = src[i];
        }
    return out;
}

}  // namespace pydnet
