#pragma once

#include "pydnet/tensor.hpp"

// Central-difference gradient checking, 64-bit only: the probe step would
// drown in float rounding error otherwise.

namespace pydnet {

struct GradCheckStats {
    double max_rel_err = 0.0;
    size_t count = 0;

    void absorb(const GradCheckStats& o) {
        max_rel_err = std::max(max_rel_err, o.max_rel_err);
        count += o.count;
    }
};

// Wiggles every element of value[] and compares the analytic gradient with
// (loss(x+h) - loss(x-h)) / 2h. loss must be a pure function of the values
// currently stored in the arrays it reads. The relative error uses a unit
// floor, |a - fd| / max(1, |a|, |fd|), so near-zero gradients are judged on
// absolute error.
template <typename LossFn>
void check_gradient_array(double* value, const double* analytic, size_t size, LossFn&& loss,
                          double step, GradCheckStats& stats) {
    for (size_t i = 0; i < size; ++i) {
        const double keep = value[i];
        value[i] = keep + step;
        const double up = loss();
        value[i] = keep - step;
        const double down = loss();
        value[i] = keep;
        const double fd = (up - down) / (2.0 * step);
        const double a = analytic[i];
        const double denom = std::max({1.0, std::fabs(a), std::fabs(fd)});
        stats.max_rel_err = std::max(stats.max_rel_err, std::fabs(a - fd) / denom);
        ++stats.count;
    }
}

// Variant for composite functions containing ReLU: a probe interval that
// straddles an activation kink measures a one-sided slope, an O(1) artifact
// that no step size cures. Local smoothness is testable, though — away from a
// kink the central difference is step-invariant (truncation falls as h^2), so
// FD(h) and FD(h/2) agreeing to ~1e-6 certifies the neighborhood. Coordinates
// that fail get re-probed with h/16 (a 32x smaller crossing window); the rare
// coordinate that still fails sits essentially on a kink, where the gradient
// is genuinely undefined, and is skipped and counted.
struct FilteredCheckStats {
    double max_rel_err = 0.0;
    size_t count = 0;
    size_t skipped = 0;

    void absorb(const FilteredCheckStats& o) {
        max_rel_err = std::max(max_rel_err, o.max_rel_err);
        count += o.count;
        skipped += o.skipped;
    }
};

template <typename LossFn>
void check_gradient_array_filtered(double* value, const double* analytic, size_t size,
                                   LossFn&& loss, double step, FilteredCheckStats& stats) {
    const auto central = [&](double* slot, double h) {
        const double keep = *slot;
        *slot = keep + h;
        const double up = loss();
        *slot = keep - h;
        const double down = loss();
        *slot = keep;
        return (up - down) / (2.0 * h);
    };
    const auto consistent = [](double a, double b) {
        return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)}) < 1e-6;
    };
    for (size_t i = 0; i < size; ++i) {
        double fd = central(value + i, step);
        const double fd_half = central(value + i, step / 2);
        if (!consistent(fd, fd_half)) {
            fd = central(value + i, step / 16);
            const double fd_32 = central(value + i, step / 32);
            if (!consistent(fd, fd_32)) {
                ++stats.skipped;
                continue;
            }
        }
        const double a = analytic[i];
        const double denom = std::max({1.0, std::fabs(a), std::fabs(fd)});
        stats.max_rel_err = std::max(stats.max_rel_err, std::fabs(a - fd) / denom);
        ++stats.count;
    }
}

// Fixed random projection turning a tensor-valued op into a scalar map.
inline Tensor<double> random_projection(int n, int c, int h, int w, SeededRng& rng) {
    Tensor<double> t(n, c, h, w);
    for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-1.0, 1.0);
    return t;
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("dot: shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) s += a.data()[i] * b.data()[i];
    return s;
}

inline Tensor<double> random_tensor(int n, int c, int h, int w, SeededRng& rng,
                                    double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(n, c, h, w);
    for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace pydnet
