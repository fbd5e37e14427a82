#ifndef CDSL_LOSSES_HPP
#define CDSL_LOSSES_HPP

#include <cmath>

#include "cdsl/tensor.hpp"

namespace cdsl {

inline constexpr double kProbClamp = 1e-7;

namespace detail {
template <typename T>
void check_same_dims(const Tensor4<T>& p, const Tensor4<T>& g) {
    if (!(p.shape == g.shape))
        throw std::invalid_argument("loss: prediction " + p.shape.str() +
                                    " vs ground truth " + g.shape.str());
}
template <typename T>
double clamp_prob(T p) {
    double v = static_cast<double>(p);
    if (v < kProbClamp) v = kProbClamp;
    if (v > 1.0 - kProbClamp) v = 1.0 - kProbClamp;
    return v;
}
} // namespace detail

// Per-pixel mean of -(G*ln P + (1-G)*ln(1-P)); P clamped to [1e-7, 1-1e-7].
template <typename T>
double bce_loss(const Tensor4<T>& p, const Tensor4<T>& g) {
    detail::check_same_dims(p, g);
    double acc = 0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        const double pv = detail::clamp_prob(p.data[i]);
        const double gv = g.data[i];
        acc -= gv * std::log(pv) + (1.0 - gv) * std::log(1.0 - pv);
    }
    return acc / static_cast<double>(p.data.size());
}

// Differentiable Dice over the whole batch: (2*sum(P*G)+s) / (sum P + sum G + s).
template <typename T>
double soft_dice(const Tensor4<T>& p, const Tensor4<T>& g, double smooth = 1.0) {
    detail::check_same_dims(p, g);
    double inter = 0, total = 0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        inter += static_cast<double>(p.data[i]) * g.data[i];
        total += static_cast<double>(p.data[i]) + g.data[i];
    }
    return (2.0 * inter + smooth) / (total + smooth);
}

// Training loss: BCE - soft Dice when use_dice, plain BCE otherwise.
template <typename T>
double combined_loss(const Tensor4<T>& p, const Tensor4<T>& g, bool use_dice) {
    const double bce = bce_loss(p, g);
    return use_dice ? bce - soft_dice(p, g) : bce;
}

// d(combined_loss)/dP, the upstream gradient for the network backward pass.
template <typename T>
Tensor4<T> combined_loss_grad(const Tensor4<T>& p, const Tensor4<T>& g, bool use_dice) {
    detail::check_same_dims(p, g);
    Tensor4<T> dp(p.shape);
    const double inv_n = 1.0 / static_cast<double>(p.data.size());
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        const double pv = static_cast<double>(p.data[i]);
        const double gv = g.data[i];
        double grad = 0;
        if (pv > kProbClamp && pv < 1.0 - kProbClamp)
            grad = (-gv / pv + (1.0 - gv) / (1.0 - pv)) * inv_n;
        dp.data[i] = static_cast<T>(grad);
    }
    if (use_dice) {
        double inter = 0, total = 0;
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            inter += static_cast<double>(p.data[i]) * g.data[i];
            total += static_cast<double>(p.data[i]) + g.data[i];
        }
        const double smooth = 1.0;
        const double denom = total + smooth;
        const double num = 2.0 * inter + smooth;
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double gv = g.data[i];
            const double d_dice = (2.0 * gv * denom - num) / (denom * denom);
            dp.data[i] -= static_cast<T>(d_dice);
        }
    }
    return dp;
}

} // namespace cdsl

#endif
