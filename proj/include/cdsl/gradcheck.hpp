#ifndef CDSL_GRADCHECK_HPP
#define CDSL_GRADCHECK_HPP

#include <set>
#include <string>

#include "cdsl/losses.hpp"
#include "cdsl/network.hpp"

namespace cdsl {

// Central finite differences against the analytic backward pass, 64-bit.
// Relative error per coordinate: |a-n| / max(|a|,|n|,1e-8).
//
// Two kinds of coordinate cannot be resolved by the probe and are excluded
// (counted in coords_skipped) rather than compared:
//   - probes that flip a ReLU gate or max-pool argmax straddle a kink, where
//     the secant is not a derivative estimate;
//   - coordinates whose analytic and numeric values both sit below the
//     double-precision FD noise floor (|S|*u/eps scale), e.g. a conv bias
//     feeding a batch norm, whose gradient is identically zero.
// Every formula is still swept exhaustively by the per-primitive checks,
// where gradients are well above the floor.
struct GradCheckResult {
    double max_rel_err = 0;
    std::string worst; // "<tensor>[i]" of the worst coordinate
    std::size_t coords_checked = 0;
    std::size_t coords_skipped = 0;

    void fold(double err, const std::string& where) {
        if (err > max_rel_err) {
            max_rel_err = err;
            worst = where;
        }
        ++coords_checked;
    }
};

namespace detail {

inline double rel_err(double a, double n) {
    const double denom = std::max({std::fabs(a), std::fabs(n), 1e-8});
    return std::fabs(a - n) / denom;
}

inline std::vector<std::size_t> pick_coords(std::size_t numel, int cap, Rng& rng) {
    std::vector<std::size_t> coords;
    if (cap <= 0 || numel <= static_cast<std::size_t>(cap)) {
        coords.resize(numel);
        for (std::size_t i = 0; i < numel; ++i) coords[i] = i;
        return coords;
    }
    std::set<std::size_t> chosen;
    while (chosen.size() < static_cast<std::size_t>(cap))
        chosen.insert(rng.below(static_cast<std::uint32_t>(numel)));
    coords.assign(chosen.begin(), chosen.end());
    return coords;
}

// ReLU gate pattern plus pool argmax routing for one forward pass
template <typename T>
std::vector<int> gate_signature(const nn::Graph& g, const nn::Tape<T>& tape) {
    std::vector<int> sig;
    const auto& nodes = g.nodes();
    for (std::size_t id = 1; id < nodes.size(); ++id) {
        if (nodes[id].spec.kind == nn::LayerKind::relu) {
            for (const T v : tape.value[nodes[id].inputs[0]].data)
                sig.push_back(v > T(0) ? 1 : 0);
        } else if (nodes[id].spec.kind == nn::LayerKind::max_pool) {
            sig.insert(sig.end(), tape.pool_argmax[id].begin(), tape.pool_argmax[id].end());
        }
    }
    return sig;
}

} // namespace detail

// Checks d(sum(r * graph(x)))/d(params, x) on prepared double-precision
// params and input. coords_per_tensor <= 0 sweeps every coordinate.
inline GradCheckResult grad_check_run(const nn::Graph& g, nn::ParameterStore<double> params,
                                      TensorD x, std::uint32_t seed, int coords_per_tensor,
                                      double eps = 1e-3) {
    Rng rng(derive_seed(seed, 0x6eadc));
    nn::Tape<double> tape;
    const TensorD& y0 = nn::graph_forward(g, params, x, nn::Mode::train, tape, false);
    TensorD r(y0.shape);
    for (auto& v : r.data) v = rng.uniform(-1.0, 1.0);

    const std::vector<int> center_sig = detail::gate_signature(g, tape);
    const nn::Gradients<double> analytic = nn::graph_backward(g, params, tape, r);

    auto probe = [&](nn::ParameterStore<double>& p, const TensorD& in, std::vector<int>& sig) {
        nn::Tape<double> t;
        const TensorD& y = nn::graph_forward(g, p, in, nn::Mode::train, t, false);
        sig = detail::gate_signature(g, t);
        double s = 0;
        for (std::size_t i = 0; i < y.data.size(); ++i) s += r.data[i] * y.data[i];
        return s;
    };

    GradCheckResult result;
    std::vector<int> sig_plus, sig_minus;
    constexpr double kMeasurable = 3e-5; // FD noise floor at eps=1e-3, with margin
    auto check_coord = [&](double& slot, double analytic_value, const std::string& where) {
        const double orig = slot;
        slot = orig + eps;
        const double s_plus = probe(params, x, sig_plus);
        slot = orig - eps;
        const double s_minus = probe(params, x, sig_minus);
        slot = orig;
        if (sig_plus != sig_minus || sig_plus != center_sig) {
            ++result.coords_skipped;
            return;
        }
        const double numeric = (s_plus - s_minus) / (2 * eps);
        if (std::max(std::fabs(analytic_value), std::fabs(numeric)) < kMeasurable) {
            ++result.coords_skipped;
            return;
        }
        result.fold(detail::rel_err(analytic_value, numeric), where);
    };

    for (std::size_t e = 0; e < params.entries.size(); ++e) {
        auto& entry = params.entries[e];
        if (!entry.trainable) continue; // running stats do not enter train-mode outputs
        const auto coords = detail::pick_coords(entry.value.numel(), coords_per_tensor, rng);
        for (const std::size_t i : coords)
            check_coord(entry.value.data[i], analytic.params.entries[e].value.data[i],
                        entry.name + "[" + std::to_string(i) + "]");
    }
    {
        const auto coords = detail::pick_coords(x.numel(), coords_per_tensor, rng);
        for (const std::size_t i : coords)
            check_coord(x.data[i], analytic.input.data[i], "input[" + std::to_string(i) + "]");
    }
    return result;
}

// Seeds He-initialized parameters and a random input whose coordinates stay
// away from zero (|x| >= 0.05, so +-eps never crosses a ReLU kink at the
// input itself).
inline GradCheckResult grad_check_graph(const nn::Graph& g, std::uint32_t seed,
                                        int coords_per_tensor, int batch = 2,
                                        double eps = 1e-3) {
    nn::ParameterStore<double> params = nn::init_graph_params<double>(g, derive_seed(seed, 1));
    const Shape4 in = g.shape(0);
    TensorD x(batch, in.c, in.h, in.w);
    Rng rng(derive_seed(seed, 2));
    for (auto& v : x.data) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        v = sign * rng.uniform(0.05, 1.0);
    }
    return grad_check_run(g, std::move(params), std::move(x), seed, coords_per_tensor, eps);
}

// combined_loss gradient w.r.t. P; P sampled in [0.1, 0.9] so the probability
// clamp stays inactive and the log curvature stays mild under the +-eps probes.
inline GradCheckResult grad_check_loss(const Shape4& dims, std::uint32_t seed, bool use_dice,
                                       double eps = 1e-3) {
    Rng rng(seed);
    TensorD p(dims), gt(dims);
    for (auto& v : p.data) v = rng.uniform(0.1, 0.9);
    for (auto& v : gt.data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;

    const TensorD analytic = combined_loss_grad(p, gt, use_dice);
    GradCheckResult result;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        const double orig = p.data[i];
        p.data[i] = orig + eps;
        const double s_plus = combined_loss(p, gt, use_dice);
        p.data[i] = orig - eps;
        const double s_minus = combined_loss(p, gt, use_dice);
        p.data[i] = orig;
        const double numeric = (s_plus - s_minus) / (2 * eps);
        result.fold(detail::rel_err(analytic.data[i], numeric), "P[" + std::to_string(i) + "]");
    }
    return result;
}

} // namespace cdsl

#endif
