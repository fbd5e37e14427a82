#ifndef CDSL_SGD_HPP
#define CDSL_SGD_HPP

#include "cdsl/graph.hpp"

namespace cdsl {

// v <- mu*v + g ; w <- w - lr*v, per trainable tensor. velocity must mirror
// params (zeros_like on the first step).
template <typename T>
void sgd_momentum_step(nn::ParameterStore<T>& params, const nn::ParameterStore<T>& grads,
                       nn::ParameterStore<T>& velocity, T lr, T mu) {
    if (params.entries.size() != grads.entries.size() ||
        params.entries.size() != velocity.entries.size())
        throw std::invalid_argument("sgd: store layout mismatch");
    for (std::size_t e = 0; e < params.entries.size(); ++e) {
        auto& p = params.entries[e];
        const auto& g = grads.entries[e];
        auto& v = velocity.entries[e];
        if (p.name != g.name || !(p.value.shape == g.value.shape) ||
            !(p.value.shape == v.value.shape))
            throw std::invalid_argument("sgd: tensor mismatch at " + p.name);
        if (!p.trainable) continue;
        for (std::size_t i = 0; i < p.value.data.size(); ++i) {
            v.value.data[i] = mu * v.value.data[i] + g.value.data[i];
            p.value.data[i] -= lr * v.value.data[i];
        }
    }
}

} // namespace cdsl

#endif
