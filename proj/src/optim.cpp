#include "rltopic/optim.hpp"

#include <cmath>

#include "rltopic/errors.hpp"

namespace rltopic {

AdamW::AdamW(AdamWOptions options, std::span<const Parameter> params) : options_(options) {
    if (!(options_.lr > 0)) throw ConfigError("AdamW: learning rate must be positive");
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Parameter& p : params) {
        m_.emplace_back(p.value.shape());
        v_.emplace_back(p.value.shape());
    }
}

void AdamW::step(std::span<Parameter> params) {
    if (params.size() != m_.size()) throw ConfigError("AdamW: parameter count changed");
    ++step_;
    const real t = static_cast<real>(step_);
    const real bc1 = 1.0 - std::pow(options_.beta1, t);
    const real bc2 = 1.0 - std::pow(options_.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = params[i];
        if (!p.value.same_shape(m_[i]) || !p.grad.same_shape(m_[i])) {
            throw ConfigError("AdamW: shape mismatch for parameter '" + p.name + "'");
        }
        auto w = p.value.data();
        auto g = p.grad.data();
        auto m = m_[i].data();
        auto v = v_[i].data();
        const real decay = p.decay ? 1.0 - options_.lr * options_.weight_decay : 1.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * g[k];
            v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * g[k] * g[k];
            const real m_hat = m[k] / bc1;
            const real v_hat = v[k] / bc2;
            w[k] = w[k] * decay - options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
        }
    }
}

real global_grad_norm(std::span<const Parameter> params) {
    real sq = 0;
    for (const Parameter& p : params)
        for (real g : p.grad.data()) sq += g * g;
    return std::sqrt(sq);
}

ClipResult clip_global_norm(std::span<Parameter> params, real max_norm) {
    if (!(max_norm > 0)) throw ConfigError("clip_global_norm: max_norm must be positive");
    const real norm = global_grad_norm(params);
    if (norm <= max_norm) return {norm, 1.0};
    const real s = max_norm / norm;
    for (Parameter& p : params)
        for (real& g : p.grad.data()) g *= s;
    return {norm, s};
}

}  // namespace rltopic
