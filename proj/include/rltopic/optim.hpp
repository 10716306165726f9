#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rltopic/autograd.hpp"

namespace rltopic {

struct AdamWOptions {
    real lr = 3e-4;
    real beta1 = 0.9;
    real beta2 = 0.999;
    real eps = 1e-8;
    real weight_decay = 0.01;
};

/// AdamW with bias correction and decoupled weight decay:
///   p <- p * (1 - lr * wd)            (only parameters with decay set)
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
class AdamW {
   public:
    AdamW(AdamWOptions options, std::span<const Parameter> params);

    // Increments the step counter, then updates every parameter from its grad.
    void step(std::span<Parameter> params);

    std::size_t step_count() const { return step_; }
    const AdamWOptions& options() const { return options_; }
    const Tensor& first_moment(std::size_t i) const { return m_[i]; }
    const Tensor& second_moment(std::size_t i) const { return v_[i]; }

   private:
    AdamWOptions options_;
    std::size_t step_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

struct ClipResult {
    real norm;   // global L2 norm before clipping
    real scale;  // factor applied to every gradient (1 when unclipped)
};

real global_grad_norm(std::span<const Parameter> params);

// Scales all gradients by max_norm / norm when the global norm exceeds max_norm.
ClipResult clip_global_norm(std::span<Parameter> params, real max_norm);

}  // namespace rltopic
