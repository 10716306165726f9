#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rltopic/autograd.hpp"
#include "rltopic/random.hpp"
#include "rltopic/tensor.hpp"

namespace rltopic {

struct ModelConfig {
    std::size_t num_topics = 20;
    std::size_t vocab_size = 0;
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_layers{128, 128};
    real inference_dropout = 0.2;
    real policy_dropout = 0.0;
    real kl_weight = 5.0;  // lambda
    bool theta_softmax = false;
    bool use_rl_policy = true;
    real init_std = 0.02;
    real prior_alpha = 0.0;  // symmetric Dirichlet concentration; 0 means 1/num_topics

    void validate() const;
    real resolved_prior_alpha() const;
};

enum class Mode { train, eval };

inline constexpr real kLayerNormEps = 1e-5;
inline constexpr real kLogVarMin = -10.0;
inline constexpr real kLogVarMax = 10.0;

struct LaplacePrior {
    std::vector<real> mean;
    std::vector<real> variance;
};

/// Gaussian (softmax basis) approximation of a symmetric Dirichlet(alpha):
///   mean_k = log a_k - (1/N) sum_i log a_i
///   var_k  = (1/a_k)(1 - 2/N) + (1/N^2) sum_i 1/a_i
/// Throws ConfigError when alpha <= 0 or the variance is not positive (N = 1).
LaplacePrior laplace_prior_init(real alpha, std::size_t num_topics);

/// All trainable tensors of the model, in a fixed order.
///
/// Layout: for every hidden layer `hidden.<i>.{weight,bias,ln_gain,ln_bias}`,
/// then `mu.*` and `logvar.*` heads with the same four tensors, then `beta`
/// (N x V), `decoder.ln_gain`, `decoder.ln_bias`, `prior.mean`, `prior.log_var`.
/// Weights are [in x out]. Layer-norm affine terms and the priors are exempt
/// from weight decay.
class PolicyParameters {
   public:
    struct Layer {
        std::size_t weight, bias, ln_gain, ln_bias;
    };

    explicit PolicyParameters(const ModelConfig& config);

    // Weights and beta ~ N(0, init_std); biases 0; gains 1; priors from the
    // Laplace approximation.
    void initialize(const ModelConfig& config, RandomSource& init_rng);

    std::vector<Parameter>& all() { return params_; }
    const std::vector<Parameter>& all() const { return params_; }
    Parameter& at(std::size_t i) { return params_[i]; }
    const Parameter& at(std::size_t i) const { return params_[i]; }
    const Parameter* find(const std::string& name) const;

    const std::vector<Layer>& hidden() const { return hidden_; }
    const Layer& mu_head() const { return mu_head_; }
    const Layer& logvar_head() const { return logvar_head_; }
    std::size_t beta() const { return beta_; }
    std::size_t decoder_gain() const { return decoder_gain_; }
    std::size_t decoder_bias() const { return decoder_bias_; }
    std::size_t prior_mean() const { return prior_mean_; }
    std::size_t prior_log_var() const { return prior_log_var_; }

    const Tensor& beta_value() const { return params_[beta_].value; }

    // Scalars in the hidden stack and both heads (affine + layer-norm terms).
    std::size_t inference_scalar_count() const;
    std::size_t total_scalar_count() const;

    void zero_grad();

   private:
    std::size_t add(std::string name, std::vector<std::size_t> shape, bool decay, real fill = 0);
    Layer add_layer(const std::string& prefix, std::size_t in, std::size_t out);

    std::vector<Parameter> params_;
    std::vector<Layer> hidden_;
    Layer mu_head_{}, logvar_head_{};
    std::size_t beta_ = 0, decoder_gain_ = 0, decoder_bias_ = 0, prior_mean_ = 0, prior_log_var_ = 0;
};

class PolicyModel {
   public:
    explicit PolicyModel(ModelConfig config);
    PolicyModel(ModelConfig config, std::uint64_t init_seed);

    const ModelConfig& config() const { return config_; }
    PolicyParameters& params() { return params_; }
    const PolicyParameters& params() const { return params_; }

    // Decoder options that do not change the parameter layout.
    void set_theta_softmax(bool on) { config_.theta_softmax = on; }

   private:
    ModelConfig config_;
    PolicyParameters params_;
};

/// Parameters placed on a tape, indexed like PolicyParameters::all().
struct BoundParams {
    const PolicyParameters* layout = nullptr;
    std::vector<Var> vars;

    Var operator[](std::size_t i) const { return vars[i]; }
};

BoundParams bind(Tape& tape, PolicyParameters& params);
// Places parameters as constants (no gradients), for evaluation.
BoundParams bind_frozen(Tape& tape, const PolicyParameters& params);

struct PolicyHeads {
    Var mu;
    Var log_var;  // clamped to [kLogVarMin, kLogVarMax]
};

/// Hidden stack of (affine -> layer norm -> GELU -> dropout), then the mu and
/// log-variance heads, each (affine -> layer norm).
PolicyHeads infer(const BoundParams& p, const ModelConfig& config, Var x, Mode mode, RandomSource& dropout_rng);

/// Random streams consumed by one forward pass.
struct ForwardStreams {
    RandomSource inference_dropout;
    RandomSource action;
    RandomSource policy_dropout;

    static ForwardStreams from_seed(std::uint64_t run_seed);
};

// Standard-normal draws [rows x cols] in row-major order.
Tensor draw_noise(RandomSource& rng, std::size_t rows, std::size_t cols);

/// theta = mu + sigma * eps (train) or mu (eval); in train mode policy dropout
/// zeroes entries of theta with inverted scaling.
Tensor sample_action(const Tensor& mu, const Tensor& log_var, ForwardStreams& streams, real policy_dropout, Mode mode);

/// Per-row sum over topics of the diagonal Gaussian log density.
Var log_policy_density(Var action, Var mu, Var log_var);

/// Product-of-experts decoder: log_softmax(layer_norm(theta * beta)).
/// theta is replaced by softmax(theta) first when theta_softmax is set.
Var decode(const BoundParams& p, Var theta, bool theta_softmax);

/// -sum_w count(w) * log p(w), per row.
Var negative_log_likelihood(Var word_log_probs, Var bow_counts);

/// 0.5 * sum_k [ (muP-muQ)^2/varQ + varP/varQ - log(varP/varQ) - 1 ], per row.
Var kl_divergence(Var mu_p, Var log_var_p, Var mu_q, Var log_var_q);

/// lambda * kl + nll (the negated weighted ELBO reward).
Var weighted_elbo_loss(Var kl, Var nll, real kl_weight);
real weighted_elbo_loss(real kl, real nll, real kl_weight);

/// Score-function term cost * log pi with the cost held constant, where
/// cost = -G is the negated single-step return.
Var reinforce_surrogate(const Tensor& cost, Var log_policy);

struct ForwardResult {
    Var loss;  // scalar batch mean
    Var mu;
    Var log_var;
    Tensor action;  // sampled action before policy dropout (mu in eval mode)
    Var log_policy;
    Var word_log_probs;
    Var kl;
    Var nll;
    Tensor elbo_loss;  // per-example lambda * kl + nll
};

/// Assembles the training objective for one batch.
///
/// RL policy on: per-example loss = cost * log pi(a) + lambda * kl + nll with
/// cost = lambda * kl + nll detached. The action enters the decoder as a
/// constant, so the encoder learns only through the score term and the KL,
/// while beta and the decoder layer norm learn through the NLL.
///
/// RL policy off: theta = mu + sigma * eps is differentiated pathwise and the
/// per-example loss is lambda * kl + nll.
///
/// Eval mode: theta = mu, no dropout, loss = mean(lambda * kl + nll).
ForwardResult training_loss(Tape& tape, const BoundParams& p, const ModelConfig& config, const Tensor& x,
                            const Tensor& bow_counts, ForwardStreams& streams, Mode mode);

/// P = L + N + V * N, with L the scalar count of the inference stack and heads.
std::size_t parameter_count(std::size_t inference_scalars, std::size_t num_topics, std::size_t vocab_size);
std::size_t parameter_count(const ModelConfig& config);

}  // namespace rltopic
