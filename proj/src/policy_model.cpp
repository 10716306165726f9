#include "rltopic/policy_model.hpp"

#include <cmath>
#include <numbers>

#include "rltopic/errors.hpp"

namespace rltopic {

void ModelConfig::validate() const {
    if (num_topics < 1) throw ConfigError("num_topics must be >= 1");
    if (vocab_size < 1) throw ConfigError("vocab_size must be >= 1");
    if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
    for (std::size_t h : hidden_layers) {
        if (h < 1) throw ConfigError("hidden layer sizes must be >= 1");
    }
    if (!(inference_dropout >= 0 && inference_dropout < 1)) throw ConfigError("inference_dropout must be in [0, 1)");
    if (!(policy_dropout >= 0 && policy_dropout < 1)) throw ConfigError("policy_dropout must be in [0, 1)");
    if (!(kl_weight >= 0)) throw ConfigError("kl_weight (lambda) must be >= 0");
    if (!(init_std >= 0)) throw ConfigError("init_std must be >= 0");
    if (prior_alpha < 0) throw ConfigError("prior_alpha must be >= 0");
}

real ModelConfig::resolved_prior_alpha() const {
    return prior_alpha > 0 ? prior_alpha : 1.0 / static_cast<real>(num_topics);
}

LaplacePrior laplace_prior_init(real alpha, std::size_t num_topics) {
    if (!(alpha > 0)) throw ConfigError("laplace_prior_init: alpha must be positive");
    if (num_topics < 1) throw ConfigError("laplace_prior_init: num_topics must be >= 1");
    const real n = static_cast<real>(num_topics);
    // symmetric alpha: sum_i log a_i = N log a, sum_i 1/a_i = N / a
    const real mean_log = std::log(alpha);
    const real sum_inv = n / alpha;
    LaplacePrior prior;
    prior.mean.assign(num_topics, std::log(alpha) - mean_log);
    const real var = (1.0 / alpha) * (1.0 - 2.0 / n) + sum_inv / (n * n);
    if (!(var > 0)) {
        throw ConfigError("laplace_prior_init: non-positive variance for N=" + std::to_string(num_topics));
    }
    prior.variance.assign(num_topics, var);
    return prior;
}

PolicyParameters::PolicyParameters(const ModelConfig& config) {
    config.validate();
    std::size_t in = config.input_dim;
    for (std::size_t i = 0; i < config.hidden_layers.size(); ++i) {
        hidden_.push_back(add_layer("hidden." + std::to_string(i), in, config.hidden_layers[i]));
        in = config.hidden_layers[i];
    }
    mu_head_ = add_layer("mu", in, config.num_topics);
    logvar_head_ = add_layer("logvar", in, config.num_topics);
    beta_ = add("beta", {config.num_topics, config.vocab_size}, true);
    decoder_gain_ = add("decoder.ln_gain", {config.vocab_size}, false, 1.0);
    decoder_bias_ = add("decoder.ln_bias", {config.vocab_size}, false);
    prior_mean_ = add("prior.mean", {config.num_topics}, false);
    prior_log_var_ = add("prior.log_var", {config.num_topics}, false);
}

std::size_t PolicyParameters::add(std::string name, std::vector<std::size_t> shape, bool decay, real fill) {
    params_.emplace_back(std::move(name), Tensor(std::move(shape), fill), decay);
    return params_.size() - 1;
}

PolicyParameters::Layer PolicyParameters::add_layer(const std::string& prefix, std::size_t in, std::size_t out) {
    Layer l{};
    l.weight = add(prefix + ".weight", {in, out}, true);
    l.bias = add(prefix + ".bias", {out}, true);
    l.ln_gain = add(prefix + ".ln_gain", {out}, false, 1.0);
    l.ln_bias = add(prefix + ".ln_bias", {out}, false);
    return l;
}

void PolicyParameters::initialize(const ModelConfig& config, RandomSource& init_rng) {
    auto init_normal = [&](std::size_t idx) {
        for (real& v : params_[idx].value.data()) v = config.init_std * init_rng.normal();
    };
    for (const Layer& l : hidden_) init_normal(l.weight);
    init_normal(mu_head_.weight);
    init_normal(logvar_head_.weight);
    init_normal(beta_);

    Tensor& mean = params_[prior_mean_].value;
    Tensor& log_var = params_[prior_log_var_].value;
    if (config.num_topics == 1) {
        // The Laplace variance degenerates to zero for one topic; use N(0, 1).
        mean.fill(0.0);
        log_var.fill(0.0);
    } else {
        const LaplacePrior prior = laplace_prior_init(config.resolved_prior_alpha(), config.num_topics);
        for (std::size_t k = 0; k < config.num_topics; ++k) {
            mean[k] = prior.mean[k];
            log_var[k] = std::log(prior.variance[k]);
        }
    }
}

const Parameter* PolicyParameters::find(const std::string& name) const {
    for (const Parameter& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

std::size_t PolicyParameters::inference_scalar_count() const {
    std::size_t n = 0;
    auto count = [&](const Layer& l) {
        n += params_[l.weight].value.size() + params_[l.bias].value.size() + params_[l.ln_gain].value.size() +
             params_[l.ln_bias].value.size();
    };
    for (const Layer& l : hidden_) count(l);
    count(mu_head_);
    count(logvar_head_);
    return n;
}

std::size_t PolicyParameters::total_scalar_count() const {
    std::size_t n = 0;
    for (const Parameter& p : params_) n += p.value.size();
    return n;
}

void PolicyParameters::zero_grad() {
    for (Parameter& p : params_) p.zero_grad();
}

PolicyModel::PolicyModel(ModelConfig config) : config_(std::move(config)), params_(config_) {}

PolicyModel::PolicyModel(ModelConfig config, std::uint64_t init_seed) : PolicyModel(std::move(config)) {
    RandomSource init = substream(RandomSource(init_seed), Stream::init);
    params_.initialize(config_, init);
}

BoundParams bind(Tape& tape, PolicyParameters& params) {
    BoundParams b{&params, {}};
    b.vars.reserve(params.all().size());
    for (Parameter& p : params.all()) b.vars.push_back(tape.parameter(p));
    return b;
}

BoundParams bind_frozen(Tape& tape, const PolicyParameters& params) {
    BoundParams b{&params, {}};
    b.vars.reserve(params.all().size());
    for (const Parameter& p : params.all()) b.vars.push_back(tape.constant(p.value));
    return b;
}

namespace {

Var affine_ln(const BoundParams& p, const PolicyParameters::Layer& l, Var x) {
    Var h = ops::add_row(ops::matmul(x, p[l.weight]), p[l.bias]);
    return ops::layer_norm(h, p[l.ln_gain], p[l.ln_bias], kLayerNormEps);
}

}  // namespace

PolicyHeads infer(const BoundParams& p, const ModelConfig& config, Var x, Mode mode, RandomSource& dropout_rng) {
    if (x.value().rank() != 2 || x.value().cols() != config.input_dim) {
        throw ConfigError("infer: input width " + std::to_string(x.value().cols()) + " != input_dim " +
                          std::to_string(config.input_dim));
    }
    const bool train = mode == Mode::train;
    Var h = x;
    for (const auto& layer : p.layout->hidden()) {
        h = ops::gelu(affine_ln(p, layer, h));
        h = ops::dropout(h, config.inference_dropout, dropout_rng, train);
    }
    PolicyHeads heads;
    heads.mu = affine_ln(p, p.layout->mu_head(), h);
    heads.log_var = ops::clamp(affine_ln(p, p.layout->logvar_head(), h), kLogVarMin, kLogVarMax);
    return heads;
}

ForwardStreams ForwardStreams::from_seed(std::uint64_t run_seed) {
    RandomSource root(run_seed);
    return {substream(root, Stream::inference_dropout), substream(root, Stream::action),
            substream(root, Stream::policy_dropout)};
}

Tensor draw_noise(RandomSource& rng, std::size_t rows, std::size_t cols) {
    Tensor eps({rows, cols});
    for (real& v : eps.data()) v = rng.normal();
    return eps;
}

namespace {

void apply_dropout_mask(Tensor& t, real drop_prob, RandomSource& rng) {
    const real keep_scale = 1.0 / (1.0 - drop_prob);
    for (real& v : t.data()) v *= rng.bernoulli(drop_prob) ? 0.0 : keep_scale;
}

Tensor perturb(const Tensor& mu, const Tensor& log_var, const Tensor& eps) {
    Tensor a = mu;
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += std::exp(0.5 * log_var[i]) * eps[i];
    return a;
}

}  // namespace

Tensor sample_action(const Tensor& mu, const Tensor& log_var, ForwardStreams& streams, real policy_dropout, Mode mode) {
    if (!mu.same_shape(log_var)) throw ConfigError("sample_action: mu/log_var shape mismatch");
    if (mode == Mode::eval) return mu;
    const Tensor eps = draw_noise(streams.action, mu.rows(), mu.cols());
    Tensor theta = perturb(mu, log_var, eps);
    if (policy_dropout > 0) apply_dropout_mask(theta, policy_dropout, streams.policy_dropout);
    return theta;
}

Var log_policy_density(Var action, Var mu, Var log_var) {
    const real half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    Var sq = ops::square(ops::sub(action, mu));
    Var quad = ops::mul(sq, ops::exp(ops::neg(log_var)));
    Var per_dim = ops::add_scalar(ops::neg(ops::add(ops::scale(log_var, 0.5), ops::scale(quad, 0.5))), -half_log_2pi);
    return ops::sum_rows(per_dim);
}

Var decode(const BoundParams& p, Var theta, bool theta_softmax) {
    const Tensor& beta = p[p.layout->beta()].value();
    if (theta.value().cols() != beta.rows()) {
        throw ConfigError("decode: theta width " + std::to_string(theta.value().cols()) + " != topics " +
                          std::to_string(beta.rows()));
    }
    Var t = theta_softmax ? ops::softmax(theta) : theta;
    Var logits = ops::matmul(t, p[p.layout->beta()]);
    Var normed = ops::layer_norm(logits, p[p.layout->decoder_gain()], p[p.layout->decoder_bias()], kLayerNormEps);
    return ops::log_softmax(normed);
}

Var negative_log_likelihood(Var word_log_probs, Var bow_counts) {
    return ops::neg(ops::sum_rows(ops::mul(word_log_probs, bow_counts)));
}

Var kl_divergence(Var mu_p, Var log_var_p, Var mu_q, Var log_var_q) {
    Var inv_var_q = ops::exp(ops::neg(log_var_q));
    Var mean_term = ops::mul_row(ops::square(ops::add_row(mu_p, ops::neg(mu_q))), inv_var_q);
    Var ratio_term = ops::mul_row(ops::exp(log_var_p), inv_var_q);
    Var log_ratio = ops::add_row(log_var_p, ops::neg(log_var_q));
    Var inner = ops::add_scalar(ops::sub(ops::add(mean_term, ratio_term), log_ratio), -1.0);
    return ops::scale(ops::sum_rows(inner), 0.5);
}

Var weighted_elbo_loss(Var kl, Var nll, real kl_weight) {
    if (!(kl_weight >= 0)) throw ConfigError("weighted_elbo_loss: lambda must be >= 0");
    return ops::add(ops::scale(kl, kl_weight), nll);
}

real weighted_elbo_loss(real kl, real nll, real kl_weight) {
    if (!(kl_weight >= 0)) throw ConfigError("weighted_elbo_loss: lambda must be >= 0");
    return kl_weight * kl + nll;
}

Var reinforce_surrogate(const Tensor& cost, Var log_policy) {
    return ops::mul(log_policy.tape()->constant(cost), log_policy);
}

ForwardResult training_loss(Tape& tape, const BoundParams& p, const ModelConfig& config, const Tensor& x,
                            const Tensor& bow_counts, ForwardStreams& streams, Mode mode) {
    if (x.rows() != bow_counts.rows()) throw ConfigError("training_loss: batch size mismatch between inputs and counts");
    if (bow_counts.cols() != config.vocab_size) throw ConfigError("training_loss: count width != vocab_size");

    const bool train = mode == Mode::train;
    ForwardResult r;
    PolicyHeads heads = infer(p, config, tape.constant(x), mode, streams.inference_dropout);
    r.mu = heads.mu;
    r.log_var = heads.log_var;

    Var theta;
    if (!train) {
        r.action = r.mu.value();
        theta = ops::detach(r.mu);
    } else {
        const Tensor eps = draw_noise(streams.action, r.mu.value().rows(), r.mu.value().cols());
        if (config.use_rl_policy) {
            r.action = perturb(r.mu.value(), r.log_var.value(), eps);
            theta = tape.constant(r.action);
        } else {
            Var sigma = ops::exp(ops::scale(r.log_var, 0.5));
            theta = ops::add(r.mu, ops::mul(sigma, tape.constant(eps)));
            r.action = theta.value();
        }
        theta = ops::dropout(theta, config.policy_dropout, streams.policy_dropout, true);
    }

    r.word_log_probs = decode(p, theta, config.theta_softmax);
    r.nll = negative_log_likelihood(r.word_log_probs, tape.constant(bow_counts));
    r.kl = kl_divergence(r.mu, r.log_var, p[p.layout->prior_mean()], p[p.layout->prior_log_var()]);
    r.log_policy = log_policy_density(tape.constant(r.action), r.mu, r.log_var);

    Var elbo = weighted_elbo_loss(r.kl, r.nll, config.kl_weight);
    r.elbo_loss = elbo.value();
    Var per_example = elbo;
    if (train && config.use_rl_policy) per_example = ops::add(reinforce_surrogate(r.elbo_loss, r.log_policy), elbo);
    r.loss = ops::mean(per_example);
    return r;
}

std::size_t parameter_count(std::size_t inference_scalars, std::size_t num_topics, std::size_t vocab_size) {
    return inference_scalars + num_topics + vocab_size * num_topics;
}

std::size_t parameter_count(const ModelConfig& config) {
    config.validate();
    std::size_t l = 0;
    std::size_t in = config.input_dim;
    auto layer = [&](std::size_t out) {
        l += in * out + 3 * out;
        in = out;
    };
    for (std::size_t h : config.hidden_layers) layer(h);
    const std::size_t head_in = in;
    layer(config.num_topics);
    in = head_in;
    layer(config.num_topics);
    return parameter_count(l, config.num_topics, config.vocab_size);
}

}  // namespace rltopic
