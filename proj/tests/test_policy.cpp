#include <cmath>
#include <numbers>

#include "doctest.h"
#include "rltopic/errors.hpp"
#include "rltopic/policy_model.hpp"
#include "support/gradcheck.hpp"

using namespace rltopic;
using rltopic::testing::random_tensor;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.num_topics = 3;
    c.vocab_size = 6;
    c.input_dim = 4;
    c.hidden_layers = {5};
    return c;
}

Tensor counts_for(RandomSource& rng, std::size_t rows, std::size_t v) {
    Tensor t({rows, v});
    for (real& x : t.data()) x = static_cast<real>(rng.uniform_index(4));
    return t;
}

}  // namespace

TEST_CASE("laplace prior examples") {
    for (std::size_t n : {2u, 5u, 20u, 50u}) {
        LaplacePrior p = laplace_prior_init(1.0 / static_cast<real>(n), n);
        for (real m : p.mean) CHECK(m == doctest::Approx(0.0));
        for (real v : p.variance) CHECK(v == doctest::Approx(static_cast<real>(n) - 1.0));
    }
    LaplacePrior p20 = laplace_prior_init(1.0 / 20.0, 20);
    CHECK(p20.variance[0] == doctest::Approx(19.0).epsilon(1e-12));
    LaplacePrior one = laplace_prior_init(1.0, 5);
    CHECK(one.variance[0] == doctest::Approx(0.8));
    CHECK_THROWS_AS(laplace_prior_init(1.0, 1), ConfigError);
    CHECK_THROWS_AS(laplace_prior_init(0.0, 5), ConfigError);
}

TEST_CASE("model config validation") {
    ModelConfig c = small_config();
    c.validate();
    c.num_topics = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.inference_dropout = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.kl_weight = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.hidden_layers = {0};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    CHECK(c.resolved_prior_alpha() == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("parameter layout and initialization") {
    ModelConfig c = small_config();
    PolicyModel m(c, 11);
    const PolicyParameters& p = m.params();
    CHECK(p.all().front().name == "hidden.0.weight");
    CHECK(p.at(p.beta()).value.shape() == std::vector<std::size_t>{3, 6});
    CHECK(p.find("decoder.ln_gain")->decay == false);
    CHECK(p.find("prior.mean")->decay == false);
    CHECK(p.find("beta")->decay == true);
    for (real g : p.find("mu.ln_gain")->value.data()) CHECK(g == 1.0);
    for (real b : p.find("hidden.0.bias")->value.data()) CHECK(b == 0.0);
    CHECK(p.find("prior.log_var")->value[0] == doctest::Approx(std::log(2.0)));

    // weights drawn with std 0.02
    real ss = 0;
    const Tensor& beta = p.beta_value();
    for (real v : beta.data()) ss += v * v;
    CHECK(std::sqrt(ss / static_cast<real>(beta.size())) < 0.05);

    PolicyModel again(c, 11), other(c, 12);
    CHECK(again.params().beta_value() == beta);
    CHECK_FALSE(other.params().beta_value() == beta);
}

TEST_CASE("one topic uses a standard normal prior") {
    ModelConfig c = small_config();
    c.num_topics = 1;
    PolicyModel m(c, 1);
    CHECK(m.params().find("prior.mean")->value[0] == 0.0);
    CHECK(m.params().find("prior.log_var")->value[0] == 0.0);
}

TEST_CASE("zero network gives a standard normal policy") {
    ModelConfig c = small_config();
    PolicyModel m(c);  // all weights zero, gains one
    Tape t;
    BoundParams b = bind_frozen(t, m.params());
    RandomSource rng(1);
    RandomSource in(2);
    PolicyHeads h = infer(b, c, t.constant(random_tensor(in, {4, 4})), Mode::eval, rng);
    for (real v : h.mu.value().data()) CHECK(v == 0.0);
    for (real v : h.log_var.value().data()) CHECK(v == 0.0);
}

TEST_CASE("inference network modes") {
    ModelConfig c = small_config();
    PolicyModel m(c, 3);
    RandomSource in(2);
    const Tensor x = random_tensor(in, {4, 4});
    auto run = [&](Mode mode, real dropout, std::uint64_t seed) {
        ModelConfig cc = c;
        cc.inference_dropout = dropout;
        Tape t;
        BoundParams b = bind_frozen(t, m.params());
        RandomSource rng(seed);
        return infer(b, cc, t.constant(x), mode, rng).mu.value();
    };
    CHECK(run(Mode::eval, 0.2, 1) == run(Mode::eval, 0.2, 2));
    CHECK(run(Mode::train, 0.0, 1) == run(Mode::eval, 0.2, 1));
    CHECK_FALSE(run(Mode::train, 0.5, 1) == run(Mode::eval, 0.5, 1));
}

TEST_CASE("log variance is clamped") {
    ModelConfig c = small_config();
    PolicyModel m(c);
    m.params().at(m.params().logvar_head().ln_bias).value.fill(50.0);
    Tape t;
    BoundParams b = bind_frozen(t, m.params());
    RandomSource rng(1);
    PolicyHeads h = infer(b, c, t.constant(Tensor({2, 4}, 1.0)), Mode::eval, rng);
    for (real v : h.log_var.value().data()) CHECK(v == kLogVarMax);
}

TEST_CASE("sample_action") {
    SUBCASE("collapsed variance returns the mean") {
        ForwardStreams s = ForwardStreams::from_seed(1);
        Tensor mu = Tensor::matrix(1, 3, {0.5, -1.0, 2.0});
        Tensor theta = sample_action(mu, Tensor({1, 3}, -60.0), s, 0.0, Mode::train);
        for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(theta[i] - mu[i]) < 1e-9);
    }
    SUBCASE("monte carlo moments") {
        ForwardStreams s = ForwardStreams::from_seed(2);
        const std::size_t n = 100000;
        Tensor mu({n, 2}), lv({n, 2});
        for (std::size_t r = 0; r < n; ++r) {
            mu.at(r, 0) = 1.5;
            mu.at(r, 1) = -0.5;
            lv.at(r, 0) = std::log(0.25);
            lv.at(r, 1) = std::log(4.0);
        }
        Tensor theta = sample_action(mu, lv, s, 0.0, Mode::train);
        for (std::size_t c = 0; c < 2; ++c) {
            real s1 = 0, s2 = 0;
            for (std::size_t r = 0; r < n; ++r) s1 += theta.at(r, c);
            const real mean = s1 / n;
            for (std::size_t r = 0; r < n; ++r) s2 += (theta.at(r, c) - mean) * (theta.at(r, c) - mean);
            CHECK(mean == doctest::Approx(mu.at(0, c)).epsilon(0.01));
            CHECK(s2 / (n - 1) == doctest::Approx(std::exp(lv.at(0, c))).epsilon(0.01));
        }
    }
    SUBCASE("determinism and eval mode") {
        Tensor mu({2, 2}, 0.3), lv({2, 2}, 0.0);
        ForwardStreams a = ForwardStreams::from_seed(9), b = ForwardStreams::from_seed(9);
        CHECK(sample_action(mu, lv, a, 0.0, Mode::train) == sample_action(mu, lv, b, 0.0, Mode::train));
        CHECK(sample_action(mu, lv, a, 0.5, Mode::eval) == mu);
    }
    SUBCASE("policy dropout zeroes entries") {
        ForwardStreams s = ForwardStreams::from_seed(3);
        Tensor mu({1000, 4}, 1.0), lv({1000, 4}, -60.0);
        Tensor theta = sample_action(mu, lv, s, 0.5, Mode::train);
        std::size_t zeros = 0;
        for (real v : theta.data()) {
            if (v == 0) {
                ++zeros;
            } else {
                CHECK(v == doctest::Approx(2.0));
            }
        }
        CHECK(zeros > 1800);
        CHECK(zeros < 2200);
    }
}

TEST_CASE("log policy density examples") {
    Tape t;
    auto lp = [&](std::vector<real> a, std::vector<real> mu, std::vector<real> lv) {
        const std::size_t n = a.size();
        return log_policy_density(t.constant(Tensor::matrix(1, n, a)), t.constant(Tensor::matrix(1, n, mu)),
                                  t.constant(Tensor::matrix(1, n, lv)))
            .value()[0];
    };
    CHECK(lp({0.7}, {0.7}, {0.0}) == doctest::Approx(-0.918938533).epsilon(1e-9));
    CHECK(lp({1.7}, {0.7}, {0.0}) == doctest::Approx(-1.418938533).epsilon(1e-9));
    const real joint = lp({0.1, -0.4}, {0.3, 0.2}, {0.5, -1.0});
    CHECK(joint == doctest::Approx(lp({0.1}, {0.3}, {0.5}) + lp({-0.4}, {0.2}, {-1.0})).epsilon(1e-12));
    // against the closed-form Gaussian log density
    const real sigma2 = std::exp(0.5);
    const real expected = -0.5 * std::log(2 * std::numbers::pi * sigma2) - 0.04 / (2 * sigma2);
    CHECK(lp({0.1}, {0.3}, {0.5}) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("decoder examples") {
    ModelConfig c = small_config();
    PolicyModel m(c);
    Tape t;
    BoundParams b = bind_frozen(t, m.params());
    Var out = decode(b, t.constant(Tensor({2, 3}, 0.0)), false);
    for (real v : out.value().data()) CHECK(v == doctest::Approx(std::log(1.0 / 6.0)).epsilon(1e-12));

    PolicyModel r(c, 5);
    Tape t2;
    BoundParams b2 = bind_frozen(t2, r.params());
    RandomSource rng(4);
    for (bool sm : {false, true}) {
        Var lp = decode(b2, t2.constant(random_tensor(rng, {3, 3}, 2.0)), sm);
        for (std::size_t row = 0; row < 3; ++row) {
            real s = 0;
            for (std::size_t w = 0; w < 6; ++w) s += std::exp(lp.value().at(row, w));
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(decode(b2, t2.constant(Tensor({1, 2}, 0.0)), false), ConfigError);
}

TEST_CASE("negative log likelihood examples") {
    Tape t;
    const real lq = std::log(0.25);
    Var wlp = t.constant(Tensor({2, 4}, lq));
    Tensor counts = Tensor::matrix(2, 4, {1, 0, 2, 0, 0, 0, 0, 0});
    Var nll = negative_log_likelihood(wlp, t.constant(counts));
    CHECK(nll.value()[0] == doctest::Approx(3 * std::log(4.0)));
    CHECK(nll.value()[0] == doctest::Approx(4.1589).epsilon(1e-4));
    CHECK(nll.value()[1] == 0.0);
    Tensor doubled = counts;
    for (real& v : doubled.data()) v *= 2;
    CHECK(negative_log_likelihood(wlp, t.constant(doubled)).value()[0] == doctest::Approx(2 * nll.value()[0]));
}

TEST_CASE("KL divergence closed forms") {
    Tape t;
    auto kl = [&](std::vector<real> mp, std::vector<real> lvp, std::vector<real> mq, std::vector<real> lvq) {
        const std::size_t n = mp.size();
        return kl_divergence(t.constant(Tensor::matrix(1, n, mp)), t.constant(Tensor::matrix(1, n, lvp)),
                             t.constant(Tensor::vector(mq)), t.constant(Tensor::vector(lvq)))
            .value()[0];
    };
    CHECK(kl({0.3, -1}, {0.2, 0.1}, {0.3, -1}, {0.2, 0.1}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(kl({1}, {0}, {0}, {0}) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(kl({0, 0}, {std::log(2.0), std::log(2.0)}, {0, 0}, {0, 0}) ==
          doctest::Approx(2.0 - std::log(2.0) - 1.0).epsilon(1e-12));
    CHECK(kl({0, 0}, {std::log(2.0), std::log(2.0)}, {0, 0}, {0, 0}) == doctest::Approx(0.30685).epsilon(1e-5));
}

TEST_CASE("weighted ELBO loss") {
    CHECK(weighted_elbo_loss(2.0, 10.0, 5.0) == 20.0);
    CHECK(weighted_elbo_loss(2.0, 10.0, 1.0) == 12.0);
    CHECK(weighted_elbo_loss(2.0, 10.0, 0.0) == 10.0);
    CHECK_THROWS_AS(weighted_elbo_loss(2.0, 10.0, -1.0), ConfigError);
    // nondecreasing in lambda for kl >= 0
    real prev = -1;
    for (real l = 0; l <= 10; l += 0.5) {
        const real v = weighted_elbo_loss(0.7, 3.0, l);
        CHECK(v >= prev);
        prev = v;
    }
}

TEST_CASE("score-function gradient of the toy model matches the closed form") {
    // N = 1, V = 2: the surrogate cost * log pi(a) has d/dmu = cost * (a - mu) / sigma^2.
    RandomSource rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const real mu = rng.normal(), lv = 0.5 * rng.normal(), a = mu + rng.normal(), cost = 10 * rng.normal();
        Tape t;
        Var vmu = t.variable(Tensor::matrix(1, 1, {mu}));
        Var vlv = t.variable(Tensor::matrix(1, 1, {lv}));
        Var lp = log_policy_density(t.constant(Tensor::matrix(1, 1, {a})), vmu, vlv);
        t.backward(ops::sum(reinforce_surrogate(Tensor::vector({cost}), lp)));
        const real var = std::exp(lv);
        CHECK(t.grad(vmu)[0] == doctest::Approx(cost * (a - mu) / var).epsilon(1e-10));
        const real dlv = cost * (-0.5 + 0.5 * (a - mu) * (a - mu) / var);
        CHECK(t.grad(vlv)[0] == doctest::Approx(dlv).epsilon(1e-10));
    }
}

TEST_CASE("training loss without the policy term matches finite differences") {
    RandomSource rng(23);
    for (int trial = 0; trial < 3; ++trial) {
        ModelConfig c = small_config();
        c.use_rl_policy = false;
        c.theta_softmax = trial == 1;
        c.inference_dropout = trial == 2 ? 0.3 : 0.0;
        c.kl_weight = 2.0;
        PolicyModel m(c, 100 + trial);
        for (Parameter& p : m.params().all())
            for (real& v : p.value.data()) v += 0.3 * rng.normal();
        const Tensor x = random_tensor(rng, {3, 4});
        const Tensor counts = counts_for(rng, 3, 6);
        std::vector<Tensor> inputs;
        for (const Parameter& p : m.params().all()) inputs.push_back(p.value);
        auto loss = [&](Tape& t, const std::vector<Var>& vars) {
            BoundParams b{&m.params(), vars};
            ForwardStreams s = ForwardStreams::from_seed(5);  // frozen noise
            return training_loss(t, b, c, x, counts, s, Mode::train).loss;
        };
        auto r = rltopic::testing::gradcheck(loss, inputs);
        CAPTURE(trial);
        CHECK(r.max_rel_error < 1e-5);
    }
}

TEST_CASE("training loss routing with the policy term") {
    ModelConfig c = small_config();
    c.kl_weight = 3.0;
    PolicyModel m(c, 7);
    RandomSource rng(3);
    const Tensor x = random_tensor(rng, {4, 4});
    const Tensor counts = counts_for(rng, 4, 6);

    Tape t;
    BoundParams b = bind(t, m.params());
    ForwardStreams s = ForwardStreams::from_seed(1);
    m.params().zero_grad();
    ForwardResult r = training_loss(t, b, c, x, counts, s, Mode::train);
    t.backward(r.loss);

    // Reported per-example ELBO equals lambda * kl + nll.
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(r.elbo_loss[i] == doctest::Approx(3.0 * r.kl.value()[i] + r.nll.value()[i]));
    }
    // The prior only sees the KL term: compare with d(mean lambda*kl)/d prior.
    Tape t2;
    BoundParams b2 = bind_frozen(t2, m.params());
    Var pm = t2.variable(m.params().find("prior.mean")->value);
    Var plv = t2.variable(m.params().find("prior.log_var")->value);
    Var kl = kl_divergence(t2.constant(r.mu.value()), t2.constant(r.log_var.value()), pm, plv);
    t2.backward(ops::scale(ops::mean(kl), 3.0));
    const Tensor& g = m.params().find("prior.mean")->grad;
    for (std::size_t k = 0; k < 3; ++k) CHECK(g[k] == doctest::Approx(t2.grad(pm)[k]).epsilon(1e-10));

    // beta learns through the NLL only: its gradient equals d(mean nll)/d beta
    // with theta held at the sampled action.
    Tape t3;
    BoundParams b3 = bind_frozen(t3, m.params());
    Var beta = t3.variable(m.params().beta_value());
    b3.vars[m.params().beta()] = beta;
    Var wlp = decode(b3, t3.constant(r.action), false);
    t3.backward(ops::mean(negative_log_likelihood(wlp, t3.constant(counts))));
    const Tensor& gb = m.params().at(m.params().beta()).grad;
    for (std::size_t i = 0; i < gb.size(); ++i) CHECK(gb[i] == doctest::Approx(t3.grad(beta)[i]).epsilon(1e-10));
}

TEST_CASE("degenerate reward reduces the policy loss to the ELBO") {
    ModelConfig c = small_config();
    PolicyModel m(c, 2);
    m.params().at(m.params().logvar_head().ln_bias).value.fill(-10.0);
    RandomSource rng(6);
    const Tensor x = random_tensor(rng, {2, 4});
    const Tensor counts(std::vector<std::size_t>{2, 6}, 0.0);  // empty documents
    Tape t;
    BoundParams b = bind_frozen(t, m.params());
    ForwardStreams s = ForwardStreams::from_seed(1);
    ModelConfig c0 = c;
    c0.kl_weight = 0.0;  // cost = 0
    ForwardResult r = training_loss(t, b, c0, x, counts, s, Mode::train);
    CHECK(r.loss.value().item() == doctest::Approx(0.0).epsilon(1e-12));

    Tape te;
    BoundParams be = bind_frozen(te, m.params());
    ForwardStreams s2 = ForwardStreams::from_seed(1);
    ForwardResult re = training_loss(te, be, c, x, counts, s2, Mode::eval);
    real mean = 0;
    for (real v : re.elbo_loss.data()) mean += v / 2;
    CHECK(re.loss.value().item() == doctest::Approx(mean));
    for (std::size_t i = 0; i < re.action.size(); ++i) CHECK(re.action[i] == re.mu.value()[i]);
}

TEST_CASE("parameter count") {
    CHECK(parameter_count(1024, 200, 20000) == 4001224);
    CHECK(parameter_count(0, 1, 1) == 2);
    for (auto layers : {std::vector<std::size_t>{}, {7}, {5, 3}}) {
        ModelConfig c = small_config();
        c.hidden_layers = layers;
        PolicyParameters p(c);
        CHECK(parameter_count(c) == parameter_count(p.inference_scalar_count(), c.num_topics, c.vocab_size));
        // enumeration: everything but the decoder layer norm and the prior variance
        const std::size_t extra = 2 * c.vocab_size + c.num_topics;
        CHECK(p.total_scalar_count() == parameter_count(c) + extra);
    }
}
