#include "rltopic/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "rltopic/checkpoint.hpp"
#include "rltopic/errors.hpp"
#include "rltopic/optim.hpp"

namespace rltopic {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0)) throw ConfigError("learning rate must be > 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must be in [0, 1)");
    if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
    if (!(clip_norm > 0)) throw ConfigError("clip_norm must be > 0");
    if (num_seeds < 1) throw ConfigError("num_seeds must be >= 1");
    if (top_k < 2) throw ConfigError("K must be >= 2");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (!(npmi_eps >= 0)) throw ConfigError("npmi smoothing must be >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["topics"] = c.model.num_topics;
    j["vocab_size"] = c.model.vocab_size;
    j["input_dim"] = c.model.input_dim;
    j["layers"] = c.model.hidden_layers;
    j["inference_dropout"] = c.model.inference_dropout;
    j["policy_dropout"] = c.model.policy_dropout;
    j["lambda"] = c.model.kl_weight;
    j["theta_softmax"] = c.model.theta_softmax;
    j["rl_policy"] = c.model.use_rl_policy;
    j["init_std"] = c.model.init_std;
    j["prior_alpha"] = c.model.resolved_prior_alpha();
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["lr"] = c.lr;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["adam_eps"] = c.adam_eps;
    j["weight_decay"] = c.weight_decay;
    j["clip_norm"] = c.clip_norm;
    j["seed"] = c.seed;
    j["meta_seed"] = c.meta_seed ? nlohmann::json(*c.meta_seed) : nlohmann::json(nullptr);
    j["num_seeds"] = c.num_seeds;
    j["k"] = c.top_k;
    j["eval_every"] = c.eval_every;
    j["eval_per_batch"] = c.eval_per_batch;
    j["npmi_eps"] = c.npmi_eps;
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("topics", c.model.num_topics);
    get("vocab_size", c.model.vocab_size);
    get("input_dim", c.model.input_dim);
    get("layers", c.model.hidden_layers);
    get("inference_dropout", c.model.inference_dropout);
    get("policy_dropout", c.model.policy_dropout);
    get("lambda", c.model.kl_weight);
    get("theta_softmax", c.model.theta_softmax);
    get("rl_policy", c.model.use_rl_policy);
    get("init_std", c.model.init_std);
    get("prior_alpha", c.model.prior_alpha);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("lr", c.lr);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("adam_eps", c.adam_eps);
    get("weight_decay", c.weight_decay);
    get("clip_norm", c.clip_norm);
    get("seed", c.seed);
    if (j.contains("meta_seed") && !j.at("meta_seed").is_null()) c.meta_seed = j.at("meta_seed").get<std::uint64_t>();
    get("num_seeds", c.num_seeds);
    get("k", c.top_k);
    get("eval_every", c.eval_every);
    get("eval_per_batch", c.eval_per_batch);
    get("npmi_eps", c.npmi_eps);
    return c;
}

std::vector<std::uint64_t> generate_seeds(std::uint64_t meta_seed, std::size_t n) {
    if (n < 1) throw ConfigError("generate_seeds: n must be >= 1");
    RandomSource rng(meta_seed);
    std::vector<std::uint64_t> seeds;
    std::set<std::uint64_t> seen;
    while (seeds.size() < n) {
        const std::uint64_t s = rng.next_u64();
        if (seen.insert(s).second) seeds.push_back(s);
    }
    return seeds;
}

std::vector<std::uint64_t> resolve_seeds(const TrainConfig& c) {
    if (c.meta_seed) return generate_seeds(*c.meta_seed, c.num_seeds);
    if (c.num_seeds == 1) return {c.seed};
    return generate_seeds(c.seed, c.num_seeds);
}

ModelConfig resolve_model_config(const ModelConfig& base, const TrainingData& data) {
    if (!data.bow || !data.inputs) throw ConfigError("training data requires a corpus and inputs");
    ModelConfig m = base;
    if (m.vocab_size == 0) m.vocab_size = data.bow->vocab_size;
    if (m.input_dim == 0) m.input_dim = data.inputs->dim();
    if (m.vocab_size != data.bow->vocab_size) {
        throw FormatError("model vocab size " + std::to_string(m.vocab_size) + " != corpus vocab size " +
                          std::to_string(data.bow->vocab_size));
    }
    if (m.input_dim != data.inputs->dim()) {
        throw FormatError("model input_dim " + std::to_string(m.input_dim) + " != input width " +
                          std::to_string(data.inputs->dim()));
    }
    m.validate();
    return m;
}

Tensor dense_counts(const SparseDocTermMatrix& bow, std::span<const std::size_t> docs) {
    const std::size_t v = bow.vocab_size;
    Tensor out({docs.size(), v});
    for (std::size_t r = 0; r < docs.size(); ++r) {
        for (const auto& [w, count] : bow.rows.at(docs[r])) out[r * v + w] = static_cast<real>(count);
    }
    return out;
}

Evaluation evaluate(const PolicyModel& model, const SparseDocTermMatrix& bow, const InputSource& inputs,
                    std::size_t k, const CooccurrenceCache& cache, const Vocabulary* vocab, real npmi_eps,
                    std::size_t batch_size) {
    const ModelConfig& cfg = model.config();
    if (bow.vocab_size != cfg.vocab_size) {
        throw FormatError("vocabulary size " + std::to_string(bow.vocab_size) + " does not match model (" +
                          std::to_string(cfg.vocab_size) + ")");
    }
    if (inputs.dim() != cfg.input_dim) {
        throw FormatError("input width " + std::to_string(inputs.dim()) + " does not match model input_dim " +
                          std::to_string(cfg.input_dim));
    }
    inputs.check_alignment(bow.num_docs());
    if (batch_size < 1) batch_size = 1;

    Evaluation ev;
    ev.report = make_topic_report(model.params().beta_value(), k, cache, vocab, npmi_eps);

    ForwardStreams streams = ForwardStreams::from_seed(0);  // unused in eval mode
    real total_nll = 0, total_kl = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < bow.num_docs(); start += batch_size) {
        idx.resize(std::min(batch_size, bow.num_docs() - start));
        std::iota(idx.begin(), idx.end(), start);
        Tape tape;
        BoundParams bound = bind_frozen(tape, model.params());
        ForwardResult fr = training_loss(tape, bound, cfg, inputs.batch(idx), dense_counts(bow, idx), streams, Mode::eval);
        for (real v : fr.nll.value().data()) total_nll += v;
        for (real v : fr.kl.value().data()) total_kl += v;
    }
    const std::size_t tokens = bow.total_tokens();
    ev.perplexity = tokens ? perplexity(total_nll, tokens) : 0.0;
    ev.mean_nll = total_nll / static_cast<real>(bow.num_docs());
    ev.mean_kl = total_kl / static_cast<real>(bow.num_docs());
    return ev;
}

namespace {

void write_run_dir(const std::filesystem::path& dir, const TrainConfig& config, std::uint64_t seed,
                   const RunResult& result, const PolicyModel& model) {
    std::filesystem::create_directories(dir);
    nlohmann::json j = to_json(config);
    j["run_seed"] = seed;
    {
        std::ofstream out(dir / "run.json");
        out << j.dump(2) << '\n';
        if (!out) throw FormatError("cannot write " + (dir / "run.json").string());
    }
    {
        std::ofstream out(dir / "trace.csv");
        result.trace.write_csv(out);
        if (!out) throw FormatError("cannot write " + (dir / "trace.csv").string());
    }
    {
        std::ofstream out(dir / "topics.txt");
        write_topics(out, result.report);
        if (!out) throw FormatError("cannot write " + (dir / "topics.txt").string());
    }
    save_checkpoint(model, dir / "model.ntm1");
}

}  // namespace

RunResult train(const TrainConfig& config_in, std::uint64_t seed, const TrainingData& data,
                const std::optional<std::filesystem::path>& out_dir, const EpochCallback& on_record) {
    const auto t0 = std::chrono::steady_clock::now();
    config_in.validate();
    TrainConfig config = config_in;
    config.model = resolve_model_config(config_in.model, data);
    const SparseDocTermMatrix& bow = *data.bow;
    const InputSource& inputs = *data.inputs;
    inputs.check_alignment(bow.num_docs());
    if (bow.num_docs() == 0) throw FormatError("corpus has no documents");

    std::optional<CooccurrenceCache> own_cache;
    const CooccurrenceCache* cache = data.cache;
    if (!cache) cache = &own_cache.emplace(bow);

    PolicyModel model(config.model, seed);
    PolicyParameters& params = model.params();
    AdamW optimizer({config.lr, config.beta1, config.beta2, config.adam_eps, config.weight_decay}, params.all());
    ForwardStreams streams = ForwardStreams::from_seed(seed);
    RandomSource shuffle_rng = substream(RandomSource(seed), Stream::shuffle);

    RunResult result;
    result.seed = seed;

    const std::size_t n_docs = bow.num_docs();
    const std::size_t n_batches = (n_docs + config.batch_size - 1) / config.batch_size;
    std::vector<std::size_t> order(n_docs);
    std::iota(order.begin(), order.end(), std::size_t{0});

    auto record = [&](real epoch, real loss, real kl, real nll) {
        Evaluation ev = evaluate(model, bow, inputs, config.top_k, *cache, data.vocab, config.npmi_eps);
        MetricsRecord r{epoch, loss, kl, nll, ev.report.coherence, ev.report.diversity, ev.report.quality,
                        ev.perplexity};
        result.trace.append(r);
        result.report = std::move(ev.report);
        if (on_record) on_record(r);
    };

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        real epoch_loss = 0, epoch_kl = 0, epoch_nll = 0;
        for (std::size_t b = 0; b < n_batches; ++b) {
            const std::size_t start = b * config.batch_size;
            const std::span<const std::size_t> idx(order.data() + start, std::min(config.batch_size, n_docs - start));
            real batch_loss = 0, batch_kl = 0, batch_nll = 0;
            try {
                params.zero_grad();
                Tape tape;
                BoundParams bound = bind(tape, params);
                ForwardResult fr = training_loss(tape, bound, config.model, inputs.batch(idx), dense_counts(bow, idx),
                                                 streams, Mode::train);
                tape.backward(fr.loss);
                for (const Parameter& p : params.all()) {
                    if (!p.grad.all_finite()) throw NumericalError("non-finite gradient for '" + p.name + "'");
                }
                clip_global_norm(params.all(), config.clip_norm);
                optimizer.step(params.all());
                for (real v : fr.elbo_loss.data()) batch_loss += v;
                for (real v : fr.kl.value().data()) batch_kl += v;
                for (real v : fr.nll.value().data()) batch_nll += v;
            } catch (const NumericalError& e) {
                throw NumericalError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1) + ": " +
                                     e.what());
            }
            epoch_loss += batch_loss;
            epoch_kl += batch_kl;
            epoch_nll += batch_nll;
            if (config.eval_per_batch) {
                const real n = static_cast<real>(idx.size());
                record(static_cast<real>(epoch - 1) + static_cast<real>(b + 1) / static_cast<real>(n_batches),
                       batch_loss / n, batch_kl / n, batch_nll / n);
            }
        }
        if (!config.eval_per_batch && epoch % config.eval_every == 0) {
            const real n = static_cast<real>(n_docs);
            record(static_cast<real>(epoch), epoch_loss / n, epoch_kl / n, epoch_nll / n);
        }
    }
    if (result.trace.empty() || result.trace.back().epoch != static_cast<real>(config.epochs)) {
        // final report even when epochs is not a multiple of eval_every
        result.report = make_topic_report(params.beta_value(), config.top_k, *cache, data.vocab, config.npmi_eps);
    }

    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (out_dir) {
        write_run_dir(*out_dir, config, seed, result, model);
        result.checkpoint_path = *out_dir / "model.ntm1";
    }
    result.model = std::move(model);
    return result;
}

namespace {

const std::vector<std::string> kSweepKeys = {"topics",     "lambda",         "policy_dropout", "inference_dropout",
                                             "theta_softmax", "rl_policy",   "layers",         "lr",
                                             "batch_size", "epochs",         "weight_decay",   "k"};

}  // namespace

const std::vector<std::string>& SweepGrid::supported_keys() { return kSweepKeys; }

SweepGrid SweepGrid::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw FormatError("sweep grid: expected a JSON object of arrays");
    SweepGrid g;
    for (const std::string& key : kSweepKeys) {
        if (!j.contains(key)) continue;
        const auto& values = j.at(key);
        if (!values.is_array() || values.empty()) throw FormatError("sweep grid: '" + key + "' must be a non-empty array");
        g.axes_.emplace_back(key, std::vector<nlohmann::json>(values.begin(), values.end()));
    }
    for (const auto& [key, value] : j.items()) {
        if (std::find(kSweepKeys.begin(), kSweepKeys.end(), key) == kSweepKeys.end()) {
            throw FormatError("sweep grid: unsupported key '" + key + "'");
        }
    }
    return g;
}

std::size_t SweepGrid::cell_count() const {
    std::size_t n = 1;
    for (const auto& [key, values] : axes_) n *= values.size();
    return n;
}

nlohmann::json SweepGrid::cell(std::size_t index) const {
    if (index >= cell_count()) throw ConfigError("sweep grid: cell index out of range");
    nlohmann::json out = nlohmann::json::object();
    for (std::size_t a = axes_.size(); a-- > 0;) {
        const auto& [key, values] = axes_[a];
        out[key] = values[index % values.size()];
        index /= values.size();
    }
    return out;
}

TrainConfig SweepGrid::apply(const TrainConfig& base, std::size_t index) const {
    nlohmann::json j = to_json(base);
    j["prior_alpha"] = base.model.prior_alpha;
    const nlohmann::json values = cell(index);
    for (const auto& [key, value] : values.items()) j[key] = value;
    try {
        TrainConfig c = train_config_from_json(j);
        c.meta_seed = base.meta_seed;
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("sweep grid: bad value: ") + e.what());
    }
}

Summary summarize(std::span<const real> values) {
    Summary s;
    s.n = values.size();
    if (values.empty()) return s;
    s.mean = std::accumulate(values.begin(), values.end(), real{0}) / static_cast<real>(s.n);
    if (s.n > 1) {
        real ss = 0;
        for (real v : values) ss += (v - s.mean) * (v - s.mean);
        const real sd = std::sqrt(ss / static_cast<real>(s.n - 1));
        s.ci90 = 1.6448536269514722 * sd / std::sqrt(static_cast<real>(s.n));
    }
    return s;
}

std::vector<SweepCellResult> sweep(const SweepGrid& grid, const TrainConfig& base, const TrainingData& data,
                                   std::size_t workers, const std::optional<std::filesystem::path>& out_dir) {
    const std::size_t n_cells = grid.cell_count();
    if (n_cells == 0) throw ConfigError("sweep: empty grid");
    std::vector<TrainConfig> configs;
    for (std::size_t c = 0; c < n_cells; ++c) configs.push_back(grid.apply(base, c));
    const std::vector<std::uint64_t> seeds = resolve_seeds(base);

    std::optional<CooccurrenceCache> own_cache;
    TrainingData shared = data;
    if (!shared.cache) shared.cache = &own_cache.emplace(*data.bow);

    const std::size_t n_jobs = n_cells * seeds.size();
    std::vector<TopicReport> reports(n_jobs);
    std::vector<std::exception_ptr> errors(n_jobs);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t job = next++; job < n_jobs; job = next++) {
            const std::size_t c = job / seeds.size(), s = job % seeds.size();
            try {
                std::optional<std::filesystem::path> dir;
                if (out_dir) {
                    std::ostringstream name;
                    name << "cell_" << std::setw(3) << std::setfill('0') << c << "/seed_" << seeds[s];
                    dir = *out_dir / name.str();
                }
                reports[job] = train(configs[c], seeds[s], shared, dir).report;
            } catch (...) {
                errors[job] = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, n_jobs));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<SweepCellResult> cells(n_cells);
    for (std::size_t c = 0; c < n_cells; ++c) {
        SweepCellResult& cell = cells[c];
        cell.params = grid.cell(c);
        cell.seeds = seeds;
        std::vector<real> coh, div, qual;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const TopicReport& r = reports[c * seeds.size() + s];
            coh.push_back(r.coherence);
            div.push_back(r.diversity);
            qual.push_back(r.quality);
            cell.reports.push_back(r);
        }
        cell.coherence = summarize(coh);
        cell.diversity = summarize(div);
        cell.quality = summarize(qual);
    }
    return cells;
}

void write_sweep_table(std::ostream& out, const SweepGrid& grid, std::span<const SweepCellResult> cells) {
    out << "cell";
    for (const auto& [key, values] : grid.axes()) out << ',' << key;
    out << ",seeds,coherence_mean,coherence_ci90,diversity_mean,diversity_ci90,quality_mean,quality_ci90\n";
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const SweepCellResult& cell = cells[c];
        out << c;
        for (const auto& [key, values] : grid.axes()) {
            std::string v = cell.params.at(key).dump();
            std::replace(v.begin(), v.end(), ',', ';');
            out << ',' << v;
        }
        out << ',' << cell.seeds.size() << ',' << format_6g(cell.coherence.mean) << ','
            << format_6g(cell.coherence.ci90) << ',' << format_6g(cell.diversity.mean) << ','
            << format_6g(cell.diversity.ci90) << ',' << format_6g(cell.quality.mean) << ','
            << format_6g(cell.quality.ci90) << '\n';
    }
}

}  // namespace rltopic
