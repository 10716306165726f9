#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rltopic/corpus.hpp"
#include "rltopic/embeddings_io.hpp"
#include "rltopic/metrics.hpp"
#include "rltopic/policy_model.hpp"

namespace rltopic {

struct TrainConfig {
    ModelConfig model;
    std::size_t epochs = 1000;
    std::size_t batch_size = 1024;
    real lr = 3e-4;
    real beta1 = 0.9;
    real beta2 = 0.999;
    real adam_eps = 1e-8;
    real weight_decay = 0.01;
    real clip_norm = 1.0;
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> meta_seed;
    std::size_t num_seeds = 1;
    std::size_t top_k = 10;
    std::size_t eval_every = 1;
    bool eval_per_batch = false;
    real npmi_eps = kDefaultNpmiSmoothing;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// n distinct seeds drawn from a RandomSource seeded with meta_seed.
std::vector<std::uint64_t> generate_seeds(std::uint64_t meta_seed, std::size_t n);

/// Seeds a config asks for: meta-seeded list, or the single run seed.
std::vector<std::uint64_t> resolve_seeds(const TrainConfig& c);

/// Corpus-side inputs shared by all runs. The cache is built from `bow` when
/// not supplied.
struct TrainingData {
    const SparseDocTermMatrix* bow = nullptr;
    const InputSource* inputs = nullptr;
    const Vocabulary* vocab = nullptr;
    const CooccurrenceCache* cache = nullptr;
};

struct RunResult {
    std::uint64_t seed = 0;
    TopicReport report;
    MetricsTrace trace;
    std::filesystem::path checkpoint_path;
    double seconds = 0;
    std::optional<PolicyModel> model;
};

/// Fills input_dim / vocab_size from the data (or checks them when preset).
ModelConfig resolve_model_config(const ModelConfig& base, const TrainingData& data);

using EpochCallback = std::function<void(const MetricsRecord&)>;

/// One seeded training run. Writes run.json, trace.csv, model.ntm1 and
/// topics.txt to out_dir when given. A non-finite value aborts with a
/// NumericalError naming the epoch and batch.
RunResult train(const TrainConfig& config, std::uint64_t seed, const TrainingData& data,
                const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                const EpochCallback& on_record = {});

struct Evaluation {
    TopicReport report;
    real perplexity = 0;
    real mean_nll = 0;
    real mean_kl = 0;
};

/// Eval-mode forward pass (theta = mu) over all documents plus topic metrics
/// of beta against the cache's reference corpus.
Evaluation evaluate(const PolicyModel& model, const SparseDocTermMatrix& bow, const InputSource& inputs,
                    std::size_t k, const CooccurrenceCache& cache, const Vocabulary* vocab = nullptr,
                    real npmi_eps = kDefaultNpmiSmoothing, std::size_t batch_size = 1024);

// Dense count matrix of the selected documents.
Tensor dense_counts(const SparseDocTermMatrix& bow, std::span<const std::size_t> docs);

/// Cartesian hyperparameter lattice read from a JSON object of arrays, e.g.
/// {"lambda": [1, 3, 5, 10], "topics": [10, 20]}.
class SweepGrid {
   public:
    static SweepGrid from_json(const nlohmann::json& j);
    static const std::vector<std::string>& supported_keys();

    std::size_t cell_count() const;
    // Axis values of a cell, first axis varying slowest.
    nlohmann::json cell(std::size_t index) const;
    TrainConfig apply(const TrainConfig& base, std::size_t index) const;
    const std::vector<std::pair<std::string, std::vector<nlohmann::json>>>& axes() const { return axes_; }

   private:
    std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes_;
};

struct Summary {
    real mean = 0;
    real ci90 = 0;  // half-width of a 90% normal-approximation interval
    std::size_t n = 0;
};

Summary summarize(std::span<const real> values);

struct SweepCellResult {
    nlohmann::json params;
    std::vector<std::uint64_t> seeds;
    std::vector<TopicReport> reports;
    Summary coherence, diversity, quality;
};

/// Runs every cell x seed on a pool of `workers` threads; results come back
/// in grid order regardless of scheduling.
std::vector<SweepCellResult> sweep(const SweepGrid& grid, const TrainConfig& base, const TrainingData& data,
                                   std::size_t workers, const std::optional<std::filesystem::path>& out_dir);

void write_sweep_table(std::ostream& out, const SweepGrid& grid, std::span<const SweepCellResult> cells);

}  // namespace rltopic
