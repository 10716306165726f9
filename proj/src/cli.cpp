#include "rltopic/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "rltopic/checkpoint.hpp"
#include "rltopic/corpus.hpp"
#include "rltopic/embeddings_io.hpp"
#include "rltopic/errors.hpp"
#include "rltopic/metrics.hpp"
#include "rltopic/trainer.hpp"

namespace rltopic::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kDefaultVocabSize = 2000;

struct DataFlags {
    std::string corpus;
    std::string embeddings;
    std::string embedding_source = "auto";
    std::size_t vocab_size = kDefaultVocabSize;
};

struct TrainFlags {
    TrainConfig config;
    std::uint64_t meta_seed = 0;
    CLI::Option* meta_seed_opt = nullptr;
    bool no_rl_policy = false;
    std::string out_dir = "run";
};

void add_data_options(CLI::App* cmd, DataFlags& d, bool corpus_required) {
    auto* c = cmd->add_option("--corpus", d.corpus,
                              "Preprocessed corpus container, or raw text with one document per line");
    if (corpus_required) c->required();
    cmd->add_option("--embeddings", d.embeddings, "EMB1 document embeddings aligned with the corpus");
    cmd->add_option("--embedding-source", d.embedding_source,
                    "Inference input: file (EMB1) or bow (normalized counts); auto picks file when --embeddings is set")
        ->check(CLI::IsMember({"auto", "file", "bow"}));
    cmd->add_option("--vocab-size", d.vocab_size, "Vocabulary size when --corpus is raw text")
        ->check(CLI::PositiveNumber);
}

void add_train_options(CLI::App* cmd, TrainFlags& f) {
    TrainConfig& c = f.config;
    ModelConfig& m = c.model;
    cmd->add_option("--topics", m.num_topics, "Number of topics N")->check(CLI::PositiveNumber);
    cmd->add_option("--lambda", m.kl_weight, "KL weight")->check(CLI::NonNegativeNumber);
    cmd->add_option("--epochs", c.epochs, "Training epochs")->check(CLI::PositiveNumber);
    cmd->add_option("--batch-size", c.batch_size, "Documents per batch")->check(CLI::PositiveNumber);
    cmd->add_option("--lr", c.lr, "AdamW learning rate")->check(CLI::PositiveNumber);
    cmd->add_option("--beta1", c.beta1, "AdamW beta1")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--beta2", c.beta2, "AdamW beta2")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--weight-decay", c.weight_decay, "Decoupled weight decay")->check(CLI::NonNegativeNumber);
    cmd->add_option("--clip-norm", c.clip_norm, "Global gradient norm limit")->check(CLI::PositiveNumber);
    cmd->add_option("--layers", m.hidden_layers, "Hidden layer sizes, comma separated")->delimiter(',');
    cmd->add_option("--inference-dropout", m.inference_dropout, "Dropout inside the inference network")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--policy-dropout", m.policy_dropout, "Dropout on the sampled topic vector")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_flag("--theta-softmax", m.theta_softmax, "Apply softmax to theta before decoding");
    cmd->add_flag("--no-rl-policy", f.no_rl_policy, "Train with the reparameterized ELBO instead of REINFORCE");
    cmd->add_option("--k", c.top_k, "Top words per topic for metrics")->check(CLI::Range(2, 1 << 20));
    cmd->add_option("--seed", c.seed, "Run seed");
    f.meta_seed_opt = cmd->add_option("--meta-seed", f.meta_seed, "Draw --num-seeds run seeds from this seed");
    cmd->add_option("--num-seeds", c.num_seeds, "Number of seeded runs")->check(CLI::PositiveNumber);
    cmd->add_option("--eval-every", c.eval_every, "Epochs between metric evaluations")->check(CLI::PositiveNumber);
    cmd->add_flag("--eval-per-batch", c.eval_per_batch, "Evaluate metrics after every batch instead");
    cmd->add_option("--out-dir", f.out_dir, "Output directory");
}

TrainConfig finish_train_flags(const TrainFlags& f) {
    TrainConfig c = f.config;
    c.model.use_rl_policy = !f.no_rl_policy;
    if (f.meta_seed_opt->count() > 0) c.meta_seed = f.meta_seed;
    c.validate();
    return c;
}

PreprocessedCorpus open_corpus(const std::string& path, std::size_t vocab_size) {
    if (!fs::exists(path)) throw FormatError("corpus not found: " + path);
    if (is_corpus_file(path)) return load_corpus(path);
    return preprocess_corpus(read_lines(path), PreprocessRules{}, vocab_size);
}

// Owns everything a TrainingData points into.
struct LoadedData {
    PreprocessedCorpus corpus;
    std::optional<InputSource> inputs;
    std::optional<CooccurrenceCache> cache;

    TrainingData view() const { return {&corpus.bow, &*inputs, &corpus.vocab, &*cache}; }
};

std::unique_ptr<LoadedData> load_data(const DataFlags& d) {
    auto data = std::make_unique<LoadedData>();
    data->corpus = open_corpus(d.corpus, d.vocab_size);
    std::string source = d.embedding_source;
    if (source == "auto") source = d.embeddings.empty() ? "bow" : "file";
    if (source == "file") {
        if (d.embeddings.empty()) throw ConfigError("--embedding-source file requires --embeddings");
        data->inputs = InputSource::from_embeddings(read_embeddings(d.embeddings));
    } else {
        data->inputs = InputSource::from_bow(data->corpus.bow);
    }
    data->inputs->check_alignment(data->corpus.bow.num_docs());
    data->cache.emplace(data->corpus.bow);
    return data;
}

void annotate_run_json(const fs::path& dir, const DataFlags& d) {
    const fs::path p = dir / "run.json";
    nlohmann::json j;
    {
        std::ifstream in(p);
        j = nlohmann::json::parse(in);
    }
    j["corpus"] = fs::absolute(d.corpus).string();
    j["embeddings"] = d.embeddings.empty() ? nlohmann::json(nullptr) : nlohmann::json(fs::absolute(d.embeddings).string());
    j["embedding_source"] = d.embedding_source == "auto" ? (d.embeddings.empty() ? "bow" : "file") : d.embedding_source;
    std::ofstream out(p);
    out << j.dump(2) << '\n';
}

std::optional<nlohmann::json> sibling_run_json(const fs::path& checkpoint) {
    const fs::path p = checkpoint.parent_path() / "run.json";
    if (!fs::exists(p)) return std::nullopt;
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

void print_report(std::ostream& out, const TopicReport& r) {
    out << "coherence " << format_6g(r.coherence) << '\n'
        << "diversity " << format_6g(r.diversity) << '\n'
        << "quality " << format_6g(r.quality) << '\n';
}

int cmd_preprocess(const std::string& input, const std::string& output, std::size_t vocab_size,
                   std::size_t min_word_len, const std::string& stopwords, bool keep_case, bool keep_non_alpha,
                   std::ostream& out, std::ostream& err) {
    PreprocessRules rules;
    rules.lowercase = !keep_case;
    rules.strip_non_alpha = !keep_non_alpha;
    rules.min_word_len = min_word_len;
    if (!stopwords.empty()) rules.stopwords = read_stopwords(stopwords);
    const PreprocessedCorpus corpus = preprocess_corpus(read_lines(input), rules, vocab_size);
    save_corpus(output, corpus);
    const std::size_t empty = corpus.bow.empty_rows();
    if (empty) err << "warning: " << empty << " documents have no in-vocabulary tokens\n";
    out << "docs " << corpus.bow.num_docs() << " vocab " << corpus.vocab.size() << " tokens "
        << corpus.bow.total_tokens() << '\n';
    return kOk;
}

int cmd_train(const TrainFlags& flags, const DataFlags& d, std::ostream& out) {
    const TrainConfig config = finish_train_flags(flags);
    const auto data = load_data(d);
    const std::vector<std::uint64_t> seeds = resolve_seeds(config);
    const fs::path root = flags.out_dir;
    for (std::uint64_t seed : seeds) {
        const fs::path dir = seeds.size() == 1 ? root : root / ("seed_" + std::to_string(seed));
        const RunResult r = train(config, seed, data->view(), dir);
        annotate_run_json(dir, d);
        out << "seed " << seed << " dir " << dir.string() << " seconds " << format_6g(r.seconds) << '\n';
        print_report(out, r.report);
    }
    return kOk;
}

int cmd_eval(const std::string& checkpoint, const DataFlags& d, std::size_t k, bool theta_softmax,
             const std::string& reference, std::ostream& out) {
    PolicyModel model = load_checkpoint(checkpoint);
    bool softmax = theta_softmax;
    if (auto run = sibling_run_json(checkpoint); run && run->value("theta_softmax", false)) softmax = true;
    model.set_theta_softmax(softmax);
    const auto data = load_data(d);
    std::optional<CooccurrenceCache> ref_cache;
    const CooccurrenceCache* cache = &*data->cache;
    if (!reference.empty()) {
        const PreprocessedCorpus ref = open_corpus(reference, d.vocab_size);
        if (ref.bow.vocab_size != data->corpus.bow.vocab_size) {
            throw FormatError("reference corpus vocabulary size differs from the evaluation corpus");
        }
        cache = &ref_cache.emplace(ref.bow);
    }
    const Evaluation ev = evaluate(model, data->corpus.bow, *data->inputs, k, *cache, &data->corpus.vocab);
    print_report(out, ev.report);
    out << "perplexity " << format_6g(ev.perplexity) << '\n'
        << "nll " << format_6g(ev.mean_nll) << '\n'
        << "kl " << format_6g(ev.mean_kl) << '\n';
    return kOk;
}

int cmd_topics(const std::string& checkpoint, const std::string& corpus_path, std::size_t k, std::ostream& out) {
    const PolicyModel model = load_checkpoint(checkpoint);
    std::string path = corpus_path;
    if (path.empty()) {
        if (auto run = sibling_run_json(checkpoint); run && run->contains("corpus") && (*run)["corpus"].is_string()) {
            path = (*run)["corpus"].get<std::string>();
        }
    }
    std::optional<Vocabulary> vocab;
    if (!path.empty()) {
        vocab = open_corpus(path, model.config().vocab_size).vocab;
        if (vocab->size() != model.config().vocab_size) {
            throw FormatError("vocabulary size " + std::to_string(vocab->size()) + " does not match model (" +
                              std::to_string(model.config().vocab_size) + ")");
        }
    }
    if (k < 1 || k > model.config().vocab_size) throw ConfigError("--k must be in [1, V]");
    TopicReport report;
    report.topics = top_k_words(model.params().beta_value(), k);
    if (vocab) {
        for (const TopicWords& t : report.topics) {
            std::vector<std::string> words;
            for (std::uint32_t id : t) words.push_back(vocab->word(id));
            report.words.push_back(std::move(words));
        }
    }
    write_topics(out, report);
    return kOk;
}

int cmd_sweep(const std::string& grid_path, const TrainFlags& flags, const DataFlags& d, std::size_t workers,
              std::ostream& out) {
    const TrainConfig base = finish_train_flags(flags);
    nlohmann::json grid_json;
    {
        std::ifstream in(grid_path);
        if (!in) throw FormatError("cannot open grid file " + grid_path);
        grid_json = nlohmann::json::parse(in);
    }
    const SweepGrid grid = SweepGrid::from_json(grid_json);
    const auto data = load_data(d);
    const fs::path root = flags.out_dir;
    const auto cells = sweep(grid, base, data->view(), workers, root);
    {
        std::ofstream table(root / "sweep.csv");
        write_sweep_table(table, grid, cells);
        if (!table) throw FormatError("cannot write " + (root / "sweep.csv").string());
    }
    write_sweep_table(out, grid, cells);
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Neural topic model trained with REINFORCE", args.empty() ? "rltopic" : args.front()};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    std::string pp_input, pp_output, pp_stopwords;
    std::size_t pp_vocab = kDefaultVocabSize, pp_min_len = 3;
    bool pp_keep_case = false, pp_keep_non_alpha = false;
    auto* pre = app.add_subcommand("preprocess", "Tokenize raw documents into a corpus container");
    pre->add_option("--input", pp_input, "Raw documents, one per line")->required();
    pre->add_option("--output", pp_output, "Corpus container to write")->required();
    pre->add_option("--vocab-size", pp_vocab, "Vocabulary size")->check(CLI::PositiveNumber);
    pre->add_option("--min-word-len", pp_min_len, "Minimum token length");
    pre->add_option("--stopwords", pp_stopwords, "Stopword file, one word per line");
    pre->add_flag("--keep-case", pp_keep_case, "Do not lowercase");
    pre->add_flag("--keep-non-alpha", pp_keep_non_alpha, "Split on whitespace instead of keeping letter runs");

    TrainFlags train_flags;
    DataFlags train_data;
    auto* tr = app.add_subcommand("train", "Train one or more seeded runs");
    add_data_options(tr, train_data, true);
    add_train_options(tr, train_flags);

    std::string ev_checkpoint, ev_reference;
    DataFlags ev_data;
    std::size_t ev_k = 10;
    bool ev_softmax = false;
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
    ev->add_option("--checkpoint", ev_checkpoint, "Model checkpoint (.ntm1)")->required();
    add_data_options(ev, ev_data, true);
    ev->add_option("--k", ev_k, "Top words per topic")->check(CLI::Range(2, 1 << 20));
    ev->add_option("--reference", ev_reference, "Reference corpus for coherence (default: --corpus)");
    ev->add_flag("--theta-softmax", ev_softmax, "Apply softmax to theta before decoding");

    std::string tp_checkpoint, tp_corpus;
    std::size_t tp_k = 10;
    auto* tp = app.add_subcommand("topics", "Print the top words of every topic");
    tp->add_option("--checkpoint", tp_checkpoint, "Model checkpoint (.ntm1)")->required();
    tp->add_option("--corpus", tp_corpus, "Corpus providing the vocabulary (default: from run.json)");
    tp->add_option("--k", tp_k, "Words per topic")->check(CLI::PositiveNumber);

    TrainFlags sweep_flags;
    DataFlags sweep_data;
    std::string sw_grid;
    std::size_t sw_workers = 1;
    auto* sw = app.add_subcommand("sweep", "Train every cell of a hyperparameter grid");
    sw->add_option("--grid", sw_grid, "JSON object mapping hyperparameters to value arrays")->required();
    add_data_options(sw, sweep_data, true);
    add_train_options(sw, sweep_flags);
    sw->add_option("--workers", sw_workers, "Concurrent training runs")->check(CLI::PositiveNumber);

    std::vector<std::string> rev(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(rev.begin(), rev.end());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kUsage;
    }

    try {
        if (pre->parsed()) {
            return cmd_preprocess(pp_input, pp_output, pp_vocab, pp_min_len, pp_stopwords, pp_keep_case,
                                  pp_keep_non_alpha, out, err);
        }
        if (tr->parsed()) return cmd_train(train_flags, train_data, out);
        if (ev->parsed()) return cmd_eval(ev_checkpoint, ev_data, ev_k, ev_softmax, ev_reference, out);
        if (tp->parsed()) return cmd_topics(tp_checkpoint, tp_corpus, tp_k, out);
        if (sw->parsed()) return cmd_sweep(sw_grid, sweep_flags, sweep_data, sw_workers, out);
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return kNumerical;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const FormatError& e) {
        err << "data error: " << e.what() << '\n';
        return kData;
    } catch (const nlohmann::json::exception& e) {
        err << "data error: " << e.what() << '\n';
        return kData;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr); }

}  // namespace rltopic::cli
