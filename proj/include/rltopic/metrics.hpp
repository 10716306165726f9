#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rltopic/corpus.hpp"
#include "rltopic/tensor.hpp"

namespace rltopic {

using TopicWords = std::vector<std::uint32_t>;  // ranked word ids of one topic
using WordPair = std::pair<std::uint32_t, std::uint32_t>;

/// Document-level co-occurrence statistics of a reference corpus.
///
/// Each word keeps a bitset over documents; pair counts are computed on
/// demand by AND + popcount and memoized. Reads are safe from multiple
/// threads, memo insertion is serialized.
class CooccurrenceCache {
   public:
    explicit CooccurrenceCache(const SparseDocTermMatrix& bow);

    std::size_t doc_count() const { return doc_count_; }
    std::size_t vocab_size() const { return vocab_size_; }
    std::size_t word_doc_count(std::size_t w) const { return word_doc_count_.at(w); }
    std::size_t pair_doc_count(std::size_t i, std::size_t j) const;

    // Computes all missing pair counts in one parallel pass.
    void prefetch(std::span<const WordPair> pairs) const;
    std::size_t memo_size() const;

   private:
    static std::uint64_t key(std::size_t i, std::size_t j);
    std::span<const std::uint64_t> bits(std::size_t w) const {
        return {bits_.data() + w * words_per_set_, words_per_set_};
    }

    std::size_t doc_count_ = 0;
    std::size_t vocab_size_ = 0;
    std::size_t words_per_set_ = 0;
    std::vector<std::uint64_t> bits_;
    std::vector<std::size_t> word_doc_count_;
    mutable std::shared_mutex memo_mutex_;
    mutable std::unordered_map<std::uint64_t, std::uint32_t> memo_;
};

inline constexpr real kDefaultNpmiSmoothing = 1.0;

/// NPMI of one pair from document counts. The smoothing count eps is added
/// to the joint count only: p_ij = (c_ij + eps) / D. Pairs with p_ij = 0
/// score -1 and pairs with p_ij >= 1 score 0; a word absent from the
/// reference corpus scores -1 against everything.
real npmi_from_counts(std::size_t count_i, std::size_t count_j, std::size_t count_ij, std::size_t docs, real eps);

struct CoherenceResult {
    std::vector<real> per_topic;  // mean NPMI over the K(K-1)/2 unordered pairs
    real model = 0;               // mean over topics
};

CoherenceResult npmi_coherence(std::span<const TopicWords> topics, const CooccurrenceCache& cache,
                               real eps = kDefaultNpmiSmoothing);

/// |union of top-K lists| / (K * number of topics)
real topic_diversity(std::span<const TopicWords> topics);

real topic_quality(real coherence, real diversity);

/// Per row of beta, the K column ids with the largest values in descending
/// order (ties by ascending id).
std::vector<TopicWords> top_k_words(const Tensor& beta, std::size_t k);

/// exp(total NLL / total tokens).
real perplexity(real total_nll, std::size_t total_tokens);
real perplexity(const Tensor& word_log_probs, std::span<const SparseRow> rows);

struct TopicReport {
    std::size_t k = 0;
    std::vector<TopicWords> topics;
    std::vector<std::vector<std::string>> words;  // empty without a vocabulary
    std::vector<real> topic_coherence;
    real coherence = 0;
    real diversity = 0;
    real quality = 0;
};

TopicReport make_topic_report(const Tensor& beta, std::size_t k, const CooccurrenceCache& cache,
                              const Vocabulary* vocab = nullptr, real eps = kDefaultNpmiSmoothing);

// One line per topic, words (or ids) separated by single spaces.
void write_topics(std::ostream& out, const TopicReport& report);

struct MetricsRecord {
    real epoch = 0;
    real loss = 0;
    real kl = 0;
    real nll = 0;
    real coherence = 0;
    real diversity = 0;
    real quality = 0;
    real perplexity = 0;
};

class MetricsTrace {
   public:
    static constexpr std::string_view kHeader = "epoch,loss,kl,nll,coherence,diversity,quality,perplexity";

    // Throws ConfigError unless epoch is strictly greater than the last one.
    void append(const MetricsRecord& r);
    const std::vector<MetricsRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const MetricsRecord& back() const { return records_.back(); }

    // CSV with 6 significant digits per value.
    void write_csv(std::ostream& out) const;

   private:
    std::vector<MetricsRecord> records_;
};

std::string format_6g(real v);

}  // namespace rltopic
