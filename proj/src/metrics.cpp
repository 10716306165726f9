#include "rltopic/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <set>

#include "rltopic/errors.hpp"
#include "rltopic/kernels.hpp"

namespace rltopic {

CooccurrenceCache::CooccurrenceCache(const SparseDocTermMatrix& bow)
    : doc_count_(bow.num_docs()), vocab_size_(bow.vocab_size) {
    if (doc_count_ == 0) throw ConfigError("co-occurrence cache: empty corpus");
    bow.validate();
    words_per_set_ = (doc_count_ + 63) / 64;
    bits_.assign(vocab_size_ * words_per_set_, 0);
    word_doc_count_.assign(vocab_size_, 0);
    for (std::size_t d = 0; d < doc_count_; ++d) {
        for (const auto& [w, count] : bow.rows[d]) {
            bits_[w * words_per_set_ + d / 64] |= std::uint64_t{1} << (d % 64);
            ++word_doc_count_[w];
        }
    }
}

std::uint64_t CooccurrenceCache::key(std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    return (static_cast<std::uint64_t>(i) << 32) | static_cast<std::uint64_t>(j);
}

std::size_t CooccurrenceCache::pair_doc_count(std::size_t i, std::size_t j) const {
    if (i >= vocab_size_ || j >= vocab_size_) throw ConfigError("co-occurrence cache: word id out of range");
    if (i == j) return word_doc_count_[i];
    const std::uint64_t k = key(i, j);
    {
        std::shared_lock lock(memo_mutex_);
        if (auto it = memo_.find(k); it != memo_.end()) return it->second;
    }
    const auto count = static_cast<std::uint32_t>(kernels::intersect_count(bits(i), bits(j)));
    std::unique_lock lock(memo_mutex_);
    memo_.emplace(k, count);
    return count;
}

void CooccurrenceCache::prefetch(std::span<const WordPair> pairs) const {
    std::vector<WordPair> missing;
    {
        std::shared_lock lock(memo_mutex_);
        std::set<std::uint64_t> seen;
        for (const auto& [i, j] : pairs) {
            if (i >= vocab_size_ || j >= vocab_size_) throw ConfigError("co-occurrence cache: word id out of range");
            if (i == j) continue;
            const std::uint64_t k = key(i, j);
            if (!memo_.contains(k) && seen.insert(k).second) missing.emplace_back(i, j);
        }
    }
    if (missing.empty()) return;
    std::vector<std::uint32_t> counts(missing.size());
    kernels::pair_intersections(bits_, words_per_set_, missing, counts);
    std::unique_lock lock(memo_mutex_);
    for (std::size_t p = 0; p < missing.size(); ++p) memo_.emplace(key(missing[p].first, missing[p].second), counts[p]);
}

std::size_t CooccurrenceCache::memo_size() const {
    std::shared_lock lock(memo_mutex_);
    return memo_.size();
}

real npmi_from_counts(std::size_t count_i, std::size_t count_j, std::size_t count_ij, std::size_t docs, real eps) {
    if (docs == 0) throw ConfigError("npmi: empty reference corpus");
    if (count_i == 0 || count_j == 0) return -1.0;
    const real d = static_cast<real>(docs);
    const real p_i = static_cast<real>(count_i) / d;
    const real p_j = static_cast<real>(count_j) / d;
    const real p_ij = (static_cast<real>(count_ij) + eps) / d;
    if (p_ij <= 0) return -1.0;
    if (p_ij >= 1) return 0.0;
    return std::log(p_ij / (p_i * p_j)) / -std::log(p_ij);
}

CoherenceResult npmi_coherence(std::span<const TopicWords> topics, const CooccurrenceCache& cache, real eps) {
    std::vector<WordPair> pairs;
    for (const TopicWords& t : topics) {
        if (t.size() < 2) throw ConfigError("npmi_coherence: need K >= 2 words per topic");
        for (std::size_t a = 0; a < t.size(); ++a)
            for (std::size_t b = a + 1; b < t.size(); ++b) pairs.emplace_back(t[a], t[b]);
    }
    cache.prefetch(pairs);

    CoherenceResult result;
    result.per_topic.resize(topics.size());
    const std::size_t docs = cache.doc_count();
    for (std::size_t ti = 0; ti < topics.size(); ++ti) {
        const TopicWords& t = topics[ti];
        real total = 0;
        std::size_t n = 0;
        for (std::size_t a = 0; a < t.size(); ++a) {
            for (std::size_t b = a + 1; b < t.size(); ++b) {
                total += npmi_from_counts(cache.word_doc_count(t[a]), cache.word_doc_count(t[b]),
                                          cache.pair_doc_count(t[a], t[b]), docs, eps);
                ++n;
            }
        }
        result.per_topic[ti] = total / static_cast<real>(n);
    }
    if (!topics.empty()) {
        result.model = std::accumulate(result.per_topic.begin(), result.per_topic.end(), real{0}) /
                       static_cast<real>(topics.size());
    }
    return result;
}

real topic_diversity(std::span<const TopicWords> topics) {
    if (topics.empty()) throw ConfigError("topic_diversity: no topics");
    const std::size_t k = topics.front().size();
    if (k == 0) throw ConfigError("topic_diversity: K must be >= 1");
    std::set<std::uint32_t> unique;
    for (const TopicWords& t : topics) {
        if (t.size() != k) throw ConfigError("topic_diversity: topics have different K");
        if (std::set<std::uint32_t>(t.begin(), t.end()).size() != k) {
            throw ConfigError("topic_diversity: topic words must be distinct");
        }
        unique.insert(t.begin(), t.end());
    }
    return static_cast<real>(unique.size()) / static_cast<real>(k * topics.size());
}

real topic_quality(real coherence, real diversity) { return coherence * diversity; }

std::vector<TopicWords> top_k_words(const Tensor& beta, std::size_t k) {
    if (beta.rank() != 2) throw ConfigError("top_k_words: beta must be a matrix");
    const std::size_t v = beta.cols();
    if (k < 1 || k > v) throw ConfigError("top_k_words: K must be in [1, V]");
    std::vector<TopicWords> out(beta.rows());
    std::vector<std::uint32_t> ids(v);
    for (std::size_t t = 0; t < beta.rows(); ++t) {
        const real* row = beta.ptr() + t * v;
        std::iota(ids.begin(), ids.end(), 0u);
        std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                          [row](std::uint32_t a, std::uint32_t b) {
                              if (row[a] != row[b]) return row[a] > row[b];
                              return a < b;
                          });
        out[t].assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
    }
    return out;
}

real perplexity(real total_nll, std::size_t total_tokens) {
    if (total_tokens == 0) throw ConfigError("perplexity: no tokens");
    return std::exp(total_nll / static_cast<real>(total_tokens));
}

real perplexity(const Tensor& word_log_probs, std::span<const SparseRow> rows) {
    if (word_log_probs.rows() != rows.size()) throw ConfigError("perplexity: row count mismatch");
    const std::size_t v = word_log_probs.cols();
    real nll = 0;
    std::size_t tokens = 0;
    for (std::size_t d = 0; d < rows.size(); ++d) {
        for (const auto& [w, count] : rows[d]) {
            if (w >= v) throw ConfigError("perplexity: word id out of range");
            nll -= static_cast<real>(count) * word_log_probs[d * v + w];
            tokens += count;
        }
    }
    return perplexity(nll, tokens);
}

TopicReport make_topic_report(const Tensor& beta, std::size_t k, const CooccurrenceCache& cache,
                              const Vocabulary* vocab, real eps) {
    TopicReport r;
    r.k = k;
    r.topics = top_k_words(beta, k);
    const CoherenceResult coh = npmi_coherence(r.topics, cache, eps);
    r.topic_coherence = coh.per_topic;
    r.coherence = coh.model;
    r.diversity = topic_diversity(r.topics);
    r.quality = topic_quality(r.coherence, r.diversity);
    if (vocab) {
        for (const TopicWords& t : r.topics) {
            std::vector<std::string> words;
            for (std::uint32_t id : t) words.push_back(vocab->word(id));
            r.words.push_back(std::move(words));
        }
    }
    return r;
}

void write_topics(std::ostream& out, const TopicReport& report) {
    for (std::size_t t = 0; t < report.topics.size(); ++t) {
        for (std::size_t i = 0; i < report.topics[t].size(); ++i) {
            if (i) out << ' ';
            if (!report.words.empty()) {
                out << report.words[t][i];
            } else {
                out << report.topics[t][i];
            }
        }
        out << '\n';
    }
}

void MetricsTrace::append(const MetricsRecord& r) {
    if (!records_.empty() && !(r.epoch > records_.back().epoch)) {
        throw ConfigError("metrics trace: epochs must be strictly increasing");
    }
    records_.push_back(r);
}

std::string format_6g(real v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void MetricsTrace::write_csv(std::ostream& out) const {
    out << kHeader << '\n';
    for (const MetricsRecord& r : records_) {
        out << format_6g(r.epoch) << ',' << format_6g(r.loss) << ',' << format_6g(r.kl) << ',' << format_6g(r.nll)
            << ',' << format_6g(r.coherence) << ',' << format_6g(r.diversity) << ',' << format_6g(r.quality) << ','
            << format_6g(r.perplexity) << '\n';
    }
}

}  // namespace rltopic
