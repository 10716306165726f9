#pragma once

// Synthetic corpus with known topics: V = topics * words_per_topic, topic t
// owns word ids [t * words_per_topic, (t + 1) * words_per_topic). Word
// weights inside a topic decay with rank, so the planted top-10 list is the
// first ten ids of the block.

#include <cmath>
#include <cstddef>
#include <map>
#include <vector>

#include "rltopic/corpus.hpp"
#include "rltopic/random.hpp"

namespace rltopic::testing {

struct PlantedCorpus {
    SparseDocTermMatrix bow;
    Vocabulary vocab;
    std::vector<std::vector<std::uint32_t>> planted_top;  // top-10 ids per topic
};

struct PlantedOptions {
    std::size_t topics = 5;
    std::size_t words_per_topic = 20;
    std::size_t docs = 2000;
    std::size_t min_len = 40;
    std::size_t max_len = 80;
    double second_topic_prob = 0.3;
    double second_topic_share = 0.3;
    std::uint64_t seed = 2024;
};

inline std::size_t draw_weighted(RandomSource& rng, const std::vector<double>& cdf) {
    const double u = rng.uniform() * cdf.back();
    std::size_t lo = 0;
    while (cdf[lo] <= u) ++lo;
    return lo;
}

inline PlantedCorpus make_planted_corpus(const PlantedOptions& o = {}) {
    RandomSource rng(o.seed);
    const std::size_t v = o.topics * o.words_per_topic;
    std::vector<double> cdf(o.words_per_topic);
    double acc = 0;
    for (std::size_t i = 0; i < o.words_per_topic; ++i) {
        acc += 1.0 / (1.0 + static_cast<double>(i) / 5.0);
        cdf[i] = acc;
    }

    PlantedCorpus pc;
    pc.bow.vocab_size = v;
    std::vector<std::size_t> df(v, 0);
    for (std::size_t d = 0; d < o.docs; ++d) {
        const std::size_t primary = rng.uniform_index(o.topics);
        std::size_t secondary = primary;
        if (rng.bernoulli(o.second_topic_prob)) {
            secondary = (primary + 1 + rng.uniform_index(o.topics - 1)) % o.topics;
        }
        const std::size_t len = o.min_len + rng.uniform_index(o.max_len - o.min_len + 1);
        std::map<std::uint32_t, std::uint32_t> counts;
        for (std::size_t n = 0; n < len; ++n) {
            const std::size_t t = (secondary != primary && rng.bernoulli(o.second_topic_share)) ? secondary : primary;
            const std::size_t w = t * o.words_per_topic + draw_weighted(rng, cdf);
            ++counts[static_cast<std::uint32_t>(w)];
        }
        SparseRow row(counts.begin(), counts.end());
        for (const auto& [w, c] : row) ++df[w];
        pc.bow.rows.push_back(std::move(row));
    }

    // Names sort in id order so the vocabulary ids match the planted ids.
    std::vector<std::string> words;
    for (std::size_t w = 0; w < v; ++w) {
        std::string name = "w000";
        name[1] = static_cast<char>('0' + w / 100 % 10);
        name[2] = static_cast<char>('0' + w / 10 % 10);
        name[3] = static_cast<char>('0' + w % 10);
        words.push_back(name);
    }
    pc.vocab = Vocabulary(words, df);
    for (std::size_t t = 0; t < o.topics; ++t) {
        std::vector<std::uint32_t> top;
        for (std::size_t i = 0; i < 10 && i < o.words_per_topic; ++i) {
            top.push_back(static_cast<std::uint32_t>(t * o.words_per_topic + i));
        }
        pc.planted_top.push_back(std::move(top));
    }
    return pc;
}

// For every planted topic, the largest overlap with any learned top list.
inline std::vector<std::size_t> best_match_overlap(const std::vector<std::vector<std::uint32_t>>& planted,
                                                   const std::vector<std::vector<std::uint32_t>>& learned) {
    std::vector<std::size_t> best;
    for (const auto& p : planted) {
        std::size_t b = 0;
        for (const auto& l : learned) {
            std::size_t n = 0;
            for (std::uint32_t w : p)
                for (std::uint32_t x : l) n += (w == x);
            b = std::max(b, n);
        }
        best.push_back(b);
    }
    return best;
}

}  // namespace rltopic::testing
