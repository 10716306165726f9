#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rltopic {

using TokenList = std::vector<std::string>;

struct PreprocessRules {
    bool lowercase = true;
    bool strip_non_alpha = true;
    std::size_t min_word_len = 3;
    std::set<std::string> stopwords;

    friend bool operator==(const PreprocessRules&, const PreprocessRules&) = default;
};

/// Tokenizes one raw document. With strip_non_alpha, tokens are maximal runs
/// of ASCII letters; otherwise runs of non-whitespace. Tokens shorter than
/// min_word_len or present in the stopword list are dropped.
TokenList preprocess(std::string_view raw_doc, const PreprocessRules& rules);

/// Ordered word list. Words are stored in lexicographic order.
class Vocabulary {
   public:
    Vocabulary() = default;
    Vocabulary(std::vector<std::string> words, std::vector<std::size_t> doc_freq);

    std::size_t size() const { return words_.size(); }
    bool empty() const { return words_.empty(); }
    const std::string& word(std::size_t id) const { return words_[id]; }
    const std::vector<std::string>& words() const { return words_; }
    std::size_t doc_freq(std::size_t id) const { return doc_freq_[id]; }
    std::optional<std::size_t> index_of(std::string_view word) const;

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
        return a.words_ == b.words_ && a.doc_freq_ == b.doc_freq_;
    }

   private:
    std::vector<std::string> words_;
    std::vector<std::size_t> doc_freq_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Keeps the vocab_size words with the highest total corpus count (ties
/// broken by ascending word).
Vocabulary build_vocabulary(const std::vector<TokenList>& docs, std::size_t vocab_size);

using SparseEntry = std::pair<std::uint32_t, std::uint32_t>;  // (word id, count)
using SparseRow = std::vector<SparseEntry>;

struct SparseDocTermMatrix {
    std::size_t vocab_size = 0;
    std::vector<SparseRow> rows;  // sorted by word id, counts >= 1

    std::size_t num_docs() const { return rows.size(); }
    std::size_t empty_rows() const;
    std::size_t total_tokens() const;
    static std::size_t row_tokens(const SparseRow& row);
    void validate() const;  // throws FormatError

    friend bool operator==(const SparseDocTermMatrix&, const SparseDocTermMatrix&) = default;
};

/// Out-of-vocabulary tokens are dropped; documents with no in-vocabulary
/// tokens keep an empty row so indices stay aligned with embeddings.
SparseDocTermMatrix to_bow(const std::vector<TokenList>& docs, const Vocabulary& vocab);

struct PreprocessedCorpus {
    PreprocessRules rules;
    Vocabulary vocab;
    SparseDocTermMatrix bow;
};

// Runs preprocess over all lines (parallel, order preserved), then builds the
// vocabulary and the bag-of-words matrix.
PreprocessedCorpus preprocess_corpus(const std::vector<std::string>& raw_docs,
                                     const PreprocessRules& rules, std::size_t vocab_size);

std::vector<std::string> read_lines(const std::filesystem::path& path);
std::set<std::string> read_stopwords(const std::filesystem::path& path);

// Versioned text container; see README for the layout.
inline constexpr std::string_view kCorpusMagic = "RLTOPIC-CORPUS";
inline constexpr int kCorpusVersion = 1;

void write_corpus(std::ostream& out, const PreprocessedCorpus& corpus);
PreprocessedCorpus read_corpus(std::istream& in);
void save_corpus(const std::filesystem::path& path, const PreprocessedCorpus& corpus);
PreprocessedCorpus load_corpus(const std::filesystem::path& path);
bool is_corpus_file(const std::filesystem::path& path);

}  // namespace rltopic
