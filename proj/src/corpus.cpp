#include "rltopic/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "rltopic/errors.hpp"

namespace rltopic {

namespace {

bool is_ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

char to_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

}  // namespace

TokenList preprocess(std::string_view raw_doc, const PreprocessRules& rules) {
    TokenList tokens;
    std::string current;
    auto flush = [&] {
        if (current.empty()) return;
        if (current.size() >= rules.min_word_len && !rules.stopwords.contains(current)) {
            tokens.push_back(current);
        }
        current.clear();
    };
    for (char c : raw_doc) {
        const bool keep = rules.strip_non_alpha ? is_ascii_alpha(c) : !is_space(c);
        if (keep) {
            current.push_back(rules.lowercase ? to_lower(c) : c);
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

Vocabulary::Vocabulary(std::vector<std::string> words, std::vector<std::size_t> doc_freq)
    : words_(std::move(words)), doc_freq_(std::move(doc_freq)) {
    if (words_.size() != doc_freq_.size()) throw FormatError("vocabulary: word/doc_freq length mismatch");
    index_.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
        if (words_[i].empty()) throw FormatError("vocabulary: empty word");
        if (!index_.emplace(words_[i], i).second) throw FormatError("vocabulary: duplicate word '" + words_[i] + "'");
        if (doc_freq_[i] < 1) throw FormatError("vocabulary: word '" + words_[i] + "' has zero document frequency");
    }
}

std::optional<std::size_t> Vocabulary::index_of(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

Vocabulary build_vocabulary(const std::vector<TokenList>& docs, std::size_t vocab_size) {
    if (vocab_size < 1) throw ConfigError("build_vocabulary: vocab_size must be >= 1");
    struct Counts {
        std::size_t total = 0;
        std::size_t docs = 0;
    };
    std::map<std::string, Counts> counts;
    for (const TokenList& doc : docs) {
        std::set<std::string_view> seen;
        for (const std::string& tok : doc) {
            Counts& c = counts[tok];
            ++c.total;
            if (seen.insert(tok).second) ++c.docs;
        }
    }
    std::vector<std::pair<std::string, Counts>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second.total != b.second.total) return a.second.total > b.second.total;
        return a.first < b.first;
    });
    if (ranked.size() > vocab_size) ranked.resize(vocab_size);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    std::vector<std::string> words;
    std::vector<std::size_t> doc_freq;
    for (auto& [w, c] : ranked) {
        words.push_back(w);
        doc_freq.push_back(c.docs);
    }
    return Vocabulary(std::move(words), std::move(doc_freq));
}

std::size_t SparseDocTermMatrix::row_tokens(const SparseRow& row) {
    std::size_t n = 0;
    for (const auto& [id, count] : row) n += count;
    return n;
}

std::size_t SparseDocTermMatrix::empty_rows() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const SparseRow& r) { return r.empty(); }));
}

std::size_t SparseDocTermMatrix::total_tokens() const {
    std::size_t n = 0;
    for (const SparseRow& r : rows) n += row_tokens(r);
    return n;
}

void SparseDocTermMatrix::validate() const {
    for (std::size_t d = 0; d < rows.size(); ++d) {
        const SparseRow& row = rows[d];
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (row[k].first >= vocab_size) {
                throw FormatError("document " + std::to_string(d) + ": word id " + std::to_string(row[k].first) +
                                  " out of range (vocab size " + std::to_string(vocab_size) + ")");
            }
            if (row[k].second == 0) throw FormatError("document " + std::to_string(d) + ": zero count");
            if (k > 0 && row[k - 1].first >= row[k].first) {
                throw FormatError("document " + std::to_string(d) + ": word ids not strictly increasing");
            }
        }
    }
}

SparseDocTermMatrix to_bow(const std::vector<TokenList>& docs, const Vocabulary& vocab) {
    if (vocab.empty()) throw ConfigError("to_bow: empty vocabulary");
    SparseDocTermMatrix m;
    m.vocab_size = vocab.size();
    m.rows.resize(docs.size());
    for (std::size_t d = 0; d < docs.size(); ++d) {
        std::map<std::uint32_t, std::uint32_t> counts;
        for (const std::string& tok : docs[d]) {
            if (auto id = vocab.index_of(tok)) ++counts[static_cast<std::uint32_t>(*id)];
        }
        m.rows[d].assign(counts.begin(), counts.end());
    }
    return m;
}

PreprocessedCorpus preprocess_corpus(const std::vector<std::string>& raw_docs, const PreprocessRules& rules,
                                     std::size_t vocab_size) {
    std::vector<TokenList> docs(raw_docs.size());
    const auto n = static_cast<std::ptrdiff_t>(raw_docs.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (std::ptrdiff_t i = 0; i < n; ++i) docs[i] = preprocess(raw_docs[i], rules);

    PreprocessedCorpus out;
    out.rules = rules;
    out.vocab = build_vocabulary(docs, vocab_size);
    if (out.vocab.empty()) throw FormatError("corpus contains no tokens after preprocessing");
    out.bow = to_bow(docs, out.vocab);
    return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

std::set<std::string> read_stopwords(const std::filesystem::path& path) {
    std::set<std::string> words;
    for (const std::string& line : read_lines(path)) {
        std::istringstream ss(line);
        std::string w;
        while (ss >> w) words.insert(w);
    }
    return words;
}

void write_corpus(std::ostream& out, const PreprocessedCorpus& c) {
    out << kCorpusMagic << ' ' << kCorpusVersion << '\n';
    out << "lowercase " << (c.rules.lowercase ? 1 : 0) << '\n';
    out << "strip_non_alpha " << (c.rules.strip_non_alpha ? 1 : 0) << '\n';
    out << "min_word_len " << c.rules.min_word_len << '\n';
    out << "stopwords " << c.rules.stopwords.size();
    for (const std::string& w : c.rules.stopwords) {
        if (w.empty() || std::any_of(w.begin(), w.end(), is_space)) {
            throw FormatError("stopword '" + w + "' cannot be serialized");
        }
        out << ' ' << w;
    }
    out << '\n';
    out << "vocab " << c.vocab.size() << '\n';
    for (std::size_t i = 0; i < c.vocab.size(); ++i) out << c.vocab.word(i) << ' ' << c.vocab.doc_freq(i) << '\n';
    out << "docs " << c.bow.num_docs() << '\n';
    for (const SparseRow& row : c.bow.rows) {
        out << row.size();
        for (const auto& [id, count] : row) out << ' ' << id << ':' << count;
        out << '\n';
    }
}

namespace {

template <typename T>
T read_field(std::istream& in, std::string_view key) {
    std::string k;
    T value{};
    if (!(in >> k) || k != key || !(in >> value)) {
        throw FormatError("corpus file: expected field '" + std::string(key) + "'");
    }
    return value;
}

}  // namespace

PreprocessedCorpus read_corpus(std::istream& in) {
    std::string magic;
    int version = 0;
    if (!(in >> magic) || magic != kCorpusMagic) throw FormatError("corpus file: bad magic");
    if (!(in >> version) || version != kCorpusVersion) {
        throw FormatError("corpus file: unsupported version " + std::to_string(version));
    }
    PreprocessedCorpus c;
    c.rules.lowercase = read_field<int>(in, "lowercase") != 0;
    c.rules.strip_non_alpha = read_field<int>(in, "strip_non_alpha") != 0;
    c.rules.min_word_len = read_field<std::size_t>(in, "min_word_len");
    const auto n_stop = read_field<std::size_t>(in, "stopwords");
    for (std::size_t i = 0; i < n_stop; ++i) {
        std::string w;
        if (!(in >> w)) throw FormatError("corpus file: truncated stopword list");
        c.rules.stopwords.insert(w);
    }
    const auto n_vocab = read_field<std::size_t>(in, "vocab");
    std::vector<std::string> words(n_vocab);
    std::vector<std::size_t> df(n_vocab);
    for (std::size_t i = 0; i < n_vocab; ++i) {
        if (!(in >> words[i] >> df[i])) throw FormatError("corpus file: truncated vocabulary");
    }
    c.vocab = Vocabulary(std::move(words), std::move(df));
    const auto n_docs = read_field<std::size_t>(in, "docs");
    c.bow.vocab_size = n_vocab;
    c.bow.rows.resize(n_docs);
    for (std::size_t d = 0; d < n_docs; ++d) {
        std::size_t nnz = 0;
        if (!(in >> nnz)) throw FormatError("corpus file: truncated document list");
        SparseRow& row = c.bow.rows[d];
        row.reserve(nnz);
        for (std::size_t k = 0; k < nnz; ++k) {
            std::uint64_t id = 0, count = 0;
            char colon = 0;
            if (!(in >> id >> colon >> count) || colon != ':') {
                throw FormatError("corpus file: malformed entry in document " + std::to_string(d));
            }
            row.emplace_back(static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(count));
        }
    }
    c.bow.validate();
    return c;
}

void save_corpus(const std::filesystem::path& path, const PreprocessedCorpus& corpus) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    write_corpus(out, corpus);
    if (!out) throw FormatError("write failed: " + path.string());
}

PreprocessedCorpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    return read_corpus(in);
}

bool is_corpus_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::string magic;
    return in && (in >> magic) && magic == kCorpusMagic;
}

}  // namespace rltopic
