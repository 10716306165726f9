#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rltopic/corpus.hpp"
#include "rltopic/errors.hpp"

using namespace rltopic;

TEST_CASE("preprocess examples") {
    PreprocessRules rules;
    rules.stopwords = {"the", "to"};
    CHECK(preprocess("Go to THE moon!", rules) == TokenList{"moon"});
    CHECK(preprocess("", rules).empty());
    PreprocessRules plain;
    CHECK(preprocess("ab abc", plain) == TokenList{"abc"});
}

TEST_CASE("preprocess rule switches") {
    PreprocessRules r;
    CHECK(preprocess("don't stop-words 123abc", r) == TokenList{"don", "stop", "words", "abc"});
    r.strip_non_alpha = false;
    CHECK(preprocess("don't stop-words 123abc", r) == TokenList{"don't", "stop-words", "123abc"});
    r.lowercase = false;
    r.strip_non_alpha = true;
    r.min_word_len = 1;
    CHECK(preprocess("Hello World", r) == TokenList{"Hello", "World"});
}

TEST_CASE("build_vocabulary examples") {
    Vocabulary v = build_vocabulary({{"a", "b", "a"}, {"b", "c"}}, 2);
    CHECK(v.words() == std::vector<std::string>{"a", "b"});
    CHECK(v.doc_freq(*v.index_of("b")) == 2);
    CHECK(build_vocabulary({{"a"}}, 5).words() == std::vector<std::string>{"a"});
    CHECK(build_vocabulary({{"a"}, {"b"}}, 1).words() == std::vector<std::string>{"a"});
    CHECK_FALSE(v.index_of("c").has_value());
}

TEST_CASE("to_bow examples") {
    Vocabulary v({"a", "b"}, {1, 1});
    SparseDocTermMatrix m = to_bow({{"a", "a", "b"}, {"z"}, {}}, v);
    CHECK(m.num_docs() == 3);
    CHECK(m.rows[0] == SparseRow{{0, 2}, {1, 1}});
    CHECK(m.rows[1].empty());
    CHECK(m.rows[2].empty());
    CHECK(m.empty_rows() == 2);
    CHECK(m.total_tokens() == 3);
    m.validate();
}

TEST_CASE("validate rejects malformed rows") {
    SparseDocTermMatrix m;
    m.vocab_size = 2;
    m.rows = {{{1, 1}, {0, 1}}};
    CHECK_THROWS_AS(m.validate(), FormatError);
    m.rows = {{{2, 1}}};
    CHECK_THROWS_AS(m.validate(), FormatError);
    m.rows = {{{0, 0}}};
    CHECK_THROWS_AS(m.validate(), FormatError);
}

TEST_CASE("preprocess_corpus keeps document order and alignment") {
    std::vector<std::string> lines{"apple banana apple", "!!!", "banana cherry", "apple"};
    PreprocessedCorpus c = preprocess_corpus(lines, PreprocessRules{}, 2);
    CHECK(c.vocab.words() == std::vector<std::string>{"apple", "banana"});
    CHECK(c.bow.num_docs() == 4);
    CHECK(c.bow.rows[0] == SparseRow{{0, 2}, {1, 1}});
    CHECK(c.bow.rows[1].empty());
    CHECK(c.bow.rows[2] == SparseRow{{1, 1}});
    CHECK(c.bow.rows[3] == SparseRow{{0, 1}});
}

TEST_CASE("corpus container round trip") {
    PreprocessRules rules;
    rules.min_word_len = 2;
    rules.stopwords = {"and", "or"};
    std::vector<std::string> lines{"cats and dogs", "dogs or birds", "", "cats cats"};
    PreprocessedCorpus c = preprocess_corpus(lines, rules, 10);
    std::stringstream ss;
    write_corpus(ss, c);
    PreprocessedCorpus back = read_corpus(ss);
    CHECK(back.rules == c.rules);
    CHECK(back.vocab == c.vocab);
    CHECK(back.bow == c.bow);

    const auto path = std::filesystem::temp_directory_path() / "rltopic_corpus_test.txt";
    save_corpus(path, c);
    CHECK(is_corpus_file(path));
    CHECK(load_corpus(path).bow == c.bow);
    std::filesystem::remove(path);
}

TEST_CASE("corpus container rejects damaged input") {
    PreprocessedCorpus c = preprocess_corpus({"alpha beta", "beta gamma"}, PreprocessRules{}, 10);
    std::stringstream ss;
    write_corpus(ss, c);
    const std::string good = ss.str();

    std::stringstream bad_magic("NOT-A-CORPUS 1\n");
    CHECK_THROWS_AS(read_corpus(bad_magic), FormatError);

    std::stringstream truncated(good.substr(0, good.size() - 6));
    CHECK_THROWS_AS(read_corpus(truncated), FormatError);

    std::string out_of_range = good;
    out_of_range.replace(out_of_range.rfind("1:1"), 3, "9:1");
    std::stringstream oor(out_of_range);
    CHECK_THROWS_AS(read_corpus(oor), FormatError);
}

TEST_CASE("reading text files") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto docs = dir / "rltopic_lines.txt", stop = dir / "rltopic_stop.txt";
    {
        std::ofstream(docs) << "first line\n\nthird line\n";
        std::ofstream(stop) << "the\n  and \n\n";
    }
    const auto lines = read_lines(docs);
    CHECK(lines.size() == 3);
    CHECK(lines[1].empty());
    CHECK(read_stopwords(stop) == std::set<std::string>{"the", "and"});
    CHECK_THROWS_AS(read_lines(dir / "rltopic_missing_file"), FormatError);
    std::filesystem::remove(docs);
    std::filesystem::remove(stop);
}
