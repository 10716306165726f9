#include <filesystem>

#include "doctest.h"
#include "rltopic/checkpoint.hpp"
#include "rltopic/errors.hpp"

using namespace rltopic;

namespace {

ModelConfig config() {
    ModelConfig c;
    c.num_topics = 4;
    c.vocab_size = 9;
    c.input_dim = 6;
    c.hidden_layers = {5, 3};
    return c;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
    PolicyModel m(config(), 31);
    const auto bytes = encode_checkpoint(m);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "NTM1");
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);

    PolicyModel back = decode_checkpoint(bytes);
    CHECK(back.config().num_topics == 4);
    CHECK(back.config().hidden_layers == std::vector<std::size_t>{5, 3});
    CHECK(encode_checkpoint(back) == bytes);
    for (std::size_t i = 0; i < m.params().all().size(); ++i) {
        const Tensor& a = m.params().at(i).value;
        const Tensor& b = back.params().at(i).value;
        REQUIRE(a.shape() == b.shape());
        for (std::size_t j = 0; j < a.size(); ++j) CHECK(b[j] == static_cast<real>(static_cast<float>(a[j])));
    }

    const auto path = std::filesystem::temp_directory_path() / "rltopic_test.ntm1";
    save_checkpoint(m, path);
    CHECK(encode_checkpoint(load_checkpoint(path)) == bytes);
    std::filesystem::remove(path);
}

TEST_CASE("damaged checkpoints are rejected") {
    PolicyModel m(config(), 31);
    const auto good = encode_checkpoint(m);

    auto magic = good;
    magic[1] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(magic), FormatError);

    auto version = good;
    version[4] = 2;
    CHECK_THROWS_AS(decode_checkpoint(version), FormatError);

    auto truncated = good;
    truncated.resize(good.size() - 3);
    CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);

    auto trailing = good;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_checkpoint(trailing), FormatError);

    auto nan = good;
    // last value: set exponent bits to all ones with a nonzero mantissa
    nan[nan.size() - 1] = 0x7F;
    nan[nan.size() - 2] = 0xC0;
    CHECK_THROWS_AS(decode_checkpoint(nan), FormatError);

    auto bad_name = good;
    // first tensor name starts after magic(4) + version(2) + 4 u32 + 2 layer sizes + count
    const std::size_t name_pos = 4 + 2 + 4 * 4 + 2 * 4 + 4 + 4;
    bad_name[name_pos] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad_name), FormatError);

    CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.ntm1"), FormatError);
}
