#include "rltopic/embeddings_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "rltopic/errors.hpp"

namespace rltopic {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& m) {
    if (m.data.size() != m.num_docs * m.dim) throw ConfigError("embedding matrix: data size mismatch");
    if (m.num_docs > std::numeric_limits<std::uint32_t>::max() || m.dim > std::numeric_limits<std::uint32_t>::max()) {
        throw ConfigError("embedding matrix too large for EMB1");
    }
    std::vector<std::uint8_t> out;
    out.reserve(kEmbeddingHeaderBytes + 4 * m.data.size());
    out.insert(out.end(), std::begin(kEmbeddingMagic), std::end(kEmbeddingMagic));
    put_u32(out, static_cast<std::uint32_t>(m.num_docs));
    put_u32(out, static_cast<std::uint32_t>(m.dim));
    for (float f : m.data) {
        if (!std::isfinite(f)) throw FormatError("embedding matrix: non-finite value");
        put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
    return out;
}

EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kEmbeddingHeaderBytes) throw FormatError("EMB1: truncated header");
    if (std::memcmp(bytes.data(), kEmbeddingMagic, 4) != 0) throw FormatError("EMB1: bad magic");
    EmbeddingMatrix m;
    m.num_docs = get_u32(bytes, 4);
    m.dim = get_u32(bytes, 8);
    const std::size_t count = m.num_docs * m.dim;
    const std::size_t expected = kEmbeddingHeaderBytes + 4 * count;
    if (bytes.size() < expected) {
        throw FormatError("EMB1: truncated payload (" + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(expected) + ")");
    }
    if (bytes.size() > expected) throw FormatError("EMB1: trailing bytes after payload");
    m.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const float f = std::bit_cast<float>(get_u32(bytes, kEmbeddingHeaderBytes + 4 * i));
        if (!std::isfinite(f)) {
            throw FormatError("EMB1: non-finite value at document " + std::to_string(i / m.dim) + ", column " +
                              std::to_string(i % m.dim));
        }
        m.data[i] = f;
    }
    return m;
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_embeddings(bytes);
}

void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
    const auto bytes = encode_embeddings(m);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed: " + path.string());
}

std::vector<real> bow_input(const SparseRow& row, std::size_t vocab_size) {
    std::vector<real> v(vocab_size, 0.0);
    const std::size_t total = SparseDocTermMatrix::row_tokens(row);
    if (total == 0) return v;
    for (const auto& [id, count] : row) v.at(id) = static_cast<real>(count) / static_cast<real>(total);
    return v;
}

InputSource InputSource::from_embeddings(EmbeddingMatrix m) {
    InputSource s;
    s.embeddings_ = std::move(m);
    return s;
}

InputSource InputSource::from_bow(const SparseDocTermMatrix& bow) {
    InputSource s;
    s.bow_ = &bow;
    return s;
}

std::size_t InputSource::num_docs() const { return bow_ ? bow_->num_docs() : embeddings_.num_docs; }

std::size_t InputSource::dim() const { return bow_ ? bow_->vocab_size : embeddings_.dim; }

Tensor InputSource::batch(std::span<const std::size_t> indices) const {
    const std::size_t d = dim();
    Tensor out({indices.size(), d});
    for (std::size_t r = 0; r < indices.size(); ++r) {
        real* dst = out.ptr() + r * d;
        if (bow_) {
            const auto v = bow_input(bow_->rows.at(indices[r]), d);
            std::copy(v.begin(), v.end(), dst);
        } else {
            if (indices[r] >= embeddings_.num_docs) throw ConfigError("embedding row index out of range");
            const auto src = embeddings_.row(indices[r]);
            for (std::size_t c = 0; c < d; ++c) dst[c] = static_cast<real>(src[c]);
        }
    }
    return out;
}

void InputSource::check_alignment(std::size_t corpus_docs) const {
    if (num_docs() != corpus_docs) {
        throw FormatError("input rows (" + std::to_string(num_docs()) + ") do not match corpus documents (" +
                          std::to_string(corpus_docs) + ")");
    }
}

}  // namespace rltopic
