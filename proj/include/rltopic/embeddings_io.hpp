#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rltopic/corpus.hpp"
#include "rltopic/tensor.hpp"

namespace rltopic {

/// Dense per-document vectors, row-major 32-bit floats.
struct EmbeddingMatrix {
    std::size_t num_docs = 0;
    std::size_t dim = 0;
    std::vector<float> data;

    std::span<const float> row(std::size_t d) const { return {data.data() + d * dim, dim}; }
    friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

// EMB1 layout, little-endian, no padding:
//   [0,4) "EMB1"  [4,8) u32 num_docs  [8,12) u32 dim  then num_docs*dim f32
inline constexpr char kEmbeddingMagic[4] = {'E', 'M', 'B', '1'};
inline constexpr std::size_t kEmbeddingHeaderBytes = 12;

std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& m);
EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes);

EmbeddingMatrix read_embeddings(const std::filesystem::path& path);
void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);

/// L1-normalized dense count vector of length vocab_size; an empty row stays zero.
std::vector<real> bow_input(const SparseRow& row, std::size_t vocab_size);

/// Row source for the inference network: either a loaded embedding matrix or
/// normalized bag-of-words vectors built on demand from a sparse matrix.
class InputSource {
   public:
    static InputSource from_embeddings(EmbeddingMatrix m);
    static InputSource from_bow(const SparseDocTermMatrix& bow);

    std::size_t num_docs() const;
    std::size_t dim() const;
    bool is_bow() const { return bow_ != nullptr; }

    // Dense [indices.size() x dim] batch.
    Tensor batch(std::span<const std::size_t> indices) const;

    // Throws FormatError when the row count differs from the corpus.
    void check_alignment(std::size_t corpus_docs) const;

   private:
    EmbeddingMatrix embeddings_;
    const SparseDocTermMatrix* bow_ = nullptr;
};

}  // namespace rltopic
