#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <utility>

namespace rltopic {

/// Seeded random source.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. All distributions are implemented here rather than taken from
/// <random>, because the standard library distributions are not specified
/// bit-for-bit and differ between implementations:
///   - uniform(): top 53 bits of one draw, scaled to [0, 1)
///   - normal(): Box-Muller on two uniforms, second value cached
///   - uniform_index(): rejection sampling, no modulo bias
/// Independent sub-streams are derived with SplitMix64 mixing of the parent
/// seed and a stream id.
class RandomSource {
   public:
    explicit RandomSource(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }
    double uniform();
    double normal();
    std::size_t uniform_index(std::size_t n);
    bool bernoulli(double p) { return uniform() < p; }

    RandomSource substream(std::uint64_t stream_id) const;

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

   private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::optional<double> spare_normal_;
};

/// Named sub-streams of a run seed. Toggling one consumer (e.g. dropout)
/// never shifts the draws seen by another (e.g. parameter init).
enum class Stream : std::uint64_t {
    init = 1,
    inference_dropout = 2,
    action = 3,
    policy_dropout = 4,
    shuffle = 5,
};

inline RandomSource substream(const RandomSource& parent, Stream s) {
    return parent.substream(static_cast<std::uint64_t>(s));
}

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace rltopic
