#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rltopic/policy_model.hpp"

namespace rltopic {

// NTM1 checkpoint, little-endian:
//   "NTM1", u16 version,
//   u32 num_topics, u32 vocab_size, u32 input_dim, u32 layer count, u32 sizes...,
//   u32 tensor count, then per tensor:
//   u32 name length, name bytes, u32 rank, u32 dims..., f32 values (row-major)
// Only the architecture is stored; training flags live in run.json.
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const PolicyModel& model);
PolicyModel decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const PolicyModel& model, const std::filesystem::path& path);
PolicyModel load_checkpoint(const std::filesystem::path& path);

}  // namespace rltopic
