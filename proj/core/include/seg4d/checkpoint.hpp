#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "seg4d/model.hpp"

namespace seg4d {

inline constexpr std::uint16_t kCheckpointVersion = 1;

// "CKPT", u16 version, u32-length network config JSON, u32 parameter count,
// then per parameter: u32-length path, u8 rank, u32 extents, f32 values.
std::vector<std::uint8_t> encode_checkpoint(const ModelParams<float>& model);

// Throws kBadMagic, kUnsupportedFormat, kTruncated, kConfig, or
// kShapeMismatch when the stored tensors do not fit the stored config.
ModelParams<float> decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const ModelParams<float>& model);
ModelParams<float> read_checkpoint(const std::filesystem::path& path);

}  // namespace seg4d
