#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "seg4d/volume.hpp"

namespace seg4d {

// VOL4 layout (little-endian):
//   "VOL4" | version u16 | dtype u8 | ndim u8 | dims u32[ndim]
//   | spacing f32[3] (mm) | frame interval f32 (ms)
//   | annotated u8[T] (label files only) | payload, row-major, T fastest
enum class VolumeDtype : std::uint8_t { kFloat32 = 0, kLabel8 = 1 };

inline constexpr std::uint16_t kVolumeVersion = 1;

struct VolumeFile {
  VolumeDtype dtype = VolumeDtype::kFloat32;
  Extent4 dims{0, 0, 0, 0};
  Spacing spacing{};
  std::vector<bool> annotated;      // label files only
  std::vector<float> intensities;   // kFloat32
  std::vector<std::uint8_t> labels; // kLabel8

  bool operator==(const VolumeFile&) const = default;
};

std::vector<std::uint8_t> encode_volume(const VolumeFile& volume);
// Throws kBadMagic, kTruncated (header or payload size mismatch),
// kDimensionOverflow or kUnsupportedFormat.
VolumeFile decode_volume(std::span<const std::uint8_t> bytes);

void write_volume(const std::filesystem::path& path, const VolumeFile& volume);
VolumeFile read_volume(const std::filesystem::path& path);

VolumeFile intensity_volume(const Volume4DSequence& sequence);
VolumeFile label_volume(const Volume4DSequence& sequence);
VolumeFile label_volume(const LabelSequence& labels, const Spacing& spacing, const std::vector<bool>& annotated);

void write_sequence(const Volume4DSequence& sequence, const std::filesystem::path& intensity_path,
                    const std::filesystem::path& label_path);
Volume4DSequence read_sequence(const std::string& id, const std::filesystem::path& intensity_path,
                               const std::filesystem::path& label_path);

}  // namespace seg4d
