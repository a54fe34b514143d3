#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "seg4d/conv_kernels.hpp"
#include "seg4d/error.hpp"

namespace seg4d {

enum Label : std::uint8_t { kBackground = 0, kCavity = 1, kMyocardium = 2 };
inline constexpr int kNumClasses = 3;

struct Spacing {
  float x_mm = 1.0f;
  float y_mm = 1.0f;
  float z_mm = 1.0f;
  float frame_ms = 40.0f;

  double voxel_volume_ml() const { return static_cast<double>(x_mm) * y_mm * z_mm / 1000.0; }
  bool operator==(const Spacing&) const = default;
};

// Integer labels over (X, Y, Z, T), T fastest.
struct LabelSequence {
  Extent4 dims{0, 0, 0, 0};
  std::vector<std::uint8_t> values;

  LabelSequence() = default;
  explicit LabelSequence(const Extent4& d);

  std::int64_t frames() const { return dims[3]; }
  std::int64_t frame_voxels() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t index(std::int64_t x, std::int64_t y, std::int64_t z, std::int64_t t) const {
    return static_cast<std::size_t>(((x * dims[1] + y) * dims[2] + z) * dims[3] + t);
  }
  std::uint8_t at(std::int64_t x, std::int64_t y, std::int64_t z, std::int64_t t) const {
    return values[index(x, y, z, t)];
  }
  // Spatial labels of one frame, row-major (X, Y, Z).
  std::vector<std::uint8_t> frame(std::int64_t t) const;
  std::int64_t count(std::uint8_t label, std::int64_t t) const;
  bool operator==(const LabelSequence&) const = default;
};

// One 4D study: HU intensities, per-frame labels and the annotation flags that
// say which frames training may look at. Labels of unannotated frames are kept
// for evaluation only.
struct Volume4DSequence {
  std::string id;
  Extent4 dims{0, 0, 0, 0};
  Spacing spacing{};
  std::vector<float> intensities;
  LabelSequence labels;
  std::vector<bool> annotated;
  std::optional<double> analytic_ef;

  std::int64_t frames() const { return dims[3]; }
  std::int64_t annotated_count() const;
  std::vector<std::int64_t> annotated_frames() const;
  // Throws kInvalidArgument when sizes, label values or flags are inconsistent.
  void validate() const;
};

// Fixed CT window: clamp to [-1024, 1024] HU, then scale to [-1, 1].
float normalize_intensity(float hu);

// Returns a copy whose annotated flags are exactly `keep`.
Volume4DSequence sparsify(const Volume4DSequence& seq, const std::set<std::int64_t>& keep);

}  // namespace seg4d
