#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "seg4d/tensor.hpp"
#include "seg4d/volume.hpp"

namespace seg4d {

// A training window. `onehot` is (1, 3, X, Y, Z, K) and is all-zero on frames
// whose labeled_mask entry is false.
struct CropSample {
  Tensor<float> input;
  Tensor<float> onehot;
  std::vector<bool> labeled_mask;
  Extent4 origin{0, 0, 0, 0};
  bool foreground_centered = false;

  std::int64_t labeled_count() const;
};

// Draws crops centred on a foreground voxel with probability fg_prob and on a
// background voxel otherwise. Centres are taken from annotated frames only, so
// the temporal window always contains at least one labeled frame.
class CropSampler {
 public:
  explicit CropSampler(const Volume4DSequence& sequence);

  CropSample sample(const Extent4& crop, double fg_prob, std::mt19937_64& rng) const;

  bool has_foreground() const { return !foreground_.empty(); }

 private:
  const Volume4DSequence* sequence_;
  std::vector<std::int64_t> foreground_;
  std::vector<std::int64_t> background_;
};

// Window origin along one axis: centred on `center`, shifted to stay inside
// [0, extent). Axes shorter than the crop start at 0 and are padded.
std::int64_t crop_origin(std::int64_t center, std::int64_t crop, std::int64_t extent);

// Extracts the window at `origin`. Out-of-volume voxels read -1 (after
// normalization) with background labels; frames outside the sequence are
// unlabeled.
CropSample extract_crop(const Volume4DSequence& sequence, const Extent4& crop, const Extent4& origin);

CropSample sample_crop(const Volume4DSequence& sequence, const Extent4& crop, double fg_prob, std::mt19937_64& rng);

}  // namespace seg4d
