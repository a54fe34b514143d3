#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "seg4d/tensor.hpp"

namespace seg4d {

struct LossOptions {
  double dice_eps = 1e-5;
  // Average the per-frame Dice over every class instead of the foreground ones.
  bool include_background = false;
  // Mean over voxels and channels per frame pair; false gives the raw squared sum.
  bool normalize_temporal = true;
  bool operator==(const LossOptions&) const = default;
};

// 1 - 2 sum(t p) / (sum t^2 + sum p^2 + eps) for one channel.
double soft_dice(std::span<const double> truth, std::span<const double> pred, double eps = 1e-5);

// Soft Dice of one frame, averaged over the counted classes. `truth` and `pred`
// are (C, V) channel-major arrays.
double soft_dice_frame(std::span<const double> truth, std::span<const double> pred, std::int64_t classes,
                       const LossOptions& options = {});

struct LossBreakdown {
  double dice_term = 0.0;
  double temporal_term = 0.0;
  double total = 0.0;
  std::int64_t labeled_frames_used = 0;
};

template <typename T>
struct LossResult {
  Tensor<T> total;
  LossBreakdown breakdown;
};

// Sum of per-frame soft Dice over frames with labeled_mask set. Probabilities
// and one-hot truth are (N, C, X, Y, Z, K); unlabeled frames contribute
// nothing to the value or the gradient, and their truth is never read.
template <typename T>
Tensor<T> sparse_dice_loss(Tape<T>* tape, const Tensor<T>& probs, const Tensor<T>& onehot,
                           const std::vector<bool>& labeled_mask, const LossOptions& options = {});

// Sum over consecutive frame pairs of the squared probability difference,
// covering all K frames whether labeled or not. Zero when K == 1.
template <typename T>
Tensor<T> temporal_consistency(Tape<T>* tape, const Tensor<T>& probs, const LossOptions& options = {});

// Dice term plus temporal term with unit weights.
template <typename T>
LossResult<T> total_loss(Tape<T>* tape, const Tensor<T>& probs, const Tensor<T>& onehot,
                         const std::vector<bool>& labeled_mask, const LossOptions& options = {});

}  // namespace seg4d
