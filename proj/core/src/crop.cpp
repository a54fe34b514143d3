#include "seg4d/crop.hpp"

#include <algorithm>

#include "seg4d/error.hpp"

namespace seg4d {

std::int64_t CropSample::labeled_count() const {
  return static_cast<std::int64_t>(std::count(labeled_mask.begin(), labeled_mask.end(), true));
}

CropSampler::CropSampler(const Volume4DSequence& sequence) : sequence_(&sequence) {
  sequence.validate();
  if (sequence.annotated_count() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "sequence " + sequence.id + " has no annotated frames");
  }
  const auto& labels = sequence.labels.values;
  const std::int64_t frames = sequence.frames();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!sequence.annotated[i % static_cast<std::size_t>(frames)]) continue;
    (labels[i] != kBackground ? foreground_ : background_).push_back(static_cast<std::int64_t>(i));
  }
}

std::int64_t crop_origin(std::int64_t center, std::int64_t crop, std::int64_t extent) {
  if (crop >= extent) return 0;
  return std::clamp<std::int64_t>(center - crop / 2, 0, extent - crop);
}

CropSample extract_crop(const Volume4DSequence& sequence, const Extent4& crop, const Extent4& origin) {
  const auto& d = sequence.dims;
  CropSample s;
  s.origin = origin;
  s.input = Tensor<float>({1, 1, crop[0], crop[1], crop[2], crop[3]});
  s.onehot = Tensor<float>({1, kNumClasses, crop[0], crop[1], crop[2], crop[3]});
  s.labeled_mask.assign(static_cast<std::size_t>(crop[3]), false);
  for (std::int64_t k = 0; k < crop[3]; ++k) {
    const std::int64_t t = origin[3] + k;
    s.labeled_mask[static_cast<std::size_t>(k)] = t < d[3] && sequence.annotated[static_cast<std::size_t>(t)];
  }
  const std::int64_t vol = crop[0] * crop[1] * crop[2] * crop[3];
  auto in = s.input.data();
  auto oh = s.onehot.data();
  std::size_t i = 0;
  for (std::int64_t x = 0; x < crop[0]; ++x) {
    for (std::int64_t y = 0; y < crop[1]; ++y) {
      for (std::int64_t z = 0; z < crop[2]; ++z) {
        for (std::int64_t k = 0; k < crop[3]; ++k, ++i) {
          const std::int64_t gx = origin[0] + x, gy = origin[1] + y, gz = origin[2] + z, gt = origin[3] + k;
          const bool inside = gx < d[0] && gy < d[1] && gz < d[2] && gt < d[3];
          std::uint8_t label = kBackground;
          if (inside) {
            const auto g = sequence.labels.index(gx, gy, gz, gt);
            in[i] = normalize_intensity(sequence.intensities[g]);
            label = sequence.labels.values[g];
          } else {
            in[i] = -1.0f;
          }
          if (s.labeled_mask[static_cast<std::size_t>(k)]) oh[static_cast<std::size_t>(label * vol) + i] = 1.0f;
        }
      }
    }
  }
  return s;
}

CropSample CropSampler::sample(const Extent4& crop, double fg_prob, std::mt19937_64& rng) const {
  if (fg_prob < 0.0 || fg_prob > 1.0) throw Error(ErrorCode::kInvalidArgument, "fg_prob must lie in [0, 1]");
  for (auto c : crop) {
    if (c <= 0) throw Error(ErrorCode::kInvalidArgument, "crop extents must be positive");
  }
  std::bernoulli_distribution pick_fg(fg_prob);
  const bool want_fg = pick_fg(rng);
  // Without any foreground the crop falls back to a background centre.
  const bool use_fg = (want_fg && !foreground_.empty()) || background_.empty();
  const auto& pool = use_fg ? foreground_ : background_;
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  const std::int64_t flat = pool[pick(rng)];

  const auto& d = sequence_->dims;
  const std::int64_t t = flat % d[3];
  const std::int64_t z = (flat / d[3]) % d[2];
  const std::int64_t y = (flat / (d[3] * d[2])) % d[1];
  const std::int64_t x = flat / (d[3] * d[2] * d[1]);
  const Extent4 origin{crop_origin(x, crop[0], d[0]), crop_origin(y, crop[1], d[1]), crop_origin(z, crop[2], d[2]),
                       crop_origin(t, crop[3], d[3])};
  CropSample s = extract_crop(*sequence_, crop, origin);
  s.foreground_centered = use_fg;
  return s;
}

CropSample sample_crop(const Volume4DSequence& sequence, const Extent4& crop, double fg_prob, std::mt19937_64& rng) {
  return CropSampler(sequence).sample(crop, fg_prob, rng);
}

}  // namespace seg4d
