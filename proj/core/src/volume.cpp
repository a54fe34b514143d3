#include "seg4d/volume.hpp"

#include <algorithm>

#include "seg4d/error.hpp"

namespace seg4d {

LabelSequence::LabelSequence(const Extent4& d) : dims(d) {
  values.assign(static_cast<std::size_t>(d[0] * d[1] * d[2] * d[3]), 0);
}

std::vector<std::uint8_t> LabelSequence::frame(std::int64_t t) const {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(frame_voxels()));
  for (std::int64_t v = 0; v < frame_voxels(); ++v) {
    out[static_cast<std::size_t>(v)] = values[static_cast<std::size_t>(v * dims[3] + t)];
  }
  return out;
}

std::int64_t LabelSequence::count(std::uint8_t label, std::int64_t t) const {
  std::int64_t n = 0;
  for (std::int64_t v = 0; v < frame_voxels(); ++v) {
    n += values[static_cast<std::size_t>(v * dims[3] + t)] == label;
  }
  return n;
}

std::int64_t Volume4DSequence::annotated_count() const {
  return static_cast<std::int64_t>(std::count(annotated.begin(), annotated.end(), true));
}

std::vector<std::int64_t> Volume4DSequence::annotated_frames() const {
  std::vector<std::int64_t> out;
  for (std::size_t t = 0; t < annotated.size(); ++t) {
    if (annotated[t]) out.push_back(static_cast<std::int64_t>(t));
  }
  return out;
}

void Volume4DSequence::validate() const {
  const std::int64_t vox = dims[0] * dims[1] * dims[2] * dims[3];
  if (vox <= 0) throw Error(ErrorCode::kInvalidArgument, "sequence " + id + " has empty extents");
  if (static_cast<std::int64_t>(intensities.size()) != vox) {
    throw Error(ErrorCode::kInvalidArgument, "sequence " + id + ": intensity count does not match extents");
  }
  if (labels.dims != dims || static_cast<std::int64_t>(labels.values.size()) != vox) {
    throw Error(ErrorCode::kInvalidArgument, "sequence " + id + ": label extents do not match intensities");
  }
  if (static_cast<std::int64_t>(annotated.size()) != dims[3]) {
    throw Error(ErrorCode::kInvalidArgument, "sequence " + id + ": annotated flags must have one entry per frame");
  }
  for (auto v : labels.values) {
    if (v >= kNumClasses) throw Error(ErrorCode::kInvalidArgument, "sequence " + id + ": label value out of range");
  }
}

float normalize_intensity(float hu) { return std::clamp(hu, -1024.0f, 1024.0f) / 1024.0f; }

Volume4DSequence sparsify(const Volume4DSequence& seq, const std::set<std::int64_t>& keep) {
  if (keep.empty()) throw Error(ErrorCode::kInvalidArgument, "sparsify: keep set is empty");
  Volume4DSequence out = seq;
  out.annotated.assign(static_cast<std::size_t>(seq.frames()), false);
  for (auto t : keep) {
    if (t < 0 || t >= seq.frames()) {
      throw Error(ErrorCode::kInvalidArgument, "sparsify: frame " + std::to_string(t) + " out of range");
    }
    out.annotated[static_cast<std::size_t>(t)] = true;
  }
  return out;
}

}  // namespace seg4d
