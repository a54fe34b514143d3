#include "seg4d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace seg4d {

double dice_score(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth, std::uint8_t class_id) {
  if (pred.size() != truth.size()) throw Error(ErrorCode::kShapeMismatch, "dice_score: frames differ in size");
  if (class_id >= kNumClasses) {
    throw Error(ErrorCode::kInvalidArgument, "dice_score: unknown class " + std::to_string(class_id));
  }
  std::int64_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == class_id, t = truth[i] == class_id;
    a += p;
    b += t;
    both += p && t;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

namespace {

void require_frames(const LabelSequence& labels, const char* what) {
  if (labels.frames() < 2) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " needs at least 2 frames");
  if (static_cast<std::int64_t>(labels.values.size()) != labels.frame_voxels() * labels.frames()) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + ": label array does not match its extents");
  }
}

// Squared one-hot difference summed over `classes`, and the mean per-frame
// count of voxels in `classes`.
double temporal_l2_classes(const LabelSequence& labels, std::uint8_t lo, std::uint8_t hi, bool normalize) {
  const std::int64_t frames = labels.frames(), vox = labels.frame_voxels();
  std::vector<double> pair_sq(static_cast<std::size_t>(frames - 1), 0.0);
  double fg = 0.0;
  for (std::int64_t v = 0; v < vox; ++v) {
    const std::uint8_t* row = labels.values.data() + v * frames;
    for (std::int64_t t = 0; t < frames; ++t) {
      if (row[t] >= lo && row[t] <= hi) fg += 1.0;
      if (t + 1 < frames && row[t] != row[t + 1]) {
        // One-hot vectors over the counted classes differ in one or two slots.
        const bool a = row[t] >= lo && row[t] <= hi, b = row[t + 1] >= lo && row[t + 1] <= hi;
        pair_sq[static_cast<std::size_t>(t)] += static_cast<double>(a) + static_cast<double>(b);
      }
    }
  }
  double sum = 0.0;
  for (double s : pair_sq) sum += std::sqrt(s);
  double value = sum / static_cast<double>(frames - 1);
  const double mean_fg = fg / static_cast<double>(frames);
  if (normalize && mean_fg > 0.0) value /= std::sqrt(mean_fg);
  return value;
}

}  // namespace

double temporal_l2(const LabelSequence& labels, const SmoothnessOptions& options) {
  require_frames(labels, "temporal_l2");
  if (!options.per_class) return temporal_l2_classes(labels, kCavity, kMyocardium, options.normalize);
  return 0.5 * (temporal_l2_classes(labels, kCavity, kCavity, options.normalize) +
                temporal_l2_classes(labels, kMyocardium, kMyocardium, options.normalize));
}

std::vector<std::array<std::int32_t, 3>> boundary_voxels(std::span<const std::uint8_t> frame, const Extent4& dims,
                                                         std::uint8_t label) {
  const std::int64_t nx = dims[0], ny = dims[1], nz = dims[2];
  if (static_cast<std::int64_t>(frame.size()) != nx * ny * nz) {
    throw Error(ErrorCode::kShapeMismatch, "boundary_voxels: frame does not match its extents");
  }
  auto at = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
    if (x < 0 || y < 0 || z < 0 || x >= nx || y >= ny || z >= nz) return false;
    return frame[static_cast<std::size_t>((x * ny + y) * nz + z)] == label;
  };
  std::vector<std::array<std::int32_t, 3>> out;
  for (std::int64_t x = 0; x < nx; ++x) {
    for (std::int64_t y = 0; y < ny; ++y) {
      for (std::int64_t z = 0; z < nz; ++z) {
        if (!at(x, y, z)) continue;
        if (!at(x - 1, y, z) || !at(x + 1, y, z) || !at(x, y - 1, z) || !at(x, y + 1, z) || !at(x, y, z - 1) ||
            !at(x, y, z + 1)) {
          out.push_back({static_cast<std::int32_t>(x), static_cast<std::int32_t>(y), static_cast<std::int32_t>(z)});
        }
      }
    }
  }
  return out;
}

namespace {

// Sum over `from` of the distance to the nearest voxel of `to`.
double directed_sum(const std::vector<std::array<std::int32_t, 3>>& from,
                    const std::vector<std::array<std::int32_t, 3>>& to) {
  std::vector<std::int32_t> tx(to.size()), ty(to.size()), tz(to.size());
  for (std::size_t j = 0; j < to.size(); ++j) {
    tx[j] = to[j][0];
    ty[j] = to[j][1];
    tz[j] = to[j][2];
  }
  double sum = 0.0;
  for (const auto& p : from) {
    std::int32_t best = std::numeric_limits<std::int32_t>::max();
    for (std::size_t j = 0; j < to.size(); ++j) {
      const std::int32_t dx = p[0] - tx[j], dy = p[1] - ty[j], dz = p[2] - tz[j];
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    sum += std::sqrt(static_cast<double>(best));
  }
  return sum;
}

}  // namespace

double average_surface_distance(const std::vector<std::array<std::int32_t, 3>>& a,
                                const std::vector<std::array<std::int32_t, 3>>& b) {
  if (a.empty() && b.empty()) return 0.0;
  if (a.empty() || b.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "average_surface_distance: one boundary set is empty");
  }
  return (directed_sum(a, b) + directed_sum(b, a)) / static_cast<double>(a.size() + b.size());
}

SurfaceDistance surface_distance_consecutive(const LabelSequence& labels) {
  require_frames(labels, "surface_distance_consecutive");
  SurfaceDistance r;
  double sum = 0.0;
  const std::uint8_t classes[2] = {kCavity, kMyocardium};
  std::vector<std::array<std::vector<std::array<std::int32_t, 3>>, 2>> bounds(static_cast<std::size_t>(labels.frames()));
  for (std::int64_t t = 0; t < labels.frames(); ++t) {
    const auto frame = labels.frame(t);
    for (std::size_t c = 0; c < 2; ++c) bounds[static_cast<std::size_t>(t)][c] = boundary_voxels(frame, labels.dims, classes[c]);
  }
  for (std::int64_t t = 0; t + 1 < labels.frames(); ++t) {
    for (std::size_t c = 0; c < 2; ++c) {
      const auto& a = bounds[static_cast<std::size_t>(t)][c];
      const auto& b = bounds[static_cast<std::size_t>(t + 1)][c];
      if (a.empty() != b.empty()) {
        ++r.excluded;
        continue;
      }
      sum += average_surface_distance(a, b);
      ++r.terms;
    }
  }
  r.mean = r.terms > 0 ? sum / static_cast<double>(r.terms) : 0.0;
  return r;
}

EjectionFraction ejection_fraction(std::span<const double> volumes) {
  if (volumes.empty()) throw Error(ErrorCode::kInvalidArgument, "ejection_fraction: empty volume curve");
  const auto [lo, hi] = std::minmax_element(volumes.begin(), volumes.end());
  if (!(*hi > 0.0)) throw Error(ErrorCode::kInvalidArgument, "ejection_fraction: no cavity in any frame");
  EjectionFraction r;
  r.min_volume_ml = *lo;
  r.max_volume_ml = *hi;
  r.ef = 1.0 - *lo / *hi;
  r.reduced = r.ef < kReducedEfThreshold;
  return r;
}

EjectionFraction ejection_fraction(const LabelSequence& labels, const Spacing& spacing) {
  std::vector<double> volumes;
  for (std::int64_t t = 0; t < labels.frames(); ++t) {
    volumes.push_back(static_cast<double>(labels.count(kCavity, t)) * spacing.voxel_volume_ml());
  }
  return ejection_fraction(volumes);
}

MetricsReport evaluate(const LabelPredictor& predict, const std::vector<Volume4DSequence>& sequences,
                       const SmoothnessOptions& options) {
  if (sequences.empty()) throw Error(ErrorCode::kInvalidArgument, "evaluate: validation set is empty");
  MetricsReport report;
  std::int64_t frames_total = 0;
  for (const auto& seq : sequences) {
    const LabelSequence pred = predict(seq);
    if (pred.dims != seq.dims) {
      throw Error(ErrorCode::kShapeMismatch, "evaluate: prediction extents differ for " + seq.id);
    }
    SequenceMetrics m;
    m.id = seq.id;
    m.analytic_ef = seq.analytic_ef;
    for (std::int64_t t = 0; t < seq.frames(); ++t) {
      if (!seq.annotated[static_cast<std::size_t>(t)]) continue;
      const auto p = pred.frame(t), g = seq.labels.frame(t);
      const double dc = dice_score(p, g, kCavity), dm = dice_score(p, g, kMyocardium);
      m.dice_cavity += dc;
      m.dice_myocardium += dm;
      report.dice_cavity += dc;
      report.dice_myocardium += dm;
      ++m.labeled_frames;
    }
    frames_total += m.labeled_frames;
    if (m.labeled_frames > 0) {
      m.dice_cavity /= static_cast<double>(m.labeled_frames);
      m.dice_myocardium /= static_cast<double>(m.labeled_frames);
    }
    if (seq.frames() >= 2) {
      m.smoothness_l2 = temporal_l2(pred, options);
      const auto sd = surface_distance_consecutive(pred);
      m.smoothness_surf = sd.mean;
      m.surf_excluded = sd.excluded;
      report.truth_smoothness_l2 += temporal_l2(seq.labels, options);
      report.truth_smoothness_surf += surface_distance_consecutive(seq.labels).mean;
    }
    try {
      const auto ef = ejection_fraction(pred, seq.spacing);
      m.ef_defined = true;
      m.ef = ef.ef;
      m.ef_reduced = ef.reduced;
    } catch (const Error&) {
      m.ef_defined = false;
    }
    m.truth_ef = ejection_fraction(seq.labels, seq.spacing).ef;
    report.smoothness_l2 += m.smoothness_l2;
    report.smoothness_surf += m.smoothness_surf;
    report.sequences.push_back(std::move(m));
  }
  if (frames_total > 0) {
    report.dice_cavity /= static_cast<double>(frames_total);
    report.dice_myocardium /= static_cast<double>(frames_total);
  }
  const double n = static_cast<double>(sequences.size());
  report.smoothness_l2 /= n;
  report.smoothness_surf /= n;
  report.truth_smoothness_l2 /= n;
  report.truth_smoothness_surf /= n;
  return report;
}

std::string format_report(const MetricsReport& r) {
  std::ostringstream out;
  char buf[256];
  out << "id\tlabeled_frames\tdice_lv\tdice_lvm\tsmooth_l2\tsmooth_surf\tsurf_excluded\tef\tef_reduced\ttruth_ef\t"
         "analytic_ef\n";
  for (const auto& m : r.sequences) {
    std::snprintf(buf, sizeof buf, "%s\t%lld\t%.4f\t%.4f\t%.4f\t%.4f\t%lld\t", m.id.c_str(),
                  static_cast<long long>(m.labeled_frames), m.dice_cavity, m.dice_myocardium, m.smoothness_l2,
                  m.smoothness_surf, static_cast<long long>(m.surf_excluded));
    out << buf;
    if (m.ef_defined) {
      std::snprintf(buf, sizeof buf, "%.4f\t%s\t", m.ef, m.ef_reduced ? "yes" : "no");
    } else {
      std::snprintf(buf, sizeof buf, "n/a\tn/a\t");
    }
    out << buf;
    std::snprintf(buf, sizeof buf, "%.4f\t", m.truth_ef);
    out << buf;
    if (m.analytic_ef) {
      std::snprintf(buf, sizeof buf, "%.4f\n", *m.analytic_ef);
    } else {
      std::snprintf(buf, sizeof buf, "n/a\n");
    }
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "mean\t\t%.4f\t%.4f\t%.4f\t%.4f\t\t\t\t\t\n", r.dice_cavity, r.dice_myocardium,
                r.smoothness_l2, r.smoothness_surf);
  out << buf;
  std::snprintf(buf, sizeof buf, "truth\t\t\t\t%.4f\t%.4f\t\t\t\t\t\n", r.truth_smoothness_l2, r.truth_smoothness_surf);
  out << buf;
  return out.str();
}

}  // namespace seg4d
