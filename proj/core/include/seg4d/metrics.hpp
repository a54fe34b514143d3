#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seg4d/error.hpp"
#include "seg4d/volume.hpp"

namespace seg4d {

// 2|A and B| / (|A| + |B|) for one class; 1 when the class is absent from both.
double dice_score(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth, std::uint8_t class_id);

struct SmoothnessOptions {
  // Average per-class values instead of pooling both foreground classes.
  bool per_class = false;
  // Divide by sqrt of the mean foreground voxel count per frame.
  bool normalize = true;
};

// Mean over consecutive frame pairs of the L2 norm of the one-hot foreground
// difference.
double temporal_l2(const LabelSequence& labels, const SmoothnessOptions& options = {});

struct SurfaceDistance {
  double mean = 0.0;
  // (pair, class) terms averaged into `mean`; both-empty terms count as 0.
  std::int64_t terms = 0;
  // Terms where exactly one frame has the class; left out of the mean.
  std::int64_t excluded = 0;
};

// Boundary voxels of `label` in a row-major (X, Y, Z) frame: voxels of the
// class with a 6-neighbour of another class or outside the grid.
std::vector<std::array<std::int32_t, 3>> boundary_voxels(std::span<const std::uint8_t> frame, const Extent4& dims,
                                                         std::uint8_t label);

// Symmetric average surface distance between two boundary sets, in voxels.
double average_surface_distance(const std::vector<std::array<std::int32_t, 3>>& a,
                                const std::vector<std::array<std::int32_t, 3>>& b);

// Mean over pairs (t, t+1) and both foreground classes of the symmetric
// average surface distance.
SurfaceDistance surface_distance_consecutive(const LabelSequence& labels);

inline constexpr double kReducedEfThreshold = 0.55;

struct EjectionFraction {
  double ef = 0.0;
  bool reduced = true;
  double min_volume_ml = 0.0;
  double max_volume_ml = 0.0;
};

// From a cavity volume curve. Throws when every volume is zero.
EjectionFraction ejection_fraction(std::span<const double> cavity_volumes);
EjectionFraction ejection_fraction(const LabelSequence& labels, const Spacing& spacing = {});

struct SequenceMetrics {
  std::string id;
  std::int64_t labeled_frames = 0;
  double dice_cavity = 0.0;
  double dice_myocardium = 0.0;
  double smoothness_l2 = 0.0;
  double smoothness_surf = 0.0;
  std::int64_t surf_excluded = 0;
  // False when the prediction has no cavity in any frame.
  bool ef_defined = false;
  double ef = 0.0;
  bool ef_reduced = true;
  double truth_ef = 0.0;
  std::optional<double> analytic_ef;

  double dice_mean() const { return 0.5 * (dice_cavity + dice_myocardium); }
};

struct MetricsReport {
  std::vector<SequenceMetrics> sequences;
  // Means over every labeled frame of every sequence.
  double dice_cavity = 0.0;
  double dice_myocardium = 0.0;
  // Means over sequences.
  double smoothness_l2 = 0.0;
  double smoothness_surf = 0.0;
  double truth_smoothness_l2 = 0.0;
  double truth_smoothness_surf = 0.0;

  double dice_mean() const { return 0.5 * (dice_cavity + dice_myocardium); }
};

using LabelPredictor = std::function<LabelSequence(const Volume4DSequence&)>;

// Dice on annotated frames only; smoothness and EF on the full predicted
// sequence.
MetricsReport evaluate(const LabelPredictor& predict, const std::vector<Volume4DSequence>& sequences,
                       const SmoothnessOptions& options = {});

// Tab-separated: one row per sequence, then a "mean" row.
std::string format_report(const MetricsReport& report);

}  // namespace seg4d
