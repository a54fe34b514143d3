#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "seg4d/volume.hpp"

namespace seg4d {

// Synthetic beating left ventricle. The cavity is an axis-aligned ellipsoid
// whose radii follow r(t) = r_ed - (r_ed - r_es) * sin^2(pi t / T), so frame 0
// is end-diastole and frame T/2 end-systole; the myocardium is a shell of
// fixed thickness around it. Radii and thickness are in voxels.
struct PhantomSpec {
  std::string id = "phantom";
  Extent4 dims{48, 48, 32, 20};
  // Offset of the ellipsoid centre from the grid centre, in voxels.
  std::array<double, 3> center_offset{0.0, 0.0, 0.0};
  std::array<double, 3> radii_ed{11.0, 11.0, 8.0};
  // End-systolic radii are r_ed * (1 - ef)^(1/3), giving this analytic EF.
  double ejection_fraction = 0.6;
  double wall_thickness = 3.0;
  float cavity_hu = 350.0f;
  float myocardium_hu = 50.0f;
  float background_hu = -50.0f;
  float noise_sigma_hu = 25.0f;
  Spacing spacing{};
};

std::array<double, 3> cavity_radii(const PhantomSpec& spec, std::int64_t frame);

// All frames annotated; analytic EF recorded in `analytic_ef`.
Volume4DSequence phantom_generate(const PhantomSpec& spec, std::uint64_t seed);

// Per-sequence seed derived from a base seed and the sequence id, so sequences
// can be generated independently and in any order.
std::uint64_t derive_seed(std::uint64_t base_seed, const std::string& id);

enum class AnnotationPattern { kEndPhases, kEveryFourth, kEverySecond, kAll };

std::set<std::int64_t> annotation_frames(AnnotationPattern pattern, std::int64_t frames);

struct DatasetSpec {
  std::int64_t count = 10;
  std::int64_t train_count = 8;
  Extent4 dims{48, 48, 32, 20};
  double ef_min = 0.30;
  double ef_max = 0.70;
  std::uint64_t seed = 1234;
};

struct Dataset {
  std::vector<Volume4DSequence> train;
  std::vector<Volume4DSequence> validation;
};

// Randomized phantoms split train/validation. Annotation patterns cycle
// through end-phases / every 4th / every 2nd / all on the training split; the
// validation split alternates end-phases and all, so both splits mix sparse and
// fully annotated studies.
Dataset generate_dataset(const DatasetSpec& spec);

// Phantom geometry for sequence `index` of a dataset spec with the given EF.
PhantomSpec dataset_phantom_spec(const DatasetSpec& spec, std::int64_t index, double ejection_fraction);

}  // namespace seg4d
