#include "seg4d/phantom.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "seg4d/error.hpp"

namespace seg4d {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::array<double, 3> grid_center(const PhantomSpec& spec) {
  std::array<double, 3> c{};
  for (std::size_t a = 0; a < 3; ++a) c[a] = (static_cast<double>(spec.dims[a]) - 1.0) / 2.0 + spec.center_offset[a];
  return c;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base_seed, const std::string& id) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : id) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return splitmix64(base_seed ^ splitmix64(h));
}

std::array<double, 3> cavity_radii(const PhantomSpec& spec, std::int64_t frame) {
  const double shrink = std::cbrt(1.0 - spec.ejection_fraction);
  const double phase = std::sin(std::numbers::pi * static_cast<double>(frame) / static_cast<double>(spec.dims[3]));
  std::array<double, 3> r{};
  for (std::size_t a = 0; a < 3; ++a) {
    const double ed = spec.radii_ed[a];
    r[a] = ed - (ed - ed * shrink) * phase * phase;
  }
  return r;
}

Volume4DSequence phantom_generate(const PhantomSpec& spec, std::uint64_t seed) {
  for (auto d : spec.dims) {
    if (d <= 0) throw Error(ErrorCode::kInvalidArgument, "phantom extents must be positive");
  }
  if (spec.ejection_fraction < 0.0 || spec.ejection_fraction >= 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "phantom ejection fraction must lie in [0, 1)");
  }
  const auto center = grid_center(spec);
  for (std::size_t a = 0; a < 3; ++a) {
    const double reach = spec.radii_ed[a] + spec.wall_thickness;
    if (spec.radii_ed[a] <= 0.0 || center[a] - reach < 0.0 ||
        center[a] + reach > static_cast<double>(spec.dims[a] - 1)) {
      throw Error(ErrorCode::kInvalidArgument, "phantom " + spec.id + ": myocardial shell exceeds the grid");
    }
  }

  Volume4DSequence seq;
  seq.id = spec.id;
  seq.dims = spec.dims;
  seq.spacing = spec.spacing;
  seq.labels = LabelSequence(spec.dims);
  seq.intensities.resize(seq.labels.values.size());
  seq.annotated.assign(static_cast<std::size_t>(spec.dims[3]), true);
  seq.analytic_ef = spec.ejection_fraction;

  const std::array<float, 3> hu{spec.background_hu, spec.cavity_hu, spec.myocardium_hu};
  std::vector<std::array<double, 3>> inner(static_cast<std::size_t>(spec.dims[3]));
  std::vector<std::array<double, 3>> outer(inner.size());
  for (std::int64_t t = 0; t < spec.dims[3]; ++t) {
    inner[static_cast<std::size_t>(t)] = cavity_radii(spec, t);
    for (std::size_t a = 0; a < 3; ++a) {
      outer[static_cast<std::size_t>(t)][a] = inner[static_cast<std::size_t>(t)][a] + spec.wall_thickness;
    }
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, spec.noise_sigma_hu);
  std::size_t i = 0;
  for (std::int64_t x = 0; x < spec.dims[0]; ++x) {
    const double dx = static_cast<double>(x) - center[0];
    for (std::int64_t y = 0; y < spec.dims[1]; ++y) {
      const double dy = static_cast<double>(y) - center[1];
      for (std::int64_t z = 0; z < spec.dims[2]; ++z) {
        const double dz = static_cast<double>(z) - center[2];
        for (std::int64_t t = 0; t < spec.dims[3]; ++t, ++i) {
          const auto& ri = inner[static_cast<std::size_t>(t)];
          const auto& ro = outer[static_cast<std::size_t>(t)];
          const double qi = dx * dx / (ri[0] * ri[0]) + dy * dy / (ri[1] * ri[1]) + dz * dz / (ri[2] * ri[2]);
          const double qo = dx * dx / (ro[0] * ro[0]) + dy * dy / (ro[1] * ro[1]) + dz * dz / (ro[2] * ro[2]);
          const std::uint8_t label = qi <= 1.0 ? kCavity : (qo <= 1.0 ? kMyocardium : kBackground);
          seq.labels.values[i] = label;
          const float n = spec.noise_sigma_hu > 0.0f ? noise(rng) : 0.0f;
          seq.intensities[i] = hu[label] + n;
        }
      }
    }
  }
  return seq;
}

std::set<std::int64_t> annotation_frames(AnnotationPattern pattern, std::int64_t frames) {
  std::set<std::int64_t> keep;
  switch (pattern) {
    case AnnotationPattern::kEndPhases:
      keep = {0, frames / 2};
      break;
    case AnnotationPattern::kEveryFourth:
      for (std::int64_t t = 0; t < frames; t += 4) keep.insert(t);
      break;
    case AnnotationPattern::kEverySecond:
      for (std::int64_t t = 0; t < frames; t += 2) keep.insert(t);
      break;
    case AnnotationPattern::kAll:
      for (std::int64_t t = 0; t < frames; ++t) keep.insert(t);
      break;
  }
  return keep;
}

PhantomSpec dataset_phantom_spec(const DatasetSpec& spec, std::int64_t index, double ejection_fraction) {
  PhantomSpec p;
  char id[32];
  std::snprintf(id, sizeof(id), "seq%03lld", static_cast<long long>(index));
  p.id = id;
  p.dims = spec.dims;
  p.ejection_fraction = ejection_fraction;
  std::mt19937_64 rng(derive_seed(spec.seed, p.id + "/geometry"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  p.radii_ed = {spec.dims[0] * between(0.21, 0.25), spec.dims[1] * between(0.21, 0.25),
                spec.dims[2] * between(0.22, 0.26)};
  // Wall thickness keeps its proportion on grids smaller than the default.
  const double scale = std::min<double>(1.0, std::min({spec.dims[0], spec.dims[1], spec.dims[2]}) / 32.0);
  p.wall_thickness = between(2.5, 3.5) * scale;
  for (std::size_t a = 0; a < 3; ++a) p.center_offset[a] = spec.dims[a] * between(-0.06, 0.06);
  return p;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  if (spec.count <= 0) throw Error(ErrorCode::kInvalidArgument, "dataset needs at least one sequence");
  if (spec.train_count < 0 || spec.train_count > spec.count) {
    throw Error(ErrorCode::kInvalidArgument, "train_count must lie in [0, count]");
  }
  std::mt19937_64 rng(derive_seed(spec.seed, "dataset/ef"));
  std::uniform_real_distribution<double> ef(spec.ef_min, spec.ef_max);
  Dataset out;
  for (std::int64_t i = 0; i < spec.count; ++i) {
    const auto pspec = dataset_phantom_spec(spec, i, ef(rng));
    auto seq = phantom_generate(pspec, derive_seed(spec.seed, pspec.id));
    const bool train = i < spec.train_count;
    const std::int64_t j = train ? i : i - spec.train_count;
    AnnotationPattern pattern;
    if (train) {
      pattern = static_cast<AnnotationPattern>(j % 4);
    } else {
      pattern = j % 2 == 0 ? AnnotationPattern::kEndPhases : AnnotationPattern::kAll;
    }
    seq = sparsify(seq, annotation_frames(pattern, seq.frames()));
    (train ? out.train : out.validation).push_back(std::move(seq));
  }
  return out;
}

}  // namespace seg4d
