#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "seg4d/tensor.hpp"

namespace seg4d {

struct GradCheckOptions {
  double step = 1e-4;
  // Elements probed per input; negative probes every element.
  std::int64_t max_elements_per_input = -1;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  std::int64_t elements_checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error() const;
};

// Scalar-valued function of the registered inputs. It must record on the tape
// when one is given and may be called with nullptr for plain evaluation.
using ScalarFunction = std::function<Tensor<double>(Tape<double>*)>;

using NamedTensor = std::pair<std::string, Tensor<double>>;

// Compares reverse-mode gradients against central differences.
// Error per element is |analytic - numeric| / max(1, |numeric|).
GradCheckReport grad_check(const ScalarFunction& f, const std::vector<NamedTensor>& inputs,
                           const GradCheckOptions& options = {});

}  // namespace seg4d
