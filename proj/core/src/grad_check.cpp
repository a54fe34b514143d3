#include "seg4d/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace seg4d {

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

GradCheckReport grad_check(const ScalarFunction& f, const std::vector<NamedTensor>& inputs,
                           const GradCheckOptions& options) {
  for (const auto& [name, t] : inputs) {
    t.set_requires_grad(true);
    t.clear_grad();
  }
  Tape<double> tape;
  Tensor<double> loss = f(&tape);
  tape.backward(loss);

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (const auto& [name, t] : inputs) {
    std::vector<double> analytic(t.data().size(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    std::vector<std::int64_t> probe(static_cast<std::size_t>(t.numel()));
    std::iota(probe.begin(), probe.end(), 0);
    if (options.max_elements_per_input >= 0 && options.max_elements_per_input < t.numel()) {
      std::shuffle(probe.begin(), probe.end(), rng);
      probe.resize(static_cast<std::size_t>(options.max_elements_per_input));
      std::sort(probe.begin(), probe.end());
    }

    GradCheckEntry entry{name, static_cast<std::int64_t>(probe.size()), 0.0};
    auto values = t.data();
    for (auto idx : probe) {
      const double saved = values[static_cast<std::size_t>(idx)];
      values[static_cast<std::size_t>(idx)] = saved + options.step;
      const double up = f(nullptr).item();
      values[static_cast<std::size_t>(idx)] = saved - options.step;
      const double down = f(nullptr).item();
      values[static_cast<std::size_t>(idx)] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double err =
          std::abs(analytic[static_cast<std::size_t>(idx)] - numeric) / std::max(1.0, std::abs(numeric));
      entry.max_rel_error = std::max(entry.max_rel_error, err);
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace seg4d
