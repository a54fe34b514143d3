#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "seg4d/nn.hpp"

namespace seg4d {

// alpha0 * (1 - epoch / total)^0.9. Throws for epoch outside [0, total].
double lr_schedule(std::int64_t epoch, double alpha0, std::int64_t total_epochs);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const AdamOptions&) const = default;
};

// One bias-corrected Adam update in place. `step` is the 1-based step count
// after this update; moments are kept in double.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<double> m, std::span<double> v,
                 std::int64_t step, double lr, const AdamOptions& options);

// Adam over a parameter set. Parameters without a gradient are treated as
// having a zero gradient, which still advances their moments.
template <typename T>
class Adam {
 public:
  Adam(const ParameterSet<T>& params, AdamOptions options = {});

  void step(double lr);
  std::int64_t steps() const { return step_; }

 private:
  const ParameterSet<T>* params_;
  AdamOptions options_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace seg4d
