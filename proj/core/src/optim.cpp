#include "seg4d/optim.hpp"

#include <cmath>
#include <string>

namespace seg4d {

double lr_schedule(std::int64_t epoch, double alpha0, std::int64_t total_epochs) {
  if (total_epochs <= 0) throw Error(ErrorCode::kInvalidArgument, "lr_schedule: total epochs must be positive");
  if (epoch < 0 || epoch > total_epochs) {
    throw Error(ErrorCode::kInvalidArgument, "lr_schedule: epoch " + std::to_string(epoch) + " outside [0, " +
                                                 std::to_string(total_epochs) + "]");
  }
  return alpha0 * std::pow(1.0 - static_cast<double>(epoch) / static_cast<double>(total_epochs), 0.9);
}

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<double> m, std::span<double> v,
                 std::int64_t step, double lr, const AdamOptions& o) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw Error(ErrorCode::kShapeMismatch, "adam_update: state sizes differ from the parameter");
  }
  if (step < 1) throw Error(ErrorCode::kInvalidArgument, "adam_update: step count starts at 1");
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
    v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    param[i] = static_cast<T>(static_cast<double>(param[i]) - lr * mhat / (std::sqrt(vhat) + o.eps));
  }
}

template <typename T>
Adam<T>::Adam(const ParameterSet<T>& params, AdamOptions options) : params_(&params), options_(options) {
  for (const auto& [path, t] : params.entries()) {
    m_.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  ++step_;
  const auto& entries = params_->entries();
  if (entries.size() != m_.size()) throw Error(ErrorCode::kShapeMismatch, "Adam: parameter set changed size");
  std::vector<T> zeros;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& t = entries[i].second;
    std::span<const T> g;
    if (t.has_grad()) {
      g = t.grad();
    } else {
      zeros.assign(static_cast<std::size_t>(t.numel()), T(0));
      g = zeros;
    }
    adam_update<T>(t.data(), g, m_[i], v_[i], step_, lr, options_);
  }
}

template void adam_update<float>(std::span<float>, std::span<const float>, std::span<double>, std::span<double>,
                                 std::int64_t, double, const AdamOptions&);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>, std::span<double>,
                                  std::int64_t, double, const AdamOptions&);
template class Adam<float>;
template class Adam<double>;

}  // namespace seg4d
