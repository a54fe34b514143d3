#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seg4d/ops.hpp"

namespace seg4d {

// Named learnable tensors in insertion order. Paths are dotted, e.g.
// "enc1.block0.conv1.weight"; this naming is also the checkpoint contract.
template <typename T>
class ParameterSet {
 public:
  void add(std::string path, Tensor<T> value) {
    if (index_.count(path)) throw Error(ErrorCode::kDuplicateId, "duplicate parameter path " + path);
    index_.emplace(path, entries_.size());
    entries_.emplace_back(std::move(path), std::move(value));
  }

  bool contains(std::string_view path) const { return index_.count(std::string(path)) != 0; }

  const Tensor<T>& at(std::string_view path) const {
    auto it = index_.find(std::string(path));
    if (it == index_.end()) throw Error(ErrorCode::kInvalidArgument, "unknown parameter " + std::string(path));
    return entries_[it->second].second;
  }

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::int64_t element_count() const {
    std::int64_t n = 0;
    for (const auto& [path, t] : entries_) n += t.numel();
    return n;
  }

  void set_requires_grad(bool value) const {
    for (const auto& [path, t] : entries_) t.set_requires_grad(value);
  }

  void zero_grad() const {
    for (const auto& [path, t] : entries_) t.zero_grad();
  }

  template <typename U>
  ParameterSet<U> cast_to(bool requires_grad = false) const {
    ParameterSet<U> out;
    for (const auto& [path, t] : entries_) out.add(path, seg4d::cast<T, U>(t, requires_grad));
    return out;
  }

  // Deep copy with fresh storage.
  ParameterSet clone() const {
    ParameterSet out;
    for (const auto& [path, t] : entries_) {
      auto c = t.clone();
      c.set_requires_grad(t.requires_grad());
      out.add(path, c);
    }
    return out;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Kernel, stride and normalization settings shared by all layers of a network.
// The 3D baseline uses the same layers with the temporal axis collapsed.
struct LayerGeometry {
  Extent4 kernel{3, 3, 3, 3};
  Extent4 down_stride{2, 2, 2, 2};
  Extent4 up_factor{2, 2, 2, 2};
  GroupNormOptions norm{};
  ConvAlgorithm algorithm = ConvAlgorithm::kDirect;
  bool conv_bias = true;

  static LayerGeometry seg4d();
  static LayerGeometry seg3d();
};

// He-style initialization: conv weights ~ N(0, 2 / fan_in), biases 0,
// group-norm gamma 1 and beta 0. Deterministic for a given seed.
class ParamInitializer {
 public:
  explicit ParamInitializer(std::uint64_t seed) : rng_(seed) {}

  // Weights ~ N(0, gain^2 * 2 / fan_in), bias zero.
  void add_conv(ParameterSet<float>& set, const std::string& prefix, std::int64_t in_channels,
                std::int64_t out_channels, const Extent4& kernel, bool bias, double gain = 1.0);
  void add_norm(ParameterSet<float>& set, const std::string& prefix, std::int64_t channels);
  void add_res_block(ParameterSet<float>& set, const std::string& prefix, std::int64_t channels,
                     const LayerGeometry& geometry);

 private:
  std::mt19937_64 rng_;
};

// GN -> ReLU -> Conv -> GN -> ReLU -> Conv, plus the identity.
template <typename T>
Tensor<T> res_block(Tape<T>* tape, const Tensor<T>& x, const ParameterSet<T>& params, const std::string& prefix,
                    const LayerGeometry& geometry);

// Strided convolution: extents halve (ceil) and channels double.
template <typename T>
Tensor<T> down_conv(Tape<T>* tape, const Tensor<T>& x, const ParameterSet<T>& params, const std::string& prefix,
                    const LayerGeometry& geometry);

// Pointwise conv (halving channels), nearest upsampling, then the additive skip.
template <typename T>
Tensor<T> decoder_up(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& skip, const ParameterSet<T>& params,
                     const std::string& prefix, const LayerGeometry& geometry);

// Bias lookup that tolerates bias-free configurations.
template <typename T>
Tensor<T> optional_param(const ParameterSet<T>& params, const std::string& path) {
  return params.contains(path) ? params.at(path) : Tensor<T>();
}

}  // namespace seg4d
