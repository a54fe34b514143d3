#pragma once

#include <cstdint>

#include "seg4d/conv_kernels.hpp"
#include "seg4d/tensor.hpp"

namespace seg4d {

// Differentiable primitives. Every op takes an optional tape; with a null tape
// (or no input requiring gradients) nothing is recorded. Spatial ops expect the
// rank-6 layout (N, C, X, Y, Z, T).

struct Conv4dOptions {
  Extent4 stride{1, 1, 1, 1};
  ConvAlgorithm algorithm = ConvAlgorithm::kDirect;
};

// `weight` is (Cout, Cin, kx, ky, kz, kt) with extents 1 or 3 and zero padding
// of kernel/2. `bias` may be an undefined tensor.
template <typename T>
Tensor<T> conv4d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv4dOptions& options = {});

// Per-voxel channel mixing with a (Cout, Cin, 1, 1, 1, 1) kernel.
template <typename T>
Tensor<T> conv_pointwise(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

// max(0, x); the gradient at exactly zero is zero.
template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x);

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& y);

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& y);

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, T factor);

// Sum of all elements as a one-element tensor.
template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& x);

struct GroupNormOptions {
  std::int64_t groups = 8;
  double eps = 1e-5;
  // Use gcd(C, groups) when C is not divisible by `groups`.
  bool allow_fallback = true;
};

// Group count actually used for `channels` under `options`; throws when the
// channels do not divide and fallback is disabled.
std::int64_t effective_groups(std::int64_t channels, const GroupNormOptions& options);

template <typename T>
Tensor<T> group_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     const GroupNormOptions& options = {});

// Softmax over axis 1, stabilized by subtracting the per-voxel maximum.
template <typename T>
Tensor<T> softmax_channels(Tape<T>* tape, const Tensor<T>& x);

// Nearest-neighbour replication by an integer factor on each of X, Y, Z, T.
template <typename T>
Tensor<T> upsample_nearest(Tape<T>* tape, const Tensor<T>& x, const Extent4& factor = {2, 2, 2, 2});

Shape conv_output_shape(const Shape& input, const Shape& weight, const Extent4& stride);
Shape upsample_output_shape(const Shape& input, const Extent4& factor);

// Throws kNonFinite if any value is NaN or infinite.
template <typename T>
void require_finite(const Tensor<T>& x, const char* what);

}  // namespace seg4d
