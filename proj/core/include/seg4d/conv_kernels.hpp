#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace seg4d {

using Extent4 = std::array<std::int64_t, 4>;

// Geometry of a zero-padded 4D convolution over (X, Y, Z, T). The padding on
// each axis is kernel/2, so a stride-1 convolution preserves extents and a
// stride-2 one yields ceil(extent/2).
struct ConvGeometry {
  std::int64_t batch = 1;
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  Extent4 in{1, 1, 1, 1};
  Extent4 kernel{3, 3, 3, 3};
  Extent4 stride{1, 1, 1, 1};

  Extent4 pad() const;
  Extent4 out() const;
  std::int64_t in_volume() const { return in[0] * in[1] * in[2] * in[3]; }
  std::int64_t out_volume() const;
  std::int64_t kernel_volume() const { return kernel[0] * kernel[1] * kernel[2] * kernel[3]; }
};

// Throws kInvalidArgument for kernel extents other than 1/3 or strides other than 1/2.
void validate(const ConvGeometry& g);

std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride);

enum class ConvAlgorithm {
  kDirect,    // all eight loops fused over the padded input
  kTemporal,  // per input frame, one 3D convolution for each temporal tap
  kNaive3d,   // repeated 3D convolution per (output frame, temporal tap)
};

// Raw kernels on row-major (N, C, X, Y, Z, T) buffers. `bias` may be empty.
// Every kernel reduces in a fixed order, so results are reproducible bit for bit.
template <typename T>
void conv4d_forward(const ConvGeometry& g, ConvAlgorithm algo, std::span<const T> input,
                    std::span<const T> weight, std::span<const T> bias, std::span<T> output);

// Accumulates (+=) dL/dinput.
template <typename T>
void conv4d_backward_input(const ConvGeometry& g, std::span<const T> grad_output,
                           std::span<const T> weight, std::span<T> grad_input);

// Accumulates (+=) dL/dweight and, when non-empty, dL/dbias.
template <typename T>
void conv4d_backward_weight(const ConvGeometry& g, std::span<const T> input,
                            std::span<const T> grad_output, std::span<T> grad_weight,
                            std::span<T> grad_bias);

}  // namespace seg4d
