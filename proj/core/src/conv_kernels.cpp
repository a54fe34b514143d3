#include "seg4d/conv_kernels.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "seg4d/error.hpp"

namespace seg4d {

std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride) {
  const std::int64_t pad = kernel / 2;
  return (in + 2 * pad - kernel) / stride + 1;
}

Extent4 ConvGeometry::pad() const {
  return {kernel[0] / 2, kernel[1] / 2, kernel[2] / 2, kernel[3] / 2};
}

Extent4 ConvGeometry::out() const {
  Extent4 o{};
  for (std::size_t a = 0; a < 4; ++a) o[a] = conv_output_extent(in[a], kernel[a], stride[a]);
  return o;
}

std::int64_t ConvGeometry::out_volume() const {
  const auto o = out();
  return o[0] * o[1] * o[2] * o[3];
}

void validate(const ConvGeometry& g) {
  if (g.batch <= 0 || g.in_channels <= 0 || g.out_channels <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "convolution channel and batch counts must be positive");
  }
  for (std::size_t a = 0; a < 4; ++a) {
    if (g.kernel[a] != 1 && g.kernel[a] != 3) {
      throw Error(ErrorCode::kInvalidArgument,
                  "kernel extent must be 1 or 3, got " + std::to_string(g.kernel[a]));
    }
    if (g.stride[a] != 1 && g.stride[a] != 2) {
      throw Error(ErrorCode::kInvalidArgument,
                  "stride must be 1 or 2, got " + std::to_string(g.stride[a]));
    }
    if (g.in[a] <= 0) throw Error(ErrorCode::kInvalidArgument, "input extents must be positive");
  }
}

namespace {

// Lane-split dot product. The fixed lane count lets the compiler vectorize
// without reassociating, so the result does not depend on the ISA.
template <typename T>
T dot(const T* __restrict a, const T* __restrict b, std::int64_t n) {
  constexpr int kLanes = 16;
  T lanes[kLanes] = {};
  std::int64_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (int l = 0; l < kLanes; ++l) lanes[l] += a[i + l] * b[i + l];
  }
  T tail{0};
  for (; i < n; ++i) tail += a[i] * b[i];
  T s{0};
  for (int l = 0; l < kLanes; ++l) s += lanes[l];
  return s + tail;
}

template <typename T>
void axpy(T* __restrict y, const T* __restrict x, T alpha, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// Zero-padded copy of one sample: (C, X+2p, Y+2p, Z+2p, T+2p) plus a tail of
// slack so flattened row reads never leave the allocation.
template <typename T>
struct PaddedInput {
  Extent4 ext{};
  std::int64_t plane = 0;  // Zp * Tp
  std::int64_t channel_stride = 0;
  std::vector<T> data;

  PaddedInput(std::span<const T> sample, std::int64_t channels, const Extent4& in, const Extent4& pad) {
    for (std::size_t a = 0; a < 4; ++a) ext[a] = in[a] + 2 * pad[a];
    plane = ext[2] * ext[3];
    channel_stride = ext[0] * ext[1] * plane;
    data.assign(static_cast<std::size_t>(channels * channel_stride + ext[3] + 1), T{0});
    const std::int64_t in_vol = in[0] * in[1] * in[2] * in[3];
    for (std::int64_t c = 0; c < channels; ++c) {
      const T* src = sample.data() + c * in_vol;
      for (std::int64_t x = 0; x < in[0]; ++x) {
        for (std::int64_t y = 0; y < in[1]; ++y) {
          for (std::int64_t z = 0; z < in[2]; ++z) {
            const T* s = src + ((x * in[1] + y) * in[2] + z) * in[3];
            T* d = row(c, x + pad[0], y + pad[1]) + (z + pad[2]) * ext[3] + pad[3];
            std::copy(s, s + in[3], d);
          }
        }
      }
    }
  }

  T* row(std::int64_t c, std::int64_t x, std::int64_t y) {
    return data.data() + c * channel_stride + (x * ext[1] + y) * plane;
  }
  const T* row(std::int64_t c, std::int64_t x, std::int64_t y) const {
    return data.data() + c * channel_stride + (x * ext[1] + y) * plane;
  }
};

template <typename T>
void forward_direct(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const auto pad = g.pad();
  const auto o = g.out();
  const auto& k = g.kernel;
  const auto& s = g.stride;
  const std::int64_t cin = g.in_channels, cout = g.out_channels;
  const std::int64_t kvol = g.kernel_volume();
  const std::int64_t in_vol = g.in_volume(), out_vol = g.out_volume();
  const bool unit_zt = s[2] == 1 && s[3] == 1;

  for (std::int64_t n = 0; n < g.batch; ++n) {
    PaddedInput<T> p(input.subspan(n * cin * in_vol, cin * in_vol), cin, g.in, pad);
    const std::int64_t tp = p.ext[3];
    // Stride-1 rows are accumulated in the padded row layout (row pitch Tp);
    // columns t >= To hold scratch values that are never copied out.
    const std::int64_t row_len = unit_zt ? (o[2] - 1) * tp + o[3] : o[2] * o[3];
    const std::int64_t pitch = unit_zt ? tp : o[3];
    std::vector<T> acc(static_cast<std::size_t>(cout * row_len));

    for (std::int64_t x = 0; x < o[0]; ++x) {
      for (std::int64_t y = 0; y < o[1]; ++y) {
        for (std::int64_t co = 0; co < cout; ++co) {
          const T b = bias.empty() ? T{0} : bias[co];
          std::fill_n(acc.begin() + co * row_len, row_len, b);
        }
        for (std::int64_t ci = 0; ci < cin; ++ci) {
          for (std::int64_t dx = 0; dx < k[0]; ++dx) {
            for (std::int64_t dy = 0; dy < k[1]; ++dy) {
              const T* r = p.row(ci, s[0] * x + dx, s[1] * y + dy);
              for (std::int64_t dz = 0; dz < k[2]; ++dz) {
                for (std::int64_t dt = 0; dt < k[3]; ++dt) {
                  const std::int64_t tap = ((dx * k[1] + dy) * k[2] + dz) * k[3] + dt;
                  for (std::int64_t co = 0; co < cout; ++co) {
                    const T w = weight[(co * cin + ci) * kvol + tap];
                    T* a = acc.data() + co * row_len;
                    if (unit_zt) {
                      axpy(a, r + dz * tp + dt, w, row_len);
                    } else {
                      for (std::int64_t z = 0; z < o[2]; ++z) {
                        const T* rz = r + (s[2] * z + dz) * tp + dt;
                        T* az = a + z * o[3];
                        for (std::int64_t t = 0; t < o[3]; ++t) az[t] += w * rz[s[3] * t];
                      }
                    }
                  }
                }
              }
            }
          }
        }
        for (std::int64_t co = 0; co < cout; ++co) {
          T* dst = output.data() + (n * cout + co) * out_vol + (x * o[1] + y) * o[2] * o[3];
          const T* a = acc.data() + co * row_len;
          for (std::int64_t z = 0; z < o[2]; ++z) {
            std::copy(a + z * pitch, a + z * pitch + o[3], dst + z * o[3]);
          }
        }
      }
    }
  }
}

// One padded spatial frame per input channel: (C, Xp, Yp, Zp).
template <typename T>
struct PaddedFrame {
  Extent4 ext{};
  std::int64_t channel_stride = 0;
  std::vector<T> data;

  PaddedFrame(std::span<const T> sample, std::int64_t channels, const Extent4& in, const Extent4& pad,
              std::int64_t frame) {
    for (std::size_t a = 0; a < 3; ++a) ext[a] = in[a] + 2 * pad[a];
    channel_stride = ext[0] * ext[1] * ext[2];
    data.assign(static_cast<std::size_t>(channels * channel_stride), T{0});
    const std::int64_t in_vol = in[0] * in[1] * in[2] * in[3];
    for (std::int64_t c = 0; c < channels; ++c) {
      const T* src = sample.data() + c * in_vol;
      for (std::int64_t x = 0; x < in[0]; ++x) {
        for (std::int64_t y = 0; y < in[1]; ++y) {
          T* d = data.data() + c * channel_stride + ((x + pad[0]) * ext[1] + y + pad[1]) * ext[2] + pad[2];
          const T* srow = src + (x * in[1] + y) * in[2] * in[3] + frame;
          for (std::int64_t z = 0; z < in[2]; ++z) d[z] = srow[z * in[3]];
        }
      }
    }
  }
};

// Accumulates a strided 3D convolution of `frame` with the temporal slice `dt`
// of the 4D kernel into `out` laid out (Cout, Xo, Yo, Zo).
template <typename T>
void conv3d_accumulate(const ConvGeometry& g, const PaddedFrame<T>& frame, std::span<const T> weight,
                       std::int64_t dt, std::span<T> out) {
  const auto o = g.out();
  const auto& k = g.kernel;
  const auto& s = g.stride;
  const std::int64_t cin = g.in_channels, cout = g.out_channels;
  const std::int64_t kvol = g.kernel_volume();
  const std::int64_t frame_vol = o[0] * o[1] * o[2];
  for (std::int64_t x = 0; x < o[0]; ++x) {
    for (std::int64_t y = 0; y < o[1]; ++y) {
      for (std::int64_t ci = 0; ci < cin; ++ci) {
        for (std::int64_t dx = 0; dx < k[0]; ++dx) {
          for (std::int64_t dy = 0; dy < k[1]; ++dy) {
            const T* r = frame.data.data() + ci * frame.channel_stride +
                         ((s[0] * x + dx) * frame.ext[1] + s[1] * y + dy) * frame.ext[2];
            for (std::int64_t dz = 0; dz < k[2]; ++dz) {
              const std::int64_t tap = ((dx * k[1] + dy) * k[2] + dz) * k[3] + dt;
              for (std::int64_t co = 0; co < cout; ++co) {
                const T w = weight[(co * cin + ci) * kvol + tap];
                T* a = out.data() + co * frame_vol + (x * o[1] + y) * o[2];
                if (s[2] == 1) {
                  axpy(a, r + dz, w, o[2]);
                } else {
                  for (std::int64_t z = 0; z < o[2]; ++z) a[z] += w * r[s[2] * z + dz];
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void scatter_frames(const ConvGeometry& g, const std::vector<std::vector<T>>& frames, std::int64_t n,
                    std::span<const T> bias, std::span<T> output) {
  const auto o = g.out();
  const std::int64_t cout = g.out_channels;
  const std::int64_t frame_vol = o[0] * o[1] * o[2];
  const std::int64_t out_vol = g.out_volume();
  for (std::int64_t co = 0; co < cout; ++co) {
    const T b = bias.empty() ? T{0} : bias[co];
    T* dst = output.data() + (n * cout + co) * out_vol;
    for (std::int64_t t = 0; t < o[3]; ++t) {
      const T* src = frames[static_cast<std::size_t>(t)].data() + co * frame_vol;
      for (std::int64_t v = 0; v < frame_vol; ++v) dst[v * o[3] + t] = src[v] + b;
    }
  }
}

// Each input frame is extracted once and convolved with every temporal tap
// that maps it onto an output frame.
template <typename T>
void forward_temporal(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                      std::span<const T> bias, std::span<T> output) {
  const auto pad = g.pad();
  const auto o = g.out();
  const std::int64_t cin = g.in_channels, cout = g.out_channels;
  const std::int64_t in_vol = g.in_volume();
  const std::int64_t frame_vol = o[0] * o[1] * o[2];
  for (std::int64_t n = 0; n < g.batch; ++n) {
    const auto sample = input.subspan(n * cin * in_vol, cin * in_vol);
    std::vector<std::vector<T>> frames(static_cast<std::size_t>(o[3]),
                                       std::vector<T>(static_cast<std::size_t>(cout * frame_vol), T{0}));
    for (std::int64_t tin = 0; tin < g.in[3]; ++tin) {
      PaddedFrame<T> frame(sample, cin, g.in, pad, tin);
      const std::int64_t tp = tin + pad[3];
      for (std::int64_t dt = 0; dt < g.kernel[3]; ++dt) {
        if (tp < dt || (tp - dt) % g.stride[3] != 0) continue;
        const std::int64_t to = (tp - dt) / g.stride[3];
        if (to >= o[3]) continue;
        conv3d_accumulate<T>(g, frame, weight, dt, frames[static_cast<std::size_t>(to)]);
      }
    }
    scatter_frames<T>(g, frames, n, bias, output);
  }
}

// Straightforward formulation: every output frame sums fresh 3D convolutions
// of its temporal neighbours, re-extracting each input frame per use.
template <typename T>
void forward_naive3d(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> bias, std::span<T> output) {
  const auto pad = g.pad();
  const auto o = g.out();
  const std::int64_t cin = g.in_channels, cout = g.out_channels;
  const std::int64_t in_vol = g.in_volume();
  const std::int64_t frame_vol = o[0] * o[1] * o[2];
  for (std::int64_t n = 0; n < g.batch; ++n) {
    const auto sample = input.subspan(n * cin * in_vol, cin * in_vol);
    std::vector<std::vector<T>> frames(static_cast<std::size_t>(o[3]),
                                       std::vector<T>(static_cast<std::size_t>(cout * frame_vol), T{0}));
    for (std::int64_t to = 0; to < o[3]; ++to) {
      auto& acc = frames[static_cast<std::size_t>(to)];
      for (std::int64_t dt = 0; dt < g.kernel[3]; ++dt) {
        const std::int64_t tin = g.stride[3] * to + dt - pad[3];
        if (tin < 0 || tin >= g.in[3]) continue;
        PaddedFrame<T> frame(sample, cin, g.in, pad, tin);
        std::vector<T> partial(static_cast<std::size_t>(cout * frame_vol), T{0});
        conv3d_accumulate<T>(g, frame, weight, dt, partial);
        for (std::size_t v = 0; v < acc.size(); ++v) acc[v] += partial[v];
      }
    }
    scatter_frames<T>(g, frames, n, bias, output);
  }
}

}  // namespace

template <typename T>
void conv4d_forward(const ConvGeometry& g, ConvAlgorithm algo, std::span<const T> input,
                    std::span<const T> weight, std::span<const T> bias, std::span<T> output) {
  validate(g);
  switch (algo) {
    case ConvAlgorithm::kDirect:
      forward_direct<T>(g, input, weight, bias, output);
      return;
    case ConvAlgorithm::kTemporal:
      forward_temporal<T>(g, input, weight, bias, output);
      return;
    case ConvAlgorithm::kNaive3d:
      forward_naive3d<T>(g, input, weight, bias, output);
      return;
  }
}

template <typename T>
void conv4d_backward_input(const ConvGeometry& g, std::span<const T> grad_output, std::span<const T> weight,
                           std::span<T> grad_input) {
  validate(g);
  const auto pad = g.pad();
  const auto o = g.out();
  const auto& k = g.kernel;
  const auto& s = g.stride;
  const std::int64_t cin = g.in_channels, cout = g.out_channels;
  const std::int64_t kvol = g.kernel_volume();
  const std::int64_t in_vol = g.in_volume(), out_vol = g.out_volume();
  const bool unit_zt = s[2] == 1 && s[3] == 1;

  Extent4 pext{};
  for (std::size_t a = 0; a < 4; ++a) pext[a] = g.in[a] + 2 * pad[a];
  const std::int64_t tp = pext[3];
  const std::int64_t plane = pext[2] * pext[3];
  const std::int64_t pchan = pext[0] * pext[1] * plane;
  const std::int64_t row_len = unit_zt ? (o[2] - 1) * tp + o[3] : o[2] * o[3];
  const std::int64_t pitch = unit_zt ? tp : o[3];

  std::vector<T> gp(static_cast<std::size_t>(cin * pchan + tp + 1));
  std::vector<T> grow(static_cast<std::size_t>(cout * row_len));
  for (std::int64_t n = 0; n < g.batch; ++n) {
    std::fill(gp.begin(), gp.end(), T{0});
    for (std::int64_t x = 0; x < o[0]; ++x) {
      for (std::int64_t y = 0; y < o[1]; ++y) {
        // Output-gradient rows in the padded pitch; scratch columns stay zero.
        std::fill(grow.begin(), grow.end(), T{0});
        for (std::int64_t co = 0; co < cout; ++co) {
          const T* src = grad_output.data() + (n * cout + co) * out_vol + (x * o[1] + y) * o[2] * o[3];
          for (std::int64_t z = 0; z < o[2]; ++z) {
            std::copy(src + z * o[3], src + (z + 1) * o[3], grow.begin() + co * row_len + z * pitch);
          }
        }
        for (std::int64_t ci = 0; ci < cin; ++ci) {
          for (std::int64_t dx = 0; dx < k[0]; ++dx) {
            for (std::int64_t dy = 0; dy < k[1]; ++dy) {
              T* r = gp.data() + ci * pchan + ((s[0] * x + dx) * pext[1] + s[1] * y + dy) * plane;
              for (std::int64_t dz = 0; dz < k[2]; ++dz) {
                for (std::int64_t dt = 0; dt < k[3]; ++dt) {
                  const std::int64_t tap = ((dx * k[1] + dy) * k[2] + dz) * k[3] + dt;
                  for (std::int64_t co = 0; co < cout; ++co) {
                    const T w = weight[(co * cin + ci) * kvol + tap];
                    const T* gr = grow.data() + co * row_len;
                    if (unit_zt) {
                      axpy(r + dz * tp + dt, gr, w, row_len);
                    } else {
                      for (std::int64_t z = 0; z < o[2]; ++z) {
                        T* rz = r + (s[2] * z + dz) * tp + dt;
                        const T* gz = gr + z * o[3];
                        for (std::int64_t t = 0; t < o[3]; ++t) rz[s[3] * t] += w * gz[t];
                      }
                    }
                  }
                }
              }
            }
          }
        }
      }
    }
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      T* dst = grad_input.data() + (n * cin + ci) * in_vol;
      for (std::int64_t x = 0; x < g.in[0]; ++x) {
        for (std::int64_t y = 0; y < g.in[1]; ++y) {
          for (std::int64_t z = 0; z < g.in[2]; ++z) {
            const T* src = gp.data() + ci * pchan + ((x + pad[0]) * pext[1] + y + pad[1]) * plane +
                           (z + pad[2]) * tp + pad[3];
            T* d = dst + ((x * g.in[1] + y) * g.in[2] + z) * g.in[3];
            for (std::int64_t t = 0; t < g.in[3]; ++t) d[t] += src[t];
          }
        }
      }
    }
  }
}

template <typename T>
void conv4d_backward_weight(const ConvGeometry& g, std::span<const T> input, std::span<const T> grad_output,
                            std::span<T> grad_weight, std::span<T> grad_bias) {
  validate(g);
  const auto pad = g.pad();
  const auto o = g.out();
  const auto& k = g.kernel;
  const auto& s = g.stride;
  const std::int64_t cin = g.in_channels, cout = g.out_channels;
  const std::int64_t kvol = g.kernel_volume();
  const std::int64_t in_vol = g.in_volume(), out_vol = g.out_volume();
  const bool unit_zt = s[2] == 1 && s[3] == 1;

  std::vector<double> gw(static_cast<std::size_t>(cout * cin * kvol), 0.0);
  std::vector<double> gb(static_cast<std::size_t>(cout), 0.0);
  for (std::int64_t n = 0; n < g.batch; ++n) {
    PaddedInput<T> p(input.subspan(n * cin * in_vol, cin * in_vol), cin, g.in, pad);
    const std::int64_t tp = p.ext[3];
    const std::int64_t row_len = unit_zt ? (o[2] - 1) * tp + o[3] : o[2] * o[3];
    const std::int64_t pitch = unit_zt ? tp : o[3];
    std::vector<T> grow(static_cast<std::size_t>(cout * row_len));
    for (std::int64_t x = 0; x < o[0]; ++x) {
      for (std::int64_t y = 0; y < o[1]; ++y) {
        std::fill(grow.begin(), grow.end(), T{0});
        for (std::int64_t co = 0; co < cout; ++co) {
          const T* src = grad_output.data() + (n * cout + co) * out_vol + (x * o[1] + y) * o[2] * o[3];
          T rowsum{0};
          for (std::int64_t z = 0; z < o[2]; ++z) {
            std::copy(src + z * o[3], src + (z + 1) * o[3], grow.begin() + co * row_len + z * pitch);
            for (std::int64_t t = 0; t < o[3]; ++t) rowsum += src[z * o[3] + t];
          }
          gb[static_cast<std::size_t>(co)] += rowsum;
        }
        for (std::int64_t ci = 0; ci < cin; ++ci) {
          for (std::int64_t dx = 0; dx < k[0]; ++dx) {
            for (std::int64_t dy = 0; dy < k[1]; ++dy) {
              const T* r = p.row(ci, s[0] * x + dx, s[1] * y + dy);
              for (std::int64_t dz = 0; dz < k[2]; ++dz) {
                for (std::int64_t dt = 0; dt < k[3]; ++dt) {
                  const std::int64_t tap = ((dx * k[1] + dy) * k[2] + dz) * k[3] + dt;
                  for (std::int64_t co = 0; co < cout; ++co) {
                    const T* gr = grow.data() + co * row_len;
                    T sum{0};
                    if (unit_zt) {
                      sum = dot(gr, r + dz * tp + dt, row_len);
                    } else {
                      for (std::int64_t z = 0; z < o[2]; ++z) {
                        const T* rz = r + (s[2] * z + dz) * tp + dt;
                        const T* gz = gr + z * o[3];
                        for (std::int64_t t = 0; t < o[3]; ++t) sum += gz[t] * rz[s[3] * t];
                      }
                    }
                    gw[static_cast<std::size_t>((co * cin + ci) * kvol + tap)] += sum;
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < gw.size(); ++i) grad_weight[i] += static_cast<T>(gw[i]);
  if (!grad_bias.empty()) {
    for (std::size_t i = 0; i < gb.size(); ++i) grad_bias[i] += static_cast<T>(gb[i]);
  }
}

#define SEG4D_INSTANTIATE_CONV(T)                                                                    \
  template void conv4d_forward<T>(const ConvGeometry&, ConvAlgorithm, std::span<const T>,             \
                                  std::span<const T>, std::span<const T>, std::span<T>);              \
  template void conv4d_backward_input<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, \
                                         std::span<T>);                                               \
  template void conv4d_backward_weight<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, \
                                          std::span<T>, std::span<T>);

SEG4D_INSTANTIATE_CONV(float)
SEG4D_INSTANTIATE_CONV(double)

#undef SEG4D_INSTANTIATE_CONV

}  // namespace seg4d
