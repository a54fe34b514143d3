#include "seg4d/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace seg4d {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kDetachedGraph: return "detached graph";
    case ErrorCode::kBackwardTwice: return "backward twice";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kDimensionOverflow: return "dimension overflow";
    case ErrorCode::kUnsupportedFormat: return "unsupported format";
    case ErrorCode::kIo: return "io error";
    case ErrorCode::kDuplicateId: return "duplicate id";
    case ErrorCode::kMissingFile: return "missing file";
    case ErrorCode::kConfig: return "config error";
  }
  return "error";
}

namespace {

void require_rank6(const Shape& s, const char* what) {
  if (s.size() != 6) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(what) + " expects rank-6 (N,C,X,Y,Z,T) input, got " + to_string(s));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& x, const Tensor<T>& y, const char* what) {
  if (x.shape() != y.shape()) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(what) + ": " + to_string(x.shape()) + " vs " + to_string(y.shape()));
  }
}

// Number of elements per (sample, channel).
std::int64_t voxels_per_channel(const Shape& s) {
  std::int64_t v = 1;
  for (std::size_t a = 2; a < s.size(); ++a) v *= s[a];
  return v;
}

}  // namespace

Shape conv_output_shape(const Shape& input, const Shape& weight, const Extent4& stride) {
  require_rank6(input, "conv4d");
  require_rank6(weight, "conv4d weight");
  if (weight[1] != input[1]) {
    throw Error(ErrorCode::kShapeMismatch, "conv4d: kernel expects " + std::to_string(weight[1]) +
                                               " input channels, input has " + std::to_string(input[1]));
  }
  Shape out{input[0], weight[0], 0, 0, 0, 0};
  for (std::size_t a = 0; a < 4; ++a) {
    if (weight[a + 2] != 1 && weight[a + 2] != 3) {
      throw Error(ErrorCode::kShapeMismatch, "conv4d: kernel extents must be 1 or 3, got " + to_string(weight));
    }
    if (stride[a] != 1 && stride[a] != 2) {
      throw Error(ErrorCode::kInvalidArgument, "conv4d: stride must be 1 or 2");
    }
    out[a + 2] = conv_output_extent(input[a + 2], weight[a + 2], stride[a]);
  }
  return out;
}

Shape upsample_output_shape(const Shape& input, const Extent4& factor) {
  require_rank6(input, "upsample_nearest");
  Shape out = input;
  for (std::size_t a = 0; a < 4; ++a) {
    if (factor[a] < 1) throw Error(ErrorCode::kInvalidArgument, "upsample factor must be >= 1");
    out[a + 2] *= factor[a];
  }
  return out;
}

template <typename T>
void require_finite(const Tensor<T>& x, const char* what) {
  for (T v : x.data()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, std::string(what) + " contains NaN or Inf");
  }
}

template <typename T>
Tensor<T> conv4d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv4dOptions& options) {
  const Shape out_shape = conv_output_shape(input.shape(), weight.shape(), options.stride);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
    throw Error(ErrorCode::kShapeMismatch, "conv4d: bias must have shape [Cout], got " + to_string(bias.shape()));
  }
  require_finite(input, "conv4d input");

  ConvGeometry g;
  g.batch = input.dim(0);
  g.in_channels = input.dim(1);
  g.out_channels = weight.dim(0);
  for (std::size_t a = 0; a < 4; ++a) {
    g.in[a] = input.dim(a + 2);
    g.kernel[a] = weight.dim(a + 2);
  }
  g.stride = options.stride;

  Tensor<T> out(out_shape, needs_grad(tape, input, weight, bias));
  const std::span<const T> bias_values = bias.defined() ? std::span<const T>(bias.data()) : std::span<const T>();
  conv4d_forward<T>(g, options.algorithm, input.data(), weight.data(), bias_values, out.data());

  if (out.requires_grad()) {
    tape->record("conv4d", out, [g, input, weight, bias, out]() {
      if (input.requires_grad()) conv4d_backward_input<T>(g, out.grad(), weight.data(), input.ensure_grad());
      const bool want_w = weight.requires_grad();
      const bool want_b = bias.defined() && bias.requires_grad();
      if (want_w || want_b) {
        std::vector<T> scratch_w;
        std::span<T> gw;
        if (want_w) {
          gw = weight.ensure_grad();
        } else {
          scratch_w.assign(weight.data().size(), T{0});
          gw = scratch_w;
        }
        conv4d_backward_weight<T>(g, input.data(), out.grad(), gw, want_b ? bias.ensure_grad() : std::span<T>());
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv_pointwise(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank6(input.shape(), "conv_pointwise");
  const Shape& ws = weight.shape();
  if (ws.size() != 6 || ws[1] != input.dim(1) || ws[2] != 1 || ws[3] != 1 || ws[4] != 1 || ws[5] != 1) {
    throw Error(ErrorCode::kShapeMismatch, "conv_pointwise: kernel " + to_string(ws) +
                                               " incompatible with input " + to_string(input.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != ws[0])) {
    throw Error(ErrorCode::kShapeMismatch, "conv_pointwise: bias must have shape [Cout]");
  }
  const std::int64_t n = input.dim(0), cin = input.dim(1), cout = ws[0];
  const std::int64_t vox = voxels_per_channel(input.shape());
  Shape out_shape = input.shape();
  out_shape[1] = cout;
  Tensor<T> out(out_shape, needs_grad(tape, input, weight, bias));

  const T* in = input.data().data();
  const T* w = weight.data().data();
  T* o = out.data().data();
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t co = 0; co < cout; ++co) {
      T* orow = o + (b * cout + co) * vox;
      std::fill_n(orow, vox, bias.defined() ? bias.data()[co] : T{0});
      for (std::int64_t ci = 0; ci < cin; ++ci) {
        const T wv = w[co * cin + ci];
        const T* irow = in + (b * cin + ci) * vox;
        for (std::int64_t v = 0; v < vox; ++v) orow[v] += wv * irow[v];
      }
    }
  }

  if (out.requires_grad()) {
    tape->record("conv_pointwise", out, [input, weight, bias, out, n, cin, cout, vox]() {
      const T* go = out.grad().data();
      if (input.requires_grad()) {
        T* gi = input.ensure_grad().data();
        const T* wd = weight.data().data();
        for (std::int64_t b = 0; b < n; ++b) {
          for (std::int64_t ci = 0; ci < cin; ++ci) {
            T* girow = gi + (b * cin + ci) * vox;
            for (std::int64_t co = 0; co < cout; ++co) {
              const T wv = wd[co * cin + ci];
              const T* gorow = go + (b * cout + co) * vox;
              for (std::int64_t v = 0; v < vox; ++v) girow[v] += wv * gorow[v];
            }
          }
        }
      }
      if (weight.requires_grad()) {
        T* gw = weight.ensure_grad().data();
        const T* id = input.data().data();
        for (std::int64_t co = 0; co < cout; ++co) {
          for (std::int64_t ci = 0; ci < cin; ++ci) {
            double s = 0.0;
            for (std::int64_t b = 0; b < n; ++b) {
              const T* gorow = go + (b * cout + co) * vox;
              const T* irow = id + (b * cin + ci) * vox;
              for (std::int64_t v = 0; v < vox; ++v) s += static_cast<double>(gorow[v]) * irow[v];
            }
            gw[co * cin + ci] += static_cast<T>(s);
          }
        }
      }
      if (bias.defined() && bias.requires_grad()) {
        T* gb = bias.ensure_grad().data();
        for (std::int64_t co = 0; co < cout; ++co) {
          double s = 0.0;
          for (std::int64_t b = 0; b < n; ++b) {
            const T* gorow = go + (b * cout + co) * vox;
            for (std::int64_t v = 0; v < vox; ++v) s += gorow[v];
          }
          gb[co] += static_cast<T>(s);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out(x.shape(), needs_grad(tape, x));
  auto xs = x.data();
  auto os = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) os[i] = xs[i] > T{0} ? xs[i] : T{0};
  if (out.requires_grad()) {
    tape->record("relu", out, [x, out]() {
      auto gx = x.ensure_grad();
      auto go = out.grad();
      auto xv = x.data();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (xv[i] > T{0}) gx[i] += go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& y) {
  require_same_shape(x, y, "add");
  Tensor<T> out(x.shape(), needs_grad(tape, x, y));
  auto xs = x.data(), ys = y.data(), os = out.data();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = xs[i] + ys[i];
  if (out.requires_grad()) {
    tape->record("add", out, [x, y, out]() {
      auto go = out.grad();
      for (const auto* t : {&x, &y}) {
        if (!t->requires_grad()) continue;
        auto g = t->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& y) {
  require_same_shape(x, y, "mul");
  Tensor<T> out(x.shape(), needs_grad(tape, x, y));
  auto xs = x.data(), ys = y.data(), os = out.data();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = xs[i] * ys[i];
  if (out.requires_grad()) {
    tape->record("mul", out, [x, y, out]() {
      auto go = out.grad();
      if (x.requires_grad()) {
        auto g = x.ensure_grad();
        auto yv = y.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * yv[i];
      }
      if (y.requires_grad()) {
        auto g = y.ensure_grad();
        auto xv = x.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * xv[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, T factor) {
  Tensor<T> out(x.shape(), needs_grad(tape, x));
  auto xs = x.data(), os = out.data();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = xs[i] * factor;
  if (out.requires_grad()) {
    tape->record("scale", out, [x, out, factor]() {
      auto g = x.ensure_grad();
      auto go = out.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * factor;
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& x) {
  double s = 0.0;
  for (T v : x.data()) s += v;
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(s), needs_grad(tape, x));
  if (out.requires_grad()) {
    tape->record("sum", out, [x, out]() {
      const T go = out.grad()[0];
      for (auto& g : x.ensure_grad()) g += go;
    });
  }
  return out;
}

std::int64_t effective_groups(std::int64_t channels, const GroupNormOptions& options) {
  if (options.groups <= 0) throw Error(ErrorCode::kInvalidArgument, "group_norm: group count must be positive");
  if (channels % options.groups == 0) return options.groups;
  if (!options.allow_fallback) {
    throw Error(ErrorCode::kInvalidArgument, "group_norm: " + std::to_string(channels) +
                                                 " channels not divisible by " + std::to_string(options.groups) +
                                                 " groups");
  }
  return std::gcd(channels, options.groups);
}

template <typename T>
Tensor<T> group_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     const GroupNormOptions& options) {
  if (x.rank() < 2) throw Error(ErrorCode::kShapeMismatch, "group_norm expects (N, C, ...) input");
  const std::int64_t n = x.dim(0), c = x.dim(1);
  if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c) {
    throw Error(ErrorCode::kShapeMismatch, "group_norm: gamma/beta must have shape [" + std::to_string(c) + "]");
  }
  const std::int64_t groups = effective_groups(c, options);
  const std::int64_t cpg = c / groups;
  const std::int64_t vox = voxels_per_channel(x.shape());
  const std::int64_t group_size = cpg * vox;

  Tensor<T> out(x.shape(), needs_grad(tape, x, gamma, beta));
  std::vector<T> xhat(x.data().size());
  std::vector<double> inv_std(static_cast<std::size_t>(n * groups));
  const T* xd = x.data().data();
  T* od = out.data().data();
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t gi = 0; gi < groups; ++gi) {
      const std::int64_t base = (b * c + gi * cpg) * vox;
      double mean = 0.0;
      for (std::int64_t i = 0; i < group_size; ++i) mean += xd[base + i];
      mean /= static_cast<double>(group_size);
      double var = 0.0;
      for (std::int64_t i = 0; i < group_size; ++i) {
        const double d = xd[base + i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(group_size);
      const double is = 1.0 / std::sqrt(var + options.eps);
      inv_std[static_cast<std::size_t>(b * groups + gi)] = is;
      for (std::int64_t ch = 0; ch < cpg; ++ch) {
        const std::int64_t channel = gi * cpg + ch;
        const T gm = gamma.data()[channel], bt = beta.data()[channel];
        const std::int64_t off = base + ch * vox;
        for (std::int64_t v = 0; v < vox; ++v) {
          const T h = static_cast<T>((xd[off + v] - mean) * is);
          xhat[static_cast<std::size_t>(off + v)] = h;
          od[off + v] = gm * h + bt;
        }
      }
    }
  }

  if (out.requires_grad()) {
    tape->record("group_norm", out,
                 [x, gamma, beta, out, xhat = std::move(xhat), inv_std = std::move(inv_std), n, c, groups, cpg,
                  vox, group_size]() {
                   const T* go = out.grad().data();
                   const T* gm = gamma.data().data();
                   T* gg = gamma.requires_grad() ? gamma.ensure_grad().data() : nullptr;
                   T* gb = beta.requires_grad() ? beta.ensure_grad().data() : nullptr;
                   T* gx = x.requires_grad() ? x.ensure_grad().data() : nullptr;
                   for (std::int64_t b = 0; b < n; ++b) {
                     for (std::int64_t gi = 0; gi < groups; ++gi) {
                       const std::int64_t base = (b * c + gi * cpg) * vox;
                       double m1 = 0.0, m2 = 0.0;
                       for (std::int64_t ch = 0; ch < cpg; ++ch) {
                         const std::int64_t channel = gi * cpg + ch;
                         const std::int64_t off = base + ch * vox;
                         double sg = 0.0, sb = 0.0;
                         for (std::int64_t v = 0; v < vox; ++v) {
                           const double dy = go[off + v];
                           const double h = xhat[static_cast<std::size_t>(off + v)];
                           sg += dy * h;
                           sb += dy;
                         }
                         if (gg) gg[channel] += static_cast<T>(sg);
                         if (gb) gb[channel] += static_cast<T>(sb);
                         m1 += sb * gm[channel];
                         m2 += sg * gm[channel];
                       }
                       if (!gx) continue;
                       m1 /= static_cast<double>(group_size);
                       m2 /= static_cast<double>(group_size);
                       const double is = inv_std[static_cast<std::size_t>(b * groups + gi)];
                       for (std::int64_t ch = 0; ch < cpg; ++ch) {
                         const double g = gm[gi * cpg + ch];
                         const std::int64_t off = base + ch * vox;
                         for (std::int64_t v = 0; v < vox; ++v) {
                           const double dxhat = go[off + v] * g;
                           const double h = xhat[static_cast<std::size_t>(off + v)];
                           gx[off + v] += static_cast<T>(is * (dxhat - m1 - h * m2));
                         }
                       }
                     }
                   }
                 });
  }
  return out;
}

template <typename T>
Tensor<T> softmax_channels(Tape<T>* tape, const Tensor<T>& x) {
  if (x.rank() < 2) throw Error(ErrorCode::kShapeMismatch, "softmax_channels expects (N, C, ...) input");
  const std::int64_t n = x.dim(0), c = x.dim(1);
  const std::int64_t vox = voxels_per_channel(x.shape());
  Tensor<T> out(x.shape(), needs_grad(tape, x));
  const T* xd = x.data().data();
  T* od = out.data().data();
  std::vector<T> mx(static_cast<std::size_t>(vox)), total(static_cast<std::size_t>(vox));
  for (std::int64_t b = 0; b < n; ++b) {
    const T* xb = xd + b * c * vox;
    T* ob = od + b * c * vox;
    std::copy(xb, xb + vox, mx.begin());
    for (std::int64_t ch = 1; ch < c; ++ch) {
      for (std::int64_t v = 0; v < vox; ++v) mx[v] = std::max(mx[v], xb[ch * vox + v]);
    }
    std::fill(total.begin(), total.end(), T{0});
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t v = 0; v < vox; ++v) {
        const T e = std::exp(xb[ch * vox + v] - mx[v]);
        ob[ch * vox + v] = e;
        total[v] += e;
      }
    }
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t v = 0; v < vox; ++v) ob[ch * vox + v] /= total[v];
    }
  }
  if (out.requires_grad()) {
    tape->record("softmax_channels", out, [x, out, n, c, vox]() {
      const T* p = out.data().data();
      const T* go = out.grad().data();
      T* gx = x.ensure_grad().data();
      std::vector<T> dotp(static_cast<std::size_t>(vox));
      for (std::int64_t b = 0; b < n; ++b) {
        const std::int64_t base = b * c * vox;
        std::fill(dotp.begin(), dotp.end(), T{0});
        for (std::int64_t ch = 0; ch < c; ++ch) {
          for (std::int64_t v = 0; v < vox; ++v) dotp[v] += go[base + ch * vox + v] * p[base + ch * vox + v];
        }
        for (std::int64_t ch = 0; ch < c; ++ch) {
          for (std::int64_t v = 0; v < vox; ++v) {
            const std::int64_t i = base + ch * vox + v;
            gx[i] += p[i] * (go[i] - dotp[v]);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> upsample_nearest(Tape<T>* tape, const Tensor<T>& x, const Extent4& factor) {
  const Shape out_shape = upsample_output_shape(x.shape(), factor);
  Tensor<T> out(out_shape, needs_grad(tape, x));
  const std::int64_t planes = x.dim(0) * x.dim(1);
  const Extent4 in{x.dim(2), x.dim(3), x.dim(4), x.dim(5)};
  const Extent4 o{out_shape[2], out_shape[3], out_shape[4], out_shape[5]};
  const std::int64_t in_vol = in[0] * in[1] * in[2] * in[3];
  const std::int64_t out_vol = o[0] * o[1] * o[2] * o[3];

  // Source index of every output voxel within one (N, C) plane.
  std::vector<std::int64_t> src(static_cast<std::size_t>(out_vol));
  for (std::int64_t X = 0, i = 0; X < o[0]; ++X) {
    for (std::int64_t Y = 0; Y < o[1]; ++Y) {
      for (std::int64_t Z = 0; Z < o[2]; ++Z) {
        for (std::int64_t t = 0; t < o[3]; ++t, ++i) {
          src[static_cast<std::size_t>(i)] =
              (((X / factor[0]) * in[1] + Y / factor[1]) * in[2] + Z / factor[2]) * in[3] + t / factor[3];
        }
      }
    }
  }
  const T* xd = x.data().data();
  T* od = out.data().data();
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t i = 0; i < out_vol; ++i) od[p * out_vol + i] = xd[p * in_vol + src[static_cast<std::size_t>(i)]];
  }
  if (out.requires_grad()) {
    tape->record("upsample_nearest", out, [x, out, src = std::move(src), planes, in_vol, out_vol]() {
      T* gx = x.ensure_grad().data();
      const T* go = out.grad().data();
      for (std::int64_t p = 0; p < planes; ++p) {
        for (std::int64_t i = 0; i < out_vol; ++i) gx[p * in_vol + src[static_cast<std::size_t>(i)]] += go[p * out_vol + i];
      }
    });
  }
  return out;
}

#define SEG4D_INSTANTIATE_OPS(T)                                                                               \
  template Tensor<T> conv4d<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                 \
                               const Conv4dOptions&);                                                          \
  template Tensor<T> conv_pointwise<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> relu<T>(Tape<T>*, const Tensor<T>&);                                                      \
  template Tensor<T> add<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> scale<T>(Tape<T>*, const Tensor<T>&, T);                                                  \
  template Tensor<T> sum<T>(Tape<T>*, const Tensor<T>&);                                                       \
  template Tensor<T> group_norm<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,             \
                                   const GroupNormOptions&);                                                   \
  template Tensor<T> softmax_channels<T>(Tape<T>*, const Tensor<T>&);                                          \
  template Tensor<T> upsample_nearest<T>(Tape<T>*, const Tensor<T>&, const Extent4&);                          \
  template void require_finite<T>(const Tensor<T>&, const char*);

SEG4D_INSTANTIATE_OPS(float)
SEG4D_INSTANTIATE_OPS(double)

#undef SEG4D_INSTANTIATE_OPS

}  // namespace seg4d
