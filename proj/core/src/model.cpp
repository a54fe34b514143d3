#include "seg4d/model.hpp"

#include <algorithm>
#include <cmath>

namespace seg4d {

std::string_view to_string(NetMode mode) { return mode == NetMode::kSeg4d ? "seg4d" : "seg3d"; }

NetMode parse_net_mode(std::string_view text) {
  if (text == "seg4d") return NetMode::kSeg4d;
  if (text == "seg3d") return NetMode::kSeg3d;
  throw Error(ErrorCode::kConfig, "unknown network mode '" + std::string(text) + "'");
}

NetConfig NetConfig::paper_4d() {
  NetConfig c;
  c.base_filters = 8;
  c.crop = {96, 96, 64, 16};
  return c;
}

NetConfig NetConfig::paper_3d() {
  NetConfig c;
  c.mode = NetMode::kSeg3d;
  c.base_filters = 8;
  c.levels = 4;
  c.blocks_per_level = {1, 2, 4, 1};
  c.crop = {96, 96, 64, 1};
  return c;
}

NetConfig NetConfig::desk_4d() { return NetConfig{}; }

NetConfig NetConfig::desk_3d() {
  NetConfig c;
  c.mode = NetMode::kSeg3d;
  c.levels = 4;
  c.blocks_per_level = {1, 2, 4, 1};
  c.crop = {32, 32, 24, 1};
  return c;
}

LayerGeometry NetConfig::geometry() const {
  LayerGeometry g = mode == NetMode::kSeg4d ? LayerGeometry::seg4d() : LayerGeometry::seg3d();
  g.norm.groups = norm_groups;
  g.conv_bias = conv_bias;
  g.algorithm = algorithm;
  return g;
}

Extent4 NetConfig::reduction() const {
  const auto g = geometry();
  Extent4 r{1, 1, 1, 1};
  for (std::int64_t l = 1; l < levels; ++l) {
    for (std::size_t a = 0; a < 4; ++a) r[a] *= g.down_stride[a];
  }
  return r;
}

void NetConfig::validate() const {
  if (base_filters <= 0 || levels <= 0 || num_classes <= 1) {
    throw Error(ErrorCode::kConfig, "network needs positive filters/levels and at least two classes");
  }
  if (static_cast<std::int64_t>(blocks_per_level.size()) != levels) {
    throw Error(ErrorCode::kConfig, "blocks_per_level must list one count per level");
  }
  for (auto b : blocks_per_level) {
    if (b <= 0) throw Error(ErrorCode::kConfig, "every level needs at least one block");
  }
  if (mode == NetMode::kSeg3d && crop[3] != 1) {
    throw Error(ErrorCode::kConfig, "seg3d crops have a single frame");
  }
  const auto r = reduction();
  for (std::size_t a = 0; a < 4; ++a) {
    if (crop[a] <= 0 || crop[a] % r[a] != 0) {
      throw Error(ErrorCode::kConfig, "crop extent " + std::to_string(crop[a]) + " not divisible by " +
                                          std::to_string(r[a]));
    }
  }
}

namespace {

std::string level_name(const char* stem, std::int64_t level) { return stem + std::to_string(level); }

std::string conv_ops(const NetConfig& c, bool strided) {
  std::string s = c.mode == NetMode::kSeg4d ? "Conv 3x3x3x3" : "Conv 3x3x3";
  return strided ? s + " stride 2" : s;
}

constexpr const char* kBlockOps = "GN,ReLU,Conv,GN,ReLU,Conv, AddId";

Shape sample_shape(const NetConfig& c, std::int64_t channels, const Extent4& e) {
  Shape s{channels, e[0], e[1], e[2]};
  if (c.mode == NetMode::kSeg4d) s.push_back(e[3]);
  return s;
}

Shape sample_shape(const NetConfig& c, const Shape& full) {
  return sample_shape(c, full[1], Extent4{full[2], full[3], full[4], full[5]});
}

}  // namespace

ModelParams<float> build_model(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  const auto geo = config.geometry();
  ParamInitializer init(seed);
  ModelParams<float> m{config, {}};
  auto& p = m.params;
  const std::int64_t f = config.base_filters;
  init.add_conv(p, "init_conv", 1, f, geo.kernel, geo.conv_bias);
  for (std::int64_t l = 0; l < config.levels; ++l) {
    const std::int64_t ch = f << l;
    if (l > 0) init.add_conv(p, level_name("enc", l) + ".down", ch / 2, ch, geo.kernel, geo.conv_bias);
    for (std::int64_t b = 0; b < config.blocks_per_level[static_cast<std::size_t>(l)]; ++b) {
      init.add_res_block(p, level_name("enc", l) + ".block" + std::to_string(b), ch, geo);
    }
  }
  for (std::int64_t l = config.levels - 2; l >= 0; --l) {
    const std::int64_t ch = f << l;
    init.add_conv(p, level_name("dec", l) + ".up", ch * 2, ch, {1, 1, 1, 1}, geo.conv_bias);
    init.add_res_block(p, level_name("dec", l) + ".block0", ch, geo);
  }
  // A small classifier init keeps the initial softmax close to uniform.
  init.add_conv(p, "end", f, config.num_classes, {1, 1, 1, 1}, geo.conv_bias, 0.1);
  return m;
}

std::string format_shape(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s;
}

std::vector<ShapeRow> shape_audit(const NetConfig& config) {
  config.validate();
  const auto geo = config.geometry();
  std::vector<ShapeRow> rows;
  Extent4 e = config.crop;
  const std::int64_t f = config.base_filters;
  rows.push_back({"Input", "", 1, sample_shape(config, 1, e)});
  rows.push_back({"InitConv", conv_ops(config, false), 1, sample_shape(config, f, e)});
  std::vector<Extent4> level_extent;
  for (std::int64_t l = 0; l < config.levels; ++l) {
    const std::int64_t ch = f << l;
    if (l > 0) {
      for (std::size_t a = 0; a < 4; ++a) e[a] = conv_output_extent(e[a], geo.kernel[a], geo.down_stride[a]);
      rows.push_back({level_name("EncoderDown", l), conv_ops(config, true), 1, sample_shape(config, ch, e)});
    }
    rows.push_back({level_name("EncoderBlock", l), kBlockOps, config.blocks_per_level[static_cast<std::size_t>(l)],
                    sample_shape(config, ch, e)});
    level_extent.push_back(e);
  }
  for (std::int64_t l = config.levels - 2; l >= 0; --l) {
    const std::int64_t ch = f << l;
    e = level_extent[static_cast<std::size_t>(l)];
    rows.push_back({level_name("DecoderUp", l), "Conv1, UpNearest, +" + level_name("EncoderBlock", l), 1,
                    sample_shape(config, ch, e)});
    rows.push_back({level_name("DecoderBlock", l), kBlockOps, 1, sample_shape(config, ch, e)});
  }
  const std::string end_ops = config.mode == NetMode::kSeg4d ? "Conv 1x1x1x1, Softmax" : "Conv 1x1x1, Softmax";
  rows.push_back({"DecoderEnd", end_ops, 1, sample_shape(config, config.num_classes, e)});
  return rows;
}

template <typename T>
Tensor<T> forward(Tape<T>* tape, const ModelParams<T>& model, const Tensor<T>& input, std::vector<ShapeRow>* trace) {
  const auto& c = model.config;
  const auto geo = c.geometry();
  const auto& p = model.params;
  if (input.rank() != 6 || input.dim(1) != 1) {
    throw Error(ErrorCode::kShapeMismatch, "forward expects (N, 1, X, Y, Z, T) input, got " + to_string(input.shape()));
  }
  const auto r = c.reduction();
  for (std::size_t a = 0; a < 4; ++a) {
    if (input.dim(a + 2) % r[a] != 0 || (c.mode == NetMode::kSeg3d && a == 3 && input.dim(5) != 1)) {
      throw Error(ErrorCode::kShapeMismatch, "input " + to_string(input.shape()) + " incompatible with " +
                                                 std::string(to_string(c.mode)) + " network");
    }
  }
  auto record = [&](const std::string& name, std::string ops, std::int64_t repeat, const Tensor<T>& t) {
    if (trace) trace->push_back({name, std::move(ops), repeat, sample_shape(c, t.shape())});
  };

  record("Input", "", 1, input);
  auto h = conv4d(tape, input, p.at("init_conv.weight"), optional_param(p, "init_conv.bias"),
                  Conv4dOptions{{1, 1, 1, 1}, geo.algorithm});
  record("InitConv", conv_ops(c, false), 1, h);
  std::vector<Tensor<T>> skips;
  for (std::int64_t l = 0; l < c.levels; ++l) {
    const std::string enc = level_name("enc", l);
    if (l > 0) {
      h = down_conv(tape, h, p, enc + ".down", geo);
      record(level_name("EncoderDown", l), conv_ops(c, true), 1, h);
    }
    const auto blocks = c.blocks_per_level[static_cast<std::size_t>(l)];
    for (std::int64_t b = 0; b < blocks; ++b) h = res_block(tape, h, p, enc + ".block" + std::to_string(b), geo);
    record(level_name("EncoderBlock", l), kBlockOps, blocks, h);
    if (l < c.levels - 1) skips.push_back(h);
  }
  for (std::int64_t l = c.levels - 2; l >= 0; --l) {
    const std::string dec = level_name("dec", l);
    h = decoder_up(tape, h, skips[static_cast<std::size_t>(l)], p, dec + ".up", geo);
    record(level_name("DecoderUp", l), "Conv1, UpNearest, +" + level_name("EncoderBlock", l), 1, h);
    h = res_block(tape, h, p, dec + ".block0", geo);
    record(level_name("DecoderBlock", l), kBlockOps, 1, h);
  }
  h = conv_pointwise(tape, h, p.at("end.weight"), optional_param(p, "end.bias"));
  h = softmax_channels(tape, h);
  record("DecoderEnd", c.mode == NetMode::kSeg4d ? "Conv 1x1x1x1, Softmax" : "Conv 1x1x1, Softmax", 1, h);
  return h;
}

template Tensor<float> forward<float>(Tape<float>*, const ModelParams<float>&, const Tensor<float>&,
                                      std::vector<ShapeRow>*);
template Tensor<double> forward<double>(Tape<double>*, const ModelParams<double>&, const Tensor<double>&,
                                        std::vector<ShapeRow>*);

std::vector<std::int64_t> tile_starts(std::int64_t extent, std::int64_t tile, double overlap) {
  if (tile <= 0) throw Error(ErrorCode::kInvalidArgument, "tile extent must be positive");
  if (extent <= tile) return {0};
  const auto step = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(tile * (1.0 - overlap))));
  std::vector<std::int64_t> starts;
  for (std::int64_t s = 0; s + tile < extent; s += step) starts.push_back(s);
  starts.push_back(extent - tile);
  return starts;
}

std::vector<float> predict_probabilities(const ModelParams<float>& model, const Volume4DSequence& sequence,
                                         const TilingPolicy& policy) {
  const auto& c = model.config;
  const auto r = c.reduction();
  const Extent4 dims = sequence.dims;
  Extent4 tile{};
  for (std::size_t a = 0; a < 4; ++a) {
    tile[a] = policy.tile[a] > 0 ? policy.tile[a] : c.crop[a];
    if (tile[a] % r[a] != 0) {
      throw Error(ErrorCode::kInvalidArgument, "tile extents must be divisible by the network reduction");
    }
  }
  if (c.mode == NetMode::kSeg3d) tile[3] = 1;
  // Axes shorter than the tile are padded at the far end.
  Extent4 padded{};
  for (std::size_t a = 0; a < 4; ++a) padded[a] = std::max(dims[a], tile[a]);

  const std::int64_t classes = c.num_classes;
  const std::int64_t vol = dims[0] * dims[1] * dims[2] * dims[3];
  std::vector<double> acc(static_cast<std::size_t>(classes * vol), 0.0);
  std::vector<std::int32_t> hits(static_cast<std::size_t>(vol), 0);

  const auto sx = tile_starts(padded[0], tile[0], policy.overlap);
  const auto sy = tile_starts(padded[1], tile[1], policy.overlap);
  const auto sz = tile_starts(padded[2], tile[2], policy.overlap);
  const auto st = tile_starts(padded[3], tile[3], policy.overlap);
  const std::int64_t tile_vol = tile[0] * tile[1] * tile[2] * tile[3];
  for (auto ox : sx) {
    for (auto oy : sy) {
      for (auto oz : sz) {
        for (auto ot : st) {
          Tensor<float> x({1, 1, tile[0], tile[1], tile[2], tile[3]});
          auto xd = x.data();
          for (std::int64_t X = 0, i = 0; X < tile[0]; ++X) {
            for (std::int64_t Y = 0; Y < tile[1]; ++Y) {
              for (std::int64_t Z = 0; Z < tile[2]; ++Z) {
                for (std::int64_t t = 0; t < tile[3]; ++t, ++i) {
                  const std::int64_t gx = ox + X, gy = oy + Y, gz = oz + Z, gt = ot + t;
                  const bool inside = gx < dims[0] && gy < dims[1] && gz < dims[2] && gt < dims[3];
                  xd[static_cast<std::size_t>(i)] =
                      inside ? normalize_intensity(
                                   sequence.intensities[static_cast<std::size_t>(((gx * dims[1] + gy) * dims[2] + gz) *
                                                                                     dims[3] +
                                                                                 gt)])
                             : -1.0f;
                }
              }
            }
          }
          const auto probs = forward<float>(nullptr, model, x);
          const auto pd = probs.data();
          for (std::int64_t X = 0, i = 0; X < tile[0]; ++X) {
            for (std::int64_t Y = 0; Y < tile[1]; ++Y) {
              for (std::int64_t Z = 0; Z < tile[2]; ++Z) {
                for (std::int64_t t = 0; t < tile[3]; ++t, ++i) {
                  const std::int64_t gx = ox + X, gy = oy + Y, gz = oz + Z, gt = ot + t;
                  if (gx >= dims[0] || gy >= dims[1] || gz >= dims[2] || gt >= dims[3]) continue;
                  const std::int64_t g = ((gx * dims[1] + gy) * dims[2] + gz) * dims[3] + gt;
                  hits[static_cast<std::size_t>(g)] += 1;
                  for (std::int64_t k = 0; k < classes; ++k) {
                    acc[static_cast<std::size_t>(k * vol + g)] += pd[static_cast<std::size_t>(k * tile_vol + i)];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  std::vector<float> out(acc.size());
  for (std::int64_t k = 0; k < classes; ++k) {
    for (std::int64_t g = 0; g < vol; ++g) {
      out[static_cast<std::size_t>(k * vol + g)] =
          static_cast<float>(acc[static_cast<std::size_t>(k * vol + g)] / hits[static_cast<std::size_t>(g)]);
    }
  }
  return out;
}

LabelSequence argmax_labels(const std::vector<float>& probabilities, const Extent4& dims, std::int64_t classes) {
  LabelSequence labels(dims);
  const std::int64_t vol = dims[0] * dims[1] * dims[2] * dims[3];
  for (std::int64_t g = 0; g < vol; ++g) {
    std::int64_t best = 0;
    for (std::int64_t k = 1; k < classes; ++k) {
      if (probabilities[static_cast<std::size_t>(k * vol + g)] > probabilities[static_cast<std::size_t>(best * vol + g)]) {
        best = k;
      }
    }
    labels.values[static_cast<std::size_t>(g)] = static_cast<std::uint8_t>(best);
  }
  return labels;
}

LabelSequence predict_labels(const ModelParams<float>& model, const Volume4DSequence& sequence,
                             const TilingPolicy& policy) {
  return argmax_labels(predict_probabilities(model, sequence, policy), sequence.dims, model.config.num_classes);
}

}  // namespace seg4d
