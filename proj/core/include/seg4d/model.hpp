#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "seg4d/nn.hpp"
#include "seg4d/volume.hpp"

namespace seg4d {

enum class NetMode { kSeg4d, kSeg3d };

std::string_view to_string(NetMode mode);
NetMode parse_net_mode(std::string_view text);

// Architecture of the encoder-decoder. Level l of the encoder has
// base_filters * 2^l channels; every level below the first starts with a
// stride-2 convolution, and the decoder mirrors levels levels-2..0 with one
// block each. seg3d collapses the temporal kernel extent and crop to 1.
struct NetConfig {
  NetMode mode = NetMode::kSeg4d;
  std::int64_t base_filters = 4;
  std::int64_t levels = 3;
  std::vector<std::int64_t> blocks_per_level{1, 2, 4};
  Extent4 crop{32, 32, 24, 8};
  std::int64_t num_classes = 3;
  std::int64_t norm_groups = 8;
  bool conv_bias = true;
  ConvAlgorithm algorithm = ConvAlgorithm::kDirect;

  // 8 filters, 96x96x64x16 crop, blocks 1/2/4.
  static NetConfig paper_4d();
  // One extra level on a 96x96x64 crop, blocks 1/2/4/1.
  static NetConfig paper_3d();
  // Desk scale: 4 filters, 32x32x24x8 crop.
  static NetConfig desk_4d();
  static NetConfig desk_3d();

  LayerGeometry geometry() const;
  // Total downsampling factor per axis.
  Extent4 reduction() const;
  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

template <typename T>
struct ModelParams {
  NetConfig config;
  ParameterSet<T> params;

  template <typename U>
  ModelParams<U> cast_to(bool requires_grad = false) const {
    return ModelParams<U>{config, params.template cast_to<U>(requires_grad)};
  }
};

ModelParams<float> build_model(const NetConfig& config, std::uint64_t seed);

// One row of the layer table: per-sample output size (C, X, Y, Z[, T]).
struct ShapeRow {
  std::string name;
  std::string ops;
  std::int64_t repeat = 1;
  Shape shape;
};

std::string format_shape(const Shape& shape);

// Output sizes of every stage, derived from the config without allocating.
std::vector<ShapeRow> shape_audit(const NetConfig& config);

// Class probabilities (N, num_classes, X, Y, Z, T), channels ordered
// background, cavity, myocardium. `trace` receives one row per stage.
template <typename T>
Tensor<T> forward(Tape<T>* tape, const ModelParams<T>& model, const Tensor<T>& input,
                  std::vector<ShapeRow>* trace = nullptr);

struct TilingPolicy {
  // Zero means "use the model crop" on that axis.
  Extent4 tile{0, 0, 0, 0};
  double overlap = 0.5;
};

std::vector<std::int64_t> tile_starts(std::int64_t extent, std::int64_t tile, double overlap);

// Fused class probabilities for a whole sequence, laid out (C, X, Y, Z, T).
std::vector<float> predict_probabilities(const ModelParams<float>& model, const Volume4DSequence& sequence,
                                         const TilingPolicy& policy = {});

// Argmax labels for every voxel of every frame; tiles overlap and are averaged
// in probability space. Axes shorter than the tile are padded with -1024 HU.
LabelSequence predict_labels(const ModelParams<float>& model, const Volume4DSequence& sequence,
                             const TilingPolicy& policy = {});

LabelSequence argmax_labels(const std::vector<float>& probabilities, const Extent4& dims, std::int64_t classes);

}  // namespace seg4d
