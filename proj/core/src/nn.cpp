#include "seg4d/nn.hpp"

#include <cmath>

namespace seg4d {

LayerGeometry LayerGeometry::seg4d() { return LayerGeometry{}; }

LayerGeometry LayerGeometry::seg3d() {
  LayerGeometry g;
  g.kernel = {3, 3, 3, 1};
  g.down_stride = {2, 2, 2, 1};
  g.up_factor = {2, 2, 2, 1};
  return g;
}

void ParamInitializer::add_conv(ParameterSet<float>& set, const std::string& prefix, std::int64_t in_channels,
                                std::int64_t out_channels, const Extent4& kernel, bool bias, double gain) {
  const std::int64_t fan_in = in_channels * kernel[0] * kernel[1] * kernel[2] * kernel[3];
  std::normal_distribution<double> normal(0.0, gain * std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor<float> w({out_channels, in_channels, kernel[0], kernel[1], kernel[2], kernel[3]}, true);
  for (auto& v : w.data()) v = static_cast<float>(normal(rng_));
  set.add(prefix + ".weight", w);
  if (bias) set.add(prefix + ".bias", Tensor<float>({out_channels}, true));
}

void ParamInitializer::add_norm(ParameterSet<float>& set, const std::string& prefix, std::int64_t channels) {
  set.add(prefix + ".gamma", Tensor<float>::full({channels}, 1.0f, true));
  set.add(prefix + ".beta", Tensor<float>({channels}, true));
}

void ParamInitializer::add_res_block(ParameterSet<float>& set, const std::string& prefix, std::int64_t channels,
                                     const LayerGeometry& geometry) {
  add_norm(set, prefix + ".gn1", channels);
  add_conv(set, prefix + ".conv1", channels, channels, geometry.kernel, geometry.conv_bias);
  add_norm(set, prefix + ".gn2", channels);
  add_conv(set, prefix + ".conv2", channels, channels, geometry.kernel, geometry.conv_bias);
}

template <typename T>
Tensor<T> res_block(Tape<T>* tape, const Tensor<T>& x, const ParameterSet<T>& params, const std::string& prefix,
                    const LayerGeometry& geometry) {
  const auto& w1 = params.at(prefix + ".conv1.weight");
  const auto& w2 = params.at(prefix + ".conv2.weight");
  if (x.rank() != 6 || w1.dim(0) != x.dim(1) || w1.dim(1) != x.dim(1) || w2.dim(0) != x.dim(1)) {
    throw Error(ErrorCode::kShapeMismatch, "res_block " + prefix + ": input " + to_string(x.shape()) +
                                               " does not match block channels");
  }
  const Conv4dOptions conv{{1, 1, 1, 1}, geometry.algorithm};
  auto h = group_norm(tape, x, params.at(prefix + ".gn1.gamma"), params.at(prefix + ".gn1.beta"), geometry.norm);
  h = relu(tape, h);
  h = conv4d(tape, h, w1, optional_param(params, prefix + ".conv1.bias"), conv);
  h = group_norm(tape, h, params.at(prefix + ".gn2.gamma"), params.at(prefix + ".gn2.beta"), geometry.norm);
  h = relu(tape, h);
  h = conv4d(tape, h, w2, optional_param(params, prefix + ".conv2.bias"), conv);
  return add(tape, h, x);
}

template <typename T>
Tensor<T> down_conv(Tape<T>* tape, const Tensor<T>& x, const ParameterSet<T>& params, const std::string& prefix,
                    const LayerGeometry& geometry) {
  for (std::size_t a = 0; a < 4; ++a) {
    if (geometry.down_stride[a] > 1 && x.dim(a + 2) <= 1) {
      throw Error(ErrorCode::kInvalidArgument,
                  "down_conv " + prefix + ": cannot downsample extent 1 in " + to_string(x.shape()));
    }
  }
  return conv4d(tape, x, params.at(prefix + ".weight"), optional_param(params, prefix + ".bias"),
                Conv4dOptions{geometry.down_stride, geometry.algorithm});
}

template <typename T>
Tensor<T> decoder_up(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& skip, const ParameterSet<T>& params,
                     const std::string& prefix, const LayerGeometry& geometry) {
  auto h = conv_pointwise(tape, x, params.at(prefix + ".weight"), optional_param(params, prefix + ".bias"));
  const Shape up_shape = upsample_output_shape(h.shape(), geometry.up_factor);
  if (up_shape != skip.shape()) {
    throw Error(ErrorCode::kShapeMismatch, "decoder_up " + prefix + ": upsampled " + to_string(up_shape) +
                                               " vs skip " + to_string(skip.shape()));
  }
  h = upsample_nearest(tape, h, geometry.up_factor);
  return add(tape, h, skip);
}

#define SEG4D_INSTANTIATE_NN(T)                                                                                 \
  template Tensor<T> res_block<T>(Tape<T>*, const Tensor<T>&, const ParameterSet<T>&, const std::string&,      \
                                  const LayerGeometry&);                                                        \
  template Tensor<T> down_conv<T>(Tape<T>*, const Tensor<T>&, const ParameterSet<T>&, const std::string&,      \
                                  const LayerGeometry&);                                                        \
  template Tensor<T> decoder_up<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const ParameterSet<T>&,       \
                                   const std::string&, const LayerGeometry&);

SEG4D_INSTANTIATE_NN(float)
SEG4D_INSTANTIATE_NN(double)

#undef SEG4D_INSTANTIATE_NN

}  // namespace seg4d
