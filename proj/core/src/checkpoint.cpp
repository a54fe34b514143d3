#include "seg4d/checkpoint.hpp"

#include "byte_stream.hpp"
#include "seg4d/config.hpp"

namespace seg4d {

namespace {

constexpr char kMagic[4] = {'C', 'K', 'P', 'T'};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelParams<float>& model) {
  detail::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u16(kCheckpointVersion);
  const std::string config = net_config_to_json(model.config);
  w.u32(static_cast<std::uint32_t>(config.size()));
  w.text(config);
  w.u32(static_cast<std::uint32_t>(model.params.size()));
  for (const auto& [path, t] : model.params.entries()) {
    w.u32(static_cast<std::uint32_t>(path.size()));
    w.text(path);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    const auto values = t.data();
    w.bytes(values.data(), values.size() * sizeof(float));
  }
  return std::move(w.buffer());
}

ModelParams<float> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  if (bytes.size() < 4) throw Error(ErrorCode::kTruncated, "checkpoint shorter than its magic");
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error(ErrorCode::kBadMagic, "not a CKPT file");
  const auto version = r.u16();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kUnsupportedFormat, "checkpoint version " + std::to_string(version));
  }
  const auto config_len = r.u32();
  r.need(config_len);
  const NetConfig config = net_config_from_json(r.text(config_len));
  // The stored config fixes every path and shape; a fresh build is the template.
  ModelParams<float> model = build_model(config, 0);
  const auto count = r.u32();
  if (count != model.params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                                               std::to_string(model.params.size()));
  }
  for (const auto& [path, t] : model.params.entries()) {
    const auto len = r.u32();
    r.need(len);
    const std::string stored = r.text(len);
    if (stored != path) {
      throw Error(ErrorCode::kShapeMismatch, "checkpoint tensor '" + stored + "' where '" + path + "' was expected");
    }
    const auto rank = r.u8();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    if (shape != t.shape()) {
      throw Error(ErrorCode::kShapeMismatch, "checkpoint tensor " + path + " has shape " + to_string(shape) +
                                                 ", expected " + to_string(t.shape()));
    }
    const auto values = t.data();
    const std::size_t n = values.size() * sizeof(float);
    if (r.remaining() < n) throw Error(ErrorCode::kTruncated, "checkpoint payload of " + path + " is cut short");
    r.bytes(values.data(), n);
  }
  if (r.remaining() != 0) {
    throw Error(ErrorCode::kTruncated, "checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return model;
}

void write_checkpoint(const std::filesystem::path& path, const ModelParams<float>& model) {
  detail::write_file(path, encode_checkpoint(model));
}

ModelParams<float> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path));
}

}  // namespace seg4d
