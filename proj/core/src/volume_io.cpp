#include "seg4d/volume_io.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "byte_stream.hpp"

namespace seg4d {

namespace detail {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

}  // namespace detail

namespace {

constexpr char kMagic[4] = {'V', 'O', 'L', '4'};
// Upper bound on voxels per file; larger headers are treated as corrupt.
constexpr std::uint64_t kMaxVoxels = std::uint64_t{1} << 32;

}  // namespace

std::vector<std::uint8_t> encode_volume(const VolumeFile& v) {
  const std::int64_t vox = v.dims[0] * v.dims[1] * v.dims[2] * v.dims[3];
  for (auto d : v.dims) {
    if (d <= 0 || d > UINT32_MAX) throw Error(ErrorCode::kDimensionOverflow, "volume extents must fit in u32");
  }
  detail::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u16(kVolumeVersion);
  w.u8(static_cast<std::uint8_t>(v.dtype));
  w.u8(4);
  for (auto d : v.dims) w.u32(static_cast<std::uint32_t>(d));
  w.f32(v.spacing.x_mm);
  w.f32(v.spacing.y_mm);
  w.f32(v.spacing.z_mm);
  w.f32(v.spacing.frame_ms);
  if (v.dtype == VolumeDtype::kLabel8) {
    if (static_cast<std::int64_t>(v.annotated.size()) != v.dims[3] ||
        static_cast<std::int64_t>(v.labels.size()) != vox) {
      throw Error(ErrorCode::kInvalidArgument, "label volume sizes inconsistent with extents");
    }
    for (bool a : v.annotated) w.u8(a ? 1 : 0);
    w.bytes(v.labels.data(), v.labels.size());
  } else {
    if (static_cast<std::int64_t>(v.intensities.size()) != vox) {
      throw Error(ErrorCode::kInvalidArgument, "intensity volume size inconsistent with extents");
    }
    w.bytes(v.intensities.data(), v.intensities.size() * sizeof(float));
  }
  return std::move(w.buffer());
}

VolumeFile decode_volume(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "VOL4 file");
  char magic[4];
  if (bytes.size() < 4) throw Error(ErrorCode::kTruncated, "VOL4 file shorter than its magic");
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error(ErrorCode::kBadMagic, "not a VOL4 file");
  const auto version = r.u16();
  if (version != kVolumeVersion) {
    throw Error(ErrorCode::kUnsupportedFormat, "VOL4 version " + std::to_string(version));
  }
  VolumeFile v;
  const auto dtype = r.u8();
  if (dtype > 1) throw Error(ErrorCode::kUnsupportedFormat, "VOL4 dtype code " + std::to_string(dtype));
  v.dtype = static_cast<VolumeDtype>(dtype);
  const auto ndim = r.u8();
  if (ndim != 4) throw Error(ErrorCode::kUnsupportedFormat, "VOL4 files must be 4D, got ndim " + std::to_string(ndim));
  std::uint64_t vox = 1;
  for (std::size_t a = 0; a < 4; ++a) {
    const auto d = r.u32();
    if (d == 0) throw Error(ErrorCode::kDimensionOverflow, "VOL4 extent of zero");
    vox *= d;
    if (vox > kMaxVoxels) throw Error(ErrorCode::kDimensionOverflow, "VOL4 extents exceed the voxel limit");
    v.dims[a] = d;
  }
  v.spacing.x_mm = r.f32();
  v.spacing.y_mm = r.f32();
  v.spacing.z_mm = r.f32();
  v.spacing.frame_ms = r.f32();
  if (v.dtype == VolumeDtype::kLabel8) {
    r.need(static_cast<std::size_t>(v.dims[3]));
    v.annotated.resize(static_cast<std::size_t>(v.dims[3]));
    for (std::size_t t = 0; t < v.annotated.size(); ++t) v.annotated[t] = r.u8() != 0;
  }
  const std::uint64_t payload = vox * (v.dtype == VolumeDtype::kLabel8 ? 1 : sizeof(float));
  if (r.remaining() != payload) {
    throw Error(ErrorCode::kTruncated, "VOL4 header declares " + std::to_string(payload) + " payload bytes, file has " +
                                           std::to_string(r.remaining()));
  }
  if (v.dtype == VolumeDtype::kLabel8) {
    v.labels.resize(static_cast<std::size_t>(vox));
    r.bytes(v.labels.data(), v.labels.size());
  } else {
    v.intensities.resize(static_cast<std::size_t>(vox));
    r.bytes(v.intensities.data(), v.intensities.size() * sizeof(float));
  }
  return v;
}

void write_volume(const std::filesystem::path& path, const VolumeFile& volume) {
  detail::write_file(path, encode_volume(volume));
}

VolumeFile read_volume(const std::filesystem::path& path) { return decode_volume(detail::read_file(path)); }

VolumeFile intensity_volume(const Volume4DSequence& sequence) {
  VolumeFile v;
  v.dtype = VolumeDtype::kFloat32;
  v.dims = sequence.dims;
  v.spacing = sequence.spacing;
  v.intensities = sequence.intensities;
  return v;
}

VolumeFile label_volume(const LabelSequence& labels, const Spacing& spacing, const std::vector<bool>& annotated) {
  VolumeFile v;
  v.dtype = VolumeDtype::kLabel8;
  v.dims = labels.dims;
  v.spacing = spacing;
  v.annotated = annotated;
  v.labels = labels.values;
  return v;
}

VolumeFile label_volume(const Volume4DSequence& sequence) {
  return label_volume(sequence.labels, sequence.spacing, sequence.annotated);
}

void write_sequence(const Volume4DSequence& sequence, const std::filesystem::path& intensity_path,
                    const std::filesystem::path& label_path) {
  write_volume(intensity_path, intensity_volume(sequence));
  write_volume(label_path, label_volume(sequence));
}

Volume4DSequence read_sequence(const std::string& id, const std::filesystem::path& intensity_path,
                               const std::filesystem::path& label_path) {
  const auto img = read_volume(intensity_path);
  const auto lbl = read_volume(label_path);
  if (img.dtype != VolumeDtype::kFloat32 || lbl.dtype != VolumeDtype::kLabel8) {
    throw Error(ErrorCode::kUnsupportedFormat, "sequence " + id + ": expected f32 intensities and i8 labels");
  }
  if (img.dims != lbl.dims) {
    throw Error(ErrorCode::kShapeMismatch, "sequence " + id + ": intensity and label extents differ");
  }
  Volume4DSequence s;
  s.id = id;
  s.dims = img.dims;
  s.spacing = img.spacing;
  s.intensities = img.intensities;
  s.labels.dims = lbl.dims;
  s.labels.values = lbl.labels;
  s.annotated = lbl.annotated;
  s.validate();
  return s;
}

}  // namespace seg4d
