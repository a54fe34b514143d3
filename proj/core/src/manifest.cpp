#include "seg4d/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "seg4d/volume_io.hpp"

namespace seg4d {

using nlohmann::json;

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.contains("sequences") || !doc["sequences"].is_array()) {
    throw Error(ErrorCode::kConfig, "manifest needs a 'sequences' array");
  }
  std::vector<ManifestEntry> out;
  std::set<std::string> seen;
  for (const auto& item : doc["sequences"]) {
    ManifestEntry e;
    try {
      e.id = item.at("id").get<std::string>();
      e.intensity_path = item.at("intensity_path").get<std::string>();
      e.label_path = item.at("label_path").get<std::string>();
      e.split = item.at("split").get<std::string>();
      e.annotated_frames = item.at("annotated_frames").get<std::vector<std::int64_t>>();
      if (item.contains("analytic_ef") && !item["analytic_ef"].is_null()) e.analytic_ef = item["analytic_ef"].get<double>();
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::kConfig, std::string("malformed manifest entry: ") + ex.what());
    }
    if (e.split != "train" && e.split != "validation") {
      throw Error(ErrorCode::kConfig, "sequence " + e.id + ": split must be 'train' or 'validation'");
    }
    if (!seen.insert(e.id).second) throw Error(ErrorCode::kDuplicateId, "sequence id '" + e.id + "' listed twice");
    out.push_back(std::move(e));
  }
  return out;
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  json seqs = json::array();
  for (const auto& e : entries) {
    json item = {{"id", e.id},
                 {"intensity_path", e.intensity_path},
                 {"label_path", e.label_path},
                 {"split", e.split},
                 {"annotated_frames", e.annotated_frames}};
    if (e.analytic_ef) item["analytic_ef"] = *e.analytic_ef;
    seqs.push_back(std::move(item));
  }
  return json{{"sequences", seqs}}.dump(2) + "\n";
}

Dataset load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const auto entries = parse_manifest(ss.str());
  const auto base = path.parent_path();
  Dataset ds;
  for (const auto& e : entries) {
    const auto img = base / e.intensity_path;
    const auto lbl = base / e.label_path;
    for (const auto& p : {img, lbl}) {
      if (!std::filesystem::exists(p)) {
        throw Error(ErrorCode::kMissingFile, "sequence " + e.id + ": missing " + p.string());
      }
    }
    auto seq = read_sequence(e.id, img, lbl);
    if (seq.annotated_frames() != e.annotated_frames) {
      throw Error(ErrorCode::kInvalidArgument, "sequence " + e.id + ": annotated frames differ between manifest and label file");
    }
    seq.analytic_ef = e.analytic_ef;
    (e.split == "train" ? ds.train : ds.validation).push_back(std::move(seq));
  }
  return ds;
}

std::filesystem::path write_dataset(const Dataset& dataset, const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + directory.string() + ": " + ec.message());
  std::vector<ManifestEntry> entries;
  auto emit = [&](const Volume4DSequence& s, const char* split) {
    ManifestEntry e{s.id, s.id + "_image.vol4", s.id + "_labels.vol4", split, s.annotated_frames(), s.analytic_ef};
    write_sequence(s, directory / e.intensity_path, directory / e.label_path);
    entries.push_back(std::move(e));
  };
  for (const auto& s : dataset.train) emit(s, "train");
  for (const auto& s : dataset.validation) emit(s, "validation");
  const auto manifest = directory / "manifest.json";
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + manifest.string());
  out << format_manifest(entries);
  return manifest;
}

}  // namespace seg4d
