#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "seg4d/phantom.hpp"

namespace seg4d {

// One study in a dataset manifest. Paths are relative to the manifest file.
struct ManifestEntry {
  std::string id;
  std::string intensity_path;
  std::string label_path;
  std::string split;  // "train" or "validation"
  std::vector<std::int64_t> annotated_frames;
  std::optional<double> analytic_ef;
};

// JSON document {"sequences": [ {id, intensity_path, label_path, split,
// annotated_frames, analytic_ef?}, ... ]}.
std::vector<ManifestEntry> parse_manifest(const std::string& text);
std::string format_manifest(const std::vector<ManifestEntry>& entries);

// Loads every listed study. Throws kDuplicateId, kMissingFile, or
// kInvalidArgument when the label file's annotation flags disagree with the
// manifest.
Dataset load_manifest(const std::filesystem::path& path);

// Writes VOL4 files plus manifest.json into `directory`; returns the manifest path.
std::filesystem::path write_dataset(const Dataset& dataset, const std::filesystem::path& directory);

}  // namespace seg4d
