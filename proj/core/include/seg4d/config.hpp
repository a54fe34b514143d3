#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "seg4d/model.hpp"
#include "seg4d/phantom.hpp"
#include "seg4d/train.hpp"

namespace seg4d {

std::string_view to_string(ConvAlgorithm algorithm);
ConvAlgorithm parse_algorithm(std::string_view text);

// Everything a command needs, resolved before any work starts.
struct RunConfig {
  NetConfig net{};
  TrainConfig train{};
  DatasetSpec data{};
  std::string manifest;
  std::string output_dir = "run";
};

// Compact JSON text for the network section; also stored in checkpoints.
std::string net_config_to_json(const NetConfig& config);
NetConfig net_config_from_json(std::string_view text);

std::string run_config_to_json(const RunConfig& config);

// Defaults, then the JSON config file (if any), then `key=value` overrides with
// dotted keys such as "train.total_epochs=50". Values parse as JSON when they
// can and as strings otherwise. Setting net.mode=seg3d switches the network
// defaults to the 3D baseline before the other keys apply. Unknown keys and
// invalid values throw kConfig.
RunConfig resolve_run_config(const std::string& file_text, const std::vector<std::string>& overrides);
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

}  // namespace seg4d
