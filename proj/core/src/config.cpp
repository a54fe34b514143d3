#include "seg4d/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace seg4d {

using nlohmann::json;

std::string_view to_string(ConvAlgorithm algorithm) {
  switch (algorithm) {
    case ConvAlgorithm::kDirect:
      return "direct";
    case ConvAlgorithm::kTemporal:
      return "temporal";
    case ConvAlgorithm::kNaive3d:
      return "naive3d";
  }
  return "direct";
}

ConvAlgorithm parse_algorithm(std::string_view text) {
  if (text == "direct") return ConvAlgorithm::kDirect;
  if (text == "temporal") return ConvAlgorithm::kTemporal;
  if (text == "naive3d") return ConvAlgorithm::kNaive3d;
  throw Error(ErrorCode::kConfig, "unknown conv algorithm '" + std::string(text) + "'");
}

namespace {

json net_json(const NetConfig& c) {
  return {{"mode", std::string(to_string(c.mode))},
          {"base_filters", c.base_filters},
          {"levels", c.levels},
          {"blocks_per_level", c.blocks_per_level},
          {"crop", c.crop},
          {"num_classes", c.num_classes},
          {"norm_groups", c.norm_groups},
          {"conv_bias", c.conv_bias},
          {"algorithm", std::string(to_string(c.algorithm))}};
}

NetConfig net_from(const json& j) {
  NetConfig c;
  c.mode = parse_net_mode(j.at("mode").get<std::string>());
  c.base_filters = j.at("base_filters").get<std::int64_t>();
  c.levels = j.at("levels").get<std::int64_t>();
  c.blocks_per_level = j.at("blocks_per_level").get<std::vector<std::int64_t>>();
  c.crop = j.at("crop").get<Extent4>();
  c.num_classes = j.at("num_classes").get<std::int64_t>();
  c.norm_groups = j.at("norm_groups").get<std::int64_t>();
  c.conv_bias = j.at("conv_bias").get<bool>();
  c.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  return c;
}

json train_json(const TrainConfig& c) {
  return {{"alpha0", c.alpha0},
          {"total_epochs", c.total_epochs},
          {"batch_size", c.batch_size},
          {"fg_prob", c.fg_prob},
          {"adam_beta1", c.adam.beta1},
          {"adam_beta2", c.adam.beta2},
          {"adam_eps", c.adam.eps},
          {"dice_eps", c.loss.dice_eps},
          {"include_background", c.loss.include_background},
          {"normalize_temporal", c.loss.normalize_temporal},
          {"seed", c.seed}};
}

TrainConfig train_from(const json& j) {
  TrainConfig c;
  c.alpha0 = j.at("alpha0").get<double>();
  c.total_epochs = j.at("total_epochs").get<std::int64_t>();
  c.batch_size = j.at("batch_size").get<std::int64_t>();
  c.fg_prob = j.at("fg_prob").get<double>();
  c.adam.beta1 = j.at("adam_beta1").get<double>();
  c.adam.beta2 = j.at("adam_beta2").get<double>();
  c.adam.eps = j.at("adam_eps").get<double>();
  c.loss.dice_eps = j.at("dice_eps").get<double>();
  c.loss.include_background = j.at("include_background").get<bool>();
  c.loss.normalize_temporal = j.at("normalize_temporal").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json data_json(const DatasetSpec& d) {
  return {{"count", d.count}, {"train_count", d.train_count}, {"dims", d.dims},
          {"ef_min", d.ef_min}, {"ef_max", d.ef_max},           {"seed", d.seed}};
}

DatasetSpec data_from(const json& j) {
  DatasetSpec d;
  d.count = j.at("count").get<std::int64_t>();
  d.train_count = j.at("train_count").get<std::int64_t>();
  d.dims = j.at("dims").get<Extent4>();
  d.ef_min = j.at("ef_min").get<double>();
  d.ef_max = j.at("ef_max").get<double>();
  d.seed = j.at("seed").get<std::uint64_t>();
  return d;
}

json run_json(const RunConfig& c) {
  return {{"net", net_json(c.net)},
          {"train", train_json(c.train)},
          {"data", data_json(c.data)},
          {"manifest", c.manifest},
          {"output_dir", c.output_dir}};
}

// Every key of `patch` must exist in `schema`, recursively through objects.
void check_keys(const json& patch, const json& schema, const std::string& prefix) {
  if (!patch.is_object()) return;
  for (const auto& [key, value] : patch.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!schema.contains(key)) throw Error(ErrorCode::kConfig, "unknown config key '" + path + "'");
    if (schema[key].is_object()) {
      if (!value.is_object()) throw Error(ErrorCode::kConfig, "config key '" + path + "' must be an object");
      check_keys(value, schema[key], path);
    }
  }
}

json override_patch(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorCode::kConfig, "override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  std::string pointer;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) throw Error(ErrorCode::kConfig, "override key '" + key + "' has an empty segment");
    pointer += "/" + part;
  }
  json patch;
  patch[json::json_pointer(pointer)] = value;
  return patch;
}

}  // namespace

std::string net_config_to_json(const NetConfig& config) { return net_json(config).dump(); }

NetConfig net_config_from_json(std::string_view text) {
  try {
    auto c = net_from(json::parse(text));
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("invalid network config: ") + e.what());
  }
}

std::string run_config_to_json(const RunConfig& config) { return run_json(config).dump(2) + "\n"; }

RunConfig resolve_run_config(const std::string& file_text, const std::vector<std::string>& overrides) {
  std::vector<json> patches;
  if (!file_text.empty()) {
    json file = json::parse(file_text, nullptr, false);
    if (file.is_discarded() || !file.is_object()) throw Error(ErrorCode::kConfig, "config file is not a JSON object");
    patches.push_back(std::move(file));
  }
  for (const auto& o : overrides) patches.push_back(override_patch(o));

  const json schema = run_json(RunConfig{});
  std::string mode = "seg4d";
  for (const auto& p : patches) {
    check_keys(p, schema, "");
    if (p.contains("net") && p["net"].contains("mode") && p["net"]["mode"].is_string()) {
      mode = p["net"]["mode"].get<std::string>();
    }
  }
  RunConfig base;
  try {
    base.net = parse_net_mode(mode) == NetMode::kSeg3d ? NetConfig::desk_3d() : NetConfig::desk_4d();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  json merged = run_json(base);
  for (const auto& p : patches) merged.merge_patch(p);

  RunConfig out;
  try {
    out.net = net_from(merged.at("net"));
    out.train = train_from(merged.at("train"));
    out.data = data_from(merged.at("data"));
    out.manifest = merged.at("manifest").get<std::string>();
    out.output_dir = merged.at("output_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("invalid config value: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  out.net.validate();
  out.train.validate();
  return out;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::string text;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kMissingFile, "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return resolve_run_config(text, overrides);
}

}  // namespace seg4d
