// seg4d: dataset generation, training, evaluation, prediction and the
// convolution benchmark on synthetic cardiac phantoms.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "seg4d/checkpoint.hpp"
#include "seg4d/config.hpp"
#include "seg4d/conv_kernels.hpp"
#include "seg4d/manifest.hpp"
#include "seg4d/metrics.hpp"
#include "seg4d/ops.hpp"
#include "seg4d/volume_io.hpp"

namespace fs = std::filesystem;
using namespace seg4d;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
      return kUsage;
    case ErrorCode::kNonFinite:
      return kNumeric;
    default:
      return kData;
  }
}

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON config file");
  cmd->add_option("--set", c.overrides, "Override a config key, e.g. --set train.total_epochs=50")
      ->type_name("KEY=VALUE");
}

RunConfig resolve(const Common& c) { return load_run_config(c.config_path, c.overrides); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

void prepare_output(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + cfg.output_dir + ": " + ec.message());
  write_text(fs::path(cfg.output_dir) / "config.json", run_config_to_json(cfg));
}

Dataset load_or_generate(const RunConfig& cfg) {
  if (!cfg.manifest.empty()) return load_manifest(cfg.manifest);
  return generate_dataset(cfg.data);
}

int cmd_gen(const Common& common) {
  const auto cfg = resolve(common);
  prepare_output(cfg);
  const auto manifest = write_dataset(generate_dataset(cfg.data), cfg.output_dir);
  std::printf("wrote %lld sequences, manifest %s\n", static_cast<long long>(cfg.data.count), manifest.c_str());
  return kOk;
}

int cmd_train(const Common& common) {
  const auto cfg = resolve(common);
  prepare_output(cfg);
  const auto data = load_or_generate(cfg);
  const fs::path out(cfg.output_dir);
  std::ofstream log(out / "train_log.tsv", std::ios::trunc);
  log << format_epoch_header() << "\n";
  std::cout << format_epoch_header() << "\n";
  auto result = train(data.train, cfg.net, cfg.train, [&](const EpochLog& e) {
    log << format_epoch_row(e) << "\n" << std::flush;
    std::cout << format_epoch_row(e) << "\n" << std::flush;
  });
  write_checkpoint(out / "model.ckpt", result.model);
  std::printf("checkpoint %s\n", (out / "model.ckpt").c_str());
  return kOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string split = "validation";
  std::string report;
  bool oracle = false;
  bool per_class = false;
};

int cmd_eval(const EvalArgs& a) {
  if (a.checkpoint.empty() && !a.oracle) throw Error(ErrorCode::kConfig, "eval needs --checkpoint or --oracle");
  const auto data = load_manifest(a.manifest);
  const auto& seqs = a.split == "train" ? data.train : data.validation;
  LabelPredictor predict;
  ModelParams<float> model;
  if (a.oracle) {
    predict = [](const Volume4DSequence& s) { return s.labels; };
  } else {
    model = read_checkpoint(a.checkpoint);
    predict = [&model](const Volume4DSequence& s) { return predict_labels(model, s); };
  }
  const auto report = evaluate(predict, seqs, {.per_class = a.per_class, .normalize = true});
  const auto text = format_report(report);
  std::cout << text;
  if (!a.report.empty()) write_text(a.report, text);
  return kOk;
}

int cmd_predict(const std::string& checkpoint, const std::string& image, const std::string& out) {
  const auto model = read_checkpoint(checkpoint);
  const auto vol = read_volume(image);
  if (vol.dtype != VolumeDtype::kFloat32) throw Error(ErrorCode::kUnsupportedFormat, image + " is not an intensity volume");
  Volume4DSequence seq;
  seq.id = fs::path(image).stem().string();
  seq.dims = vol.dims;
  seq.spacing = vol.spacing;
  seq.intensities = vol.intensities;
  seq.labels = LabelSequence(vol.dims);
  seq.annotated.assign(static_cast<std::size_t>(vol.dims[3]), false);
  const auto labels = predict_labels(model, seq);
  write_volume(out, label_volume(labels, vol.spacing, std::vector<bool>(static_cast<std::size_t>(vol.dims[3]), true)));
  std::printf("wrote %s\n", out.c_str());
  return kOk;
}

int cmd_info(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  char magic[4] = {};
  probe.read(magic, 4);
  if (std::string(magic, 4) == "CKPT") {
    const auto model = read_checkpoint(path);
    std::printf("checkpoint %s\nconfig %s\nparameters %zu tensors, %lld values\n", path.c_str(),
                net_config_to_json(model.config).c_str(), model.params.size(),
                static_cast<long long>(model.params.element_count()));
    return kOk;
  }
  const auto v = read_volume(path);
  std::printf("volume %s\ndtype %s\nextent %lldx%lldx%lldx%lld\nspacing %g %g %g mm, %g ms\n", path.c_str(),
              v.dtype == VolumeDtype::kLabel8 ? "label8" : "float32", static_cast<long long>(v.dims[0]),
              static_cast<long long>(v.dims[1]), static_cast<long long>(v.dims[2]), static_cast<long long>(v.dims[3]),
              v.spacing.x_mm, v.spacing.y_mm, v.spacing.z_mm, v.spacing.frame_ms);
  if (v.dtype == VolumeDtype::kLabel8) {
    std::int64_t annotated = 0, counts[3] = {0, 0, 0};
    for (bool a : v.annotated) annotated += a;
    for (auto l : v.labels) counts[std::min<int>(l, 2)]++;
    std::printf("annotated frames %lld\nvoxels background %lld cavity %lld myocardium %lld\n",
                static_cast<long long>(annotated), static_cast<long long>(counts[0]), static_cast<long long>(counts[1]),
                static_cast<long long>(counts[2]));
  }
  return kOk;
}

struct BenchArgs {
  std::vector<std::int64_t> extent{16, 16, 12, 8};
  std::int64_t channels_in = 4;
  std::int64_t channels_out = 4;
  std::int64_t stride = 1;
  int repetitions = 5;
};

template <typename T>
Tensor<T> bench_tensor(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

int cmd_bench(const BenchArgs& a) {
  if (a.repetitions <= 0) throw Error(ErrorCode::kConfig, "--repetitions must be positive");
  if (a.extent.size() != 4) throw Error(ErrorCode::kConfig, "--extent needs four values X Y Z T");
  const Shape xs{1, a.channels_in, a.extent[0], a.extent[1], a.extent[2], a.extent[3]};
  const Shape ws{a.channels_out, a.channels_in, 3, 3, 3, 3};
  const Extent4 stride{a.stride, a.stride, a.stride, a.stride};
  const ConvAlgorithm algos[3] = {ConvAlgorithm::kNaive3d, ConvAlgorithm::kTemporal, ConvAlgorithm::kDirect};

  // Agreement gate in double precision before anything is timed.
  {
    const auto x = bench_tensor<double>(xs, 1), w = bench_tensor<double>(ws, 2), b = bench_tensor<double>({ws[0]}, 3);
    const auto ref = conv4d<double>(nullptr, x, w, b, {stride, ConvAlgorithm::kDirect});
    for (auto algo : algos) {
      const auto y = conv4d<double>(nullptr, x, w, b, {stride, algo});
      double diff = 0.0;
      for (std::size_t i = 0; i < y.data().size(); ++i) diff = std::max(diff, std::abs(y.data()[i] - ref.data()[i]));
      if (diff > 1e-5) {
        throw Error(ErrorCode::kNonFinite, std::string(to_string(algo)) + " disagrees with direct by " + std::to_string(diff));
      }
    }
  }

  const auto x = bench_tensor<float>(xs, 1), w = bench_tensor<float>(ws, 2), b = bench_tensor<float>({ws[0]}, 3);
  const double macs = static_cast<double>(conv4d<float>(nullptr, x, w, b, {stride, ConvAlgorithm::kDirect}).numel()) *
                      static_cast<double>(a.channels_in * 81);
  std::printf("input %s  weight %s  stride %lld  repetitions %d\n", to_string(xs).c_str(), to_string(ws).c_str(),
              static_cast<long long>(a.stride), a.repetitions);
  std::printf("%-10s %12s %12s %10s\n", "kernel", "best_ms", "mean_ms", "GMAC/s");
  double best_ms[3] = {0, 0, 0};
  for (int k = 0; k < 3; ++k) {
    double best = 1e300, total = 0.0;
    for (int r = 0; r < a.repetitions; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      auto y = conv4d<float>(nullptr, x, w, b, {stride, algos[k]});
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      best = std::min(best, ms);
      total += ms;
    }
    best_ms[k] = best;
    std::printf("%-10s %12.3f %12.3f %10.3f\n", std::string(to_string(algos[k])).c_str(), best, total / a.repetitions,
                macs / (best * 1e6));
  }
  std::printf("temporal/naive3d time ratio %.3f\n", best_ms[1] / best_ms[0]);
  return kOk;
}

int paper_shapes() {
  for (const auto& cfg : {NetConfig::paper_4d(), NetConfig::paper_3d()}) {
    build_model(cfg, 0);
    std::printf("%s network, crop %lldx%lldx%lldx%lld\n", std::string(to_string(cfg.mode)).c_str(),
                static_cast<long long>(cfg.crop[0]), static_cast<long long>(cfg.crop[1]),
                static_cast<long long>(cfg.crop[2]), static_cast<long long>(cfg.crop[3]));
    std::printf("%-16s %-34s %6s  %s\n", "name", "ops", "repeat", "output");
    for (const auto& row : shape_audit(cfg)) {
      std::printf("%-16s %-34s %6lld  %s\n", row.name.c_str(), row.ops.c_str(), static_cast<long long>(row.repeat),
                  format_shape(row.shape).c_str());
    }
    std::printf("\n");
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"4D cardiac segmentation on synthetic phantoms"};
  app.require_subcommand(0, 1);
  bool shapes = false;
  app.add_flag("--paper-shapes", shapes, "Build the full-size 96x96x64x16 networks and print their layer shapes");

  Common gen_opts, train_opts;
  auto* gen = app.add_subcommand("gen", "Generate a phantom dataset and manifest into output_dir");
  add_common(gen, gen_opts);
  auto* trn = app.add_subcommand("train", "Train a network; writes model.ckpt and train_log.tsv into output_dir");
  add_common(trn, train_opts);

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
  ev->add_option("--checkpoint", eval_args.checkpoint, "CKPT file");
  ev->add_option("--manifest", eval_args.manifest, "Dataset manifest")->required();
  ev->add_option("--split", eval_args.split, "train or validation")->check(CLI::IsMember({"train", "validation"}));
  ev->add_option("--report", eval_args.report, "Also write the report here");
  ev->add_flag("--oracle", eval_args.oracle, "Use the ground-truth labels as the prediction");
  ev->add_flag("--per-class", eval_args.per_class, "Average temporal_l2 per class instead of pooling");

  std::string ckpt, image, out;
  auto* pred = app.add_subcommand("predict", "Segment every frame of an intensity volume");
  pred->add_option("--checkpoint", ckpt, "CKPT file")->required();
  pred->add_option("--image", image, "VOL4 intensity volume")->required();
  pred->add_option("--out", out, "Output VOL4 label volume")->required();

  std::string info_path;
  auto* info = app.add_subcommand("info", "Print the header of a VOL4 volume or CKPT checkpoint");
  info->add_option("file", info_path, "File to inspect")->required();

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Time the three conv4d kernels");
  bench->add_option("--extent", bench_args.extent, "Input extent X Y Z T")->expected(4);
  bench->add_option("--channels-in", bench_args.channels_in);
  bench->add_option("--channels-out", bench_args.channels_out);
  bench->add_option("--stride", bench_args.stride)->check(CLI::Range(1, 2));
  bench->add_option("--repetitions", bench_args.repetitions);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  const std::string stage = app.get_subcommands().empty() ? "seg4d" : app.get_subcommands().front()->get_name();
  try {
    if (shapes) return paper_shapes();
    if (*gen) return cmd_gen(gen_opts);
    if (*trn) return cmd_train(train_opts);
    if (*ev) return cmd_eval(eval_args);
    if (*pred) return cmd_predict(ckpt, image, out);
    if (*bench) return cmd_bench(bench_args);
    if (*info) return cmd_info(info_path);
    std::cerr << app.help();
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "seg4d " << stage << ": " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "seg4d " << stage << ": " << e.what() << "\n";
    return kData;
  }
}
