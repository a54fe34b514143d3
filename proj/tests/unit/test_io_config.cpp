#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "seg4d/checkpoint.hpp"
#include "seg4d/config.hpp"

using namespace seg4d;

namespace {

NetConfig tiny_net() {
  NetConfig c = NetConfig::desk_4d();
  c.crop = {8, 8, 8, 4};
  c.blocks_per_level = {1, 1, 1};
  return c;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  auto model = build_model(tiny_net(), 21);
  auto back = decode_checkpoint(encode_checkpoint(model));
  EXPECT_EQ(back.config, model.config);
  ASSERT_EQ(back.params.size(), model.params.size());
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const auto& [pa, ta] = model.params.entries()[i];
    const auto& [pb, tb] = back.params.entries()[i];
    EXPECT_EQ(pa, pb);
    EXPECT_EQ(ta.shape(), tb.shape());
    EXPECT_EQ(std::memcmp(ta.data().data(), tb.data().data(), ta.data().size() * sizeof(float)), 0);
  }
}

TEST(Checkpoint, FileRoundTripAndPredictionsAgree) {
  auto dir = std::filesystem::temp_directory_path() / "seg4d_unit_ckpt";
  std::filesystem::create_directories(dir);
  auto model = build_model(tiny_net(), 22);
  write_checkpoint(dir / "m.ckpt", model);
  auto back = read_checkpoint(dir / "m.ckpt");
  Tensor<float> x = Tensor<float>::full({1, 1, 8, 8, 8, 4}, 0.25f);
  auto a = forward<float>(nullptr, model, x);
  auto b = forward<float>(nullptr, back, x);
  EXPECT_EQ(a.data().size(), b.data().size());
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  EXPECT_EQ(code_of([&] { read_checkpoint(dir / "absent.ckpt"); }), ErrorCode::kMissingFile);
}

TEST(Checkpoint, CorruptionErrors) {
  auto bytes = encode_checkpoint(build_model(tiny_net(), 23));
  auto bad = bytes;
  bad[1] = 'Z';
  EXPECT_EQ(code_of([&] { decode_checkpoint(bad); }), ErrorCode::kBadMagic);
  auto ver = bytes;
  ver[4] = 7;
  EXPECT_EQ(code_of([&] { decode_checkpoint(ver); }), ErrorCode::kUnsupportedFormat);
  auto cut = bytes;
  cut.resize(cut.size() / 2);
  EXPECT_EQ(code_of([&] { decode_checkpoint(cut); }), ErrorCode::kTruncated);
  auto extra = bytes;
  extra.push_back(1);
  EXPECT_EQ(code_of([&] { decode_checkpoint(extra); }), ErrorCode::kTruncated);
}

TEST(Checkpoint, ConfigMismatchIsDetected) {
  auto a = build_model(tiny_net(), 24);
  auto other = tiny_net();
  other.base_filters = 8;
  auto b = build_model(other, 24);
  // Splice b's config into a's tensors: the stored shapes no longer fit.
  a.config = other;
  EXPECT_EQ(code_of([&] { decode_checkpoint(encode_checkpoint(a)); }), ErrorCode::kShapeMismatch);
  (void)b;
}

TEST(Config, DefaultsAreDesk4d) {
  auto c = resolve_run_config("", {});
  EXPECT_EQ(c.net, NetConfig::desk_4d());
  EXPECT_EQ(c.train, TrainConfig{});
  EXPECT_EQ(c.data.count, 10);
}

TEST(Config, PrecedenceCliOverFileOverDefaults) {
  const std::string file = R"({"train": {"total_epochs": 12, "alpha0": 0.002}, "net": {"base_filters": 8}})";
  auto c = resolve_run_config(file, {"train.total_epochs=5"});
  EXPECT_EQ(c.train.total_epochs, 5);
  EXPECT_DOUBLE_EQ(c.train.alpha0, 0.002);
  EXPECT_EQ(c.net.base_filters, 8);
  EXPECT_EQ(c.net.levels, 3);
  auto d = resolve_run_config(file, {"net.algorithm=temporal", "output_dir=/tmp/x", "net.crop=[16,16,16,4]"});
  EXPECT_EQ(d.net.algorithm, ConvAlgorithm::kTemporal);
  EXPECT_EQ(d.output_dir, "/tmp/x");
  EXPECT_EQ(d.net.crop, (Extent4{16, 16, 16, 4}));
}

TEST(Config, Seg3dModeSwitchesNetworkDefaults) {
  auto c = resolve_run_config("", {"net.mode=seg3d"});
  EXPECT_EQ(c.net, NetConfig::desk_3d());
  auto d = resolve_run_config(R"({"net": {"mode": "seg3d", "base_filters": 8}})", {});
  EXPECT_EQ(d.net.levels, 4);
  EXPECT_EQ(d.net.base_filters, 8);
}

TEST(Config, ErrorsAreConfigErrors) {
  EXPECT_EQ(code_of([] { resolve_run_config("", {"train.epochs=3"}); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { resolve_run_config(R"({"bogus": 1})", {}); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { resolve_run_config("[1, 2]", {}); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { resolve_run_config("", {"novalue"}); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { resolve_run_config("", {"train.total_epochs=many"}); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { resolve_run_config("", {"net.algorithm=fft"}); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { resolve_run_config("", {"net.mode=seg5d"}); }), ErrorCode::kConfig);
  EXPECT_THROW(resolve_run_config("", {"train.total_epochs=0"}), Error);
}

TEST(Config, JsonRoundTrip) {
  auto c = resolve_run_config("", {"net.mode=seg3d", "train.seed=99", "data.count=4", "data.train_count=3"});
  auto again = resolve_run_config(run_config_to_json(c), {});
  EXPECT_EQ(again.net, c.net);
  EXPECT_EQ(again.train, c.train);
  EXPECT_EQ(again.data.count, 4);
  EXPECT_EQ(net_config_from_json(net_config_to_json(NetConfig::paper_4d())), NetConfig::paper_4d());
  EXPECT_EQ(code_of([] { net_config_from_json("{}"); }), ErrorCode::kConfig);
}
