#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "seg4d/loss.hpp"
#include "seg4d/model.hpp"
#include "seg4d/optim.hpp"

namespace seg4d {

struct TrainConfig {
  double alpha0 = 1e-3;
  std::int64_t total_epochs = 80;
  std::int64_t batch_size = 1;
  double fg_prob = 0.6;
  AdamOptions adam{};
  LossOptions loss{};
  std::uint64_t seed = 7;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Mean loss terms over the steps of one epoch.
struct EpochLog {
  std::int64_t epoch = 0;
  double lr = 0.0;
  double dice_term = 0.0;
  double temporal_term = 0.0;
  double total = 0.0;
};

std::string format_epoch_header();
std::string format_epoch_row(const EpochLog& row);

struct TrainResult {
  ModelParams<float> model;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Each epoch visits every training sequence once in a freshly shuffled order
// and takes one Adam step on one crop per sequence. Throws kNonFinite when the
// loss stops being finite.
TrainResult train(const std::vector<Volume4DSequence>& sequences, const NetConfig& net, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Same loop starting from existing parameters, which are updated in place.
std::vector<EpochLog> train_model(ModelParams<float>& model, const std::vector<Volume4DSequence>& sequences,
                                  const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace seg4d
