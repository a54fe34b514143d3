#include "seg4d/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "seg4d/crop.hpp"
#include "seg4d/phantom.hpp"

namespace seg4d {

void TrainConfig::validate() const {
  if (!(alpha0 > 0.0)) throw Error(ErrorCode::kConfig, "train.alpha0 must be positive");
  if (total_epochs <= 0) throw Error(ErrorCode::kConfig, "train.total_epochs must be positive");
  if (batch_size != 1) throw Error(ErrorCode::kConfig, "train.batch_size must be 1");
  if (!(fg_prob > 0.0 && fg_prob <= 1.0)) throw Error(ErrorCode::kConfig, "train.fg_prob must lie in (0, 1]");
}

std::string format_epoch_header() { return "epoch\tlr\tdice_term\ttemporal_term\ttotal"; }

std::string format_epoch_row(const EpochLog& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%lld\t%.6e\t%.6f\t%.6f\t%.6f", static_cast<long long>(r.epoch), r.lr, r.dice_term,
                r.temporal_term, r.total);
  return buf;
}

std::vector<EpochLog> train_model(ModelParams<float>& model, const std::vector<Volume4DSequence>& sequences,
                                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  model.config.validate();
  if (sequences.empty()) throw Error(ErrorCode::kInvalidArgument, "training set is empty");
  std::vector<CropSampler> samplers;
  samplers.reserve(sequences.size());
  for (const auto& s : sequences) samplers.emplace_back(s);

  model.params.set_requires_grad(true);
  Adam<float> adam(model.params, config.adam);
  std::mt19937_64 rng(derive_seed(config.seed, "train"));
  std::vector<std::size_t> order(sequences.size());
  std::vector<EpochLog> log;

  for (std::int64_t epoch = 0; epoch < config.total_epochs; ++epoch) {
    EpochLog row;
    row.epoch = epoch;
    row.lr = lr_schedule(epoch, config.alpha0, config.total_epochs);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) {
      const auto crop = samplers[idx].sample(model.config.crop, config.fg_prob, rng);
      model.params.zero_grad();
      Tape<float> tape;
      const auto probs = forward(&tape, model, crop.input);
      const auto loss = total_loss(&tape, probs, crop.onehot, crop.labeled_mask, config.loss);
      if (!std::isfinite(loss.breakdown.total)) {
        throw Error(ErrorCode::kNonFinite, "loss became non-finite at epoch " + std::to_string(epoch) + " on " +
                                               sequences[idx].id);
      }
      tape.backward(loss.total);
      adam.step(row.lr);
      row.dice_term += loss.breakdown.dice_term;
      row.temporal_term += loss.breakdown.temporal_term;
      row.total += loss.breakdown.total;
    }
    const double n = static_cast<double>(sequences.size());
    row.dice_term /= n;
    row.temporal_term /= n;
    row.total /= n;
    log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  model.params.set_requires_grad(false);
  model.params.zero_grad();
  return log;
}

TrainResult train(const std::vector<Volume4DSequence>& sequences, const NetConfig& net, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  TrainResult r{build_model(net, derive_seed(config.seed, "init")), {}};
  r.log = train_model(r.model, sequences, config, on_epoch);
  return r;
}

}  // namespace seg4d
