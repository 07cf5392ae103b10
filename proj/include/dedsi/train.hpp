#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dedsi/beam.hpp"
#include "dedsi/model.hpp"

namespace dedsi {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  std::size_t early_stop_window = 20;
  double early_stop_delta = 0.01;
  std::uint64_t seed = 1;

  void validate() const {
    if (batch_size == 0) throw Error("TrainConfig: batch_size must be >= 1");
    if (max_epochs == 0) throw Error("TrainConfig: max_epochs must be >= 1");
    if (early_stop_window == 0) throw Error("TrainConfig: early_stop_window must be >= 1");
    if (!(early_stop_delta >= 0.0)) throw Error("TrainConfig: early_stop_delta must be >= 0");
  }
};

inline Json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"early_stop_window", c.early_stop_window},
          {"early_stop_delta", c.early_stop_delta},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const Json& j, TrainConfig c = {}) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.early_stop_window = j.value("early_stop_window", c.early_stop_window);
  c.early_stop_delta = j.value("early_stop_delta", c.early_stop_delta);
  c.seed = j.value("seed", c.seed);
  return c;
}

/// Stops once `window` consecutive epochs have passed without any epoch
/// beating the best accuracy seen before it by at least `delta`.
class EarlyStopper {
 public:
  EarlyStopper(std::size_t window, double delta) : window_(window), delta_(delta) {}

  /// Records one epoch; true means stop now.
  bool update(double accuracy) {
    ++epoch_;
    const bool improved = epoch_ == 1 || (delta_ > 0.0 ? accuracy - best_ >= delta_ : accuracy > best_);
    if (improved) last_improvement_ = epoch_;
    if (epoch_ == 1 || accuracy > best_) {
      best_ = accuracy;
      best_epoch_ = epoch_;
    }
    return epoch_ - last_improvement_ >= window_;
  }

  std::size_t epoch() const { return epoch_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  std::size_t window_;
  double delta_;
  std::size_t epoch_ = 0;
  std::size_t last_improvement_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_top1 = 0.0;
};

template <typename M>
struct Checkpoint {
  M model;
  std::size_t epoch = 0;
  double val_accuracy = 0.0;
  std::string config_hash;
};

template <typename M>
struct TrainResult {
  Checkpoint<M> best;
  std::vector<EpochMetrics> history;
  bool early_stopped = false;
};

inline std::string config_hash(const Json& j) { return hex64(fnv1a64(j.dump())); }

/// Epoch loop over pre-encoded examples. `evaluate(model)` yields the
/// validation accuracy used for early stopping and best-model selection.
template <TrainableModel M, typename Evaluate>
TrainResult<M> train_epochs(M& model, std::span<const Example> train, Evaluate&& evaluate, const TrainConfig& cfg,
                            const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  cfg.validate();
  if (train.empty()) throw Error("train_epochs: empty training split");
  Rng rng(derive_seed(cfg.seed, "train_epochs/shuffle"));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  EarlyStopper stopper(cfg.early_stop_window, cfg.early_stop_delta);
  TrainResult<M> result{Checkpoint<M>{model, 0, 0.0, config_hash(to_json(cfg))}, {}, false};
  std::vector<Example> batch;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      batch.clear();
      for (std::size_t j = i; j < std::min(order.size(), i + cfg.batch_size); ++j) batch.push_back(train[order[j]]);
      loss_sum += model.train_batch(std::span<const Example>(batch));
      ++batches;
    }
    EpochMetrics m{epoch, loss_sum / static_cast<double>(batches), evaluate(std::as_const(model))};
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
    const bool stop = stopper.update(m.val_top1);
    if (stopper.best_epoch() == epoch) {
      result.best.model = model;
      result.best.epoch = epoch;
      result.best.val_accuracy = m.val_top1;
    }
    if (stop) {
      result.early_stopped = epoch < cfg.max_epochs;
      break;
    }
  }
  return result;
}

template <RetrieverModel M>
std::size_t top1_hits(const M& model, const std::vector<QueryDocPair>& pairs) {
  std::size_t hits = 0;
  for (const auto& p : pairs)
    if (greedy_decode(model, p.query) == p.docid) ++hits;
  return hits;
}

/// Fraction of pairs whose greedy decode equals the gold docid exactly.
template <RetrieverModel M>
double top1_accuracy(const M& model, const std::vector<QueryDocPair>& pairs) {
  if (pairs.empty()) throw Error("top1_accuracy: empty evaluation set");
  return static_cast<double>(top1_hits(model, pairs)) / static_cast<double>(pairs.size());
}

template <RetrieverModel M>
TrainResult<M> train_epochs(M& model, const std::vector<QueryDocPair>& train, const std::vector<QueryDocPair>& val,
                            const TrainConfig& cfg, const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  if (train.empty()) throw Error("train_epochs: empty training split");
  if (val.empty()) throw Error("train_epochs: empty validation split");
  const auto examples = encode_pairs(model.vocab(), train);
  return train_epochs(
      model, std::span<const Example>(examples), [&](const M& m) { return top1_accuracy(m, val); }, cfg, on_epoch);
}

/// Trains on `batch` after encoding it with the model's vocabulary.
template <RetrieverModel M>
double train_batch(M& model, const std::vector<QueryDocPair>& batch) {
  if (batch.empty()) throw Error("train_batch: empty batch");
  const auto examples = encode_pairs(model.vocab(), batch);
  return model.train_batch(std::span<const Example>(examples));
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline void write_json_file(const std::filesystem::path& path, const Json& j, int indent = -1) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(concat("cannot write '", path.string(), "'"));
  out << j.dump(indent) << '\n';
  if (!out) throw Error(concat("write failed for '", path.string(), "'"));
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(concat("cannot read '", path.string(), "'"));
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(concat(path.string(), ": ", e.what()));
  }
}

inline Json checkpoint_json(const Checkpoint<ReferenceModel>& c) {
  Json j = c.model.to_json(false);
  j["format"] = "dedsi-checkpoint";
  j["version"] = 1;
  j["epoch"] = c.epoch;
  j["val_accuracy"] = c.val_accuracy;
  j["config_hash"] = c.config_hash;
  return j;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint<ReferenceModel>& c) {
  write_json_file(path, checkpoint_json(c));
}

inline Checkpoint<ReferenceModel> load_checkpoint(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  if (j.value("format", "") != "dedsi-checkpoint") throw Error(concat(path.string(), ": not a checkpoint file"));
  return {ReferenceModel::from_json(j), j.at("epoch").get<std::size_t>(), j.at("val_accuracy").get<double>(),
          j.at("config_hash").get<std::string>()};
}

inline void write_epoch_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(concat("cannot write '", path.string(), "'"));
  out << "epoch,train_loss,val_top1\n";
  out.precision(17);
  for (const auto& m : history) out << m.epoch << ',' << m.train_loss << ',' << m.val_top1 << '\n';
}

}  // namespace dedsi
