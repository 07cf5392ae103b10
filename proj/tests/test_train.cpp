#include <gtest/gtest.h>

#include "support.hpp"

using namespace dedsi;

namespace {

/// Replays a fixed validation trace; each epoch bumps a counter.
struct ScriptedModel {
  using State = int;
  std::size_t steps = 0;
  std::size_t id_symbols() const { return 2; }
  State start(const EncodedQuery&) const { return 0; }
  std::vector<double> log_probs(const State&) const { return {std::log(0.5), std::log(0.5)}; }
  State advance(const State& s, int) const { return s + 1; }
  double train_batch(std::span<const Example>) { return 1.0 / static_cast<double>(++steps); }
};

TrainResult<ScriptedModel> replay(const std::vector<double>& trace, TrainConfig cfg) {
  ScriptedModel m;
  std::vector<Example> data(3);
  std::size_t epoch = 0;
  return train_epochs(
      m, std::span<const Example>(data), [&](const ScriptedModel&) { return trace.at(epoch++); }, cfg);
}

}  // namespace

TEST(EarlyStop, PlateauStopsAfterWindow) {
  std::vector<double> trace{0.1, 0.5};
  trace.resize(2 + 40, 0.5);
  TrainConfig cfg;
  const auto r = replay(trace, cfg);
  EXPECT_EQ(r.history.size(), 22u);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_EQ(r.best.epoch, 2u);
  EXPECT_EQ(r.best.val_accuracy, 0.5);
}

TEST(EarlyStop, SmallGainsBelowDeltaDoNotCount) {
  // Creeping up by 0.004 per epoch never reaches delta = 0.01 over any single step,
  // but the best checkpoint still tracks the highest accuracy.
  std::vector<double> trace;
  for (int i = 0; i < 60; ++i) trace.push_back(0.3 + 0.004 * i);
  const auto r = replay(trace, {});
  EXPECT_EQ(r.history.size(), 21u);
  EXPECT_EQ(r.best.epoch, 21u);
}

TEST(EarlyStop, MaxEpochsOneRunsOnce) {
  TrainConfig cfg;
  cfg.max_epochs = 1;
  const auto r = replay({0.2, 0.9}, cfg);
  EXPECT_EQ(r.history.size(), 1u);
  EXPECT_FALSE(r.early_stopped);
  EXPECT_EQ(r.best.epoch, 1u);
}

TEST(EarlyStop, StrictlyImprovingTraceRunsToMax) {
  TrainConfig cfg;
  cfg.max_epochs = 30;
  std::vector<double> trace;
  for (int i = 0; i < 30; ++i) trace.push_back(0.02 * i);
  const auto r = replay(trace, cfg);
  EXPECT_EQ(r.history.size(), 30u);
  EXPECT_FALSE(r.early_stopped);
  EXPECT_EQ(r.best.epoch, 30u);
}

TEST(EarlyStop, FirstArgmaxWins) {
  TrainConfig cfg;
  cfg.early_stop_window = 3;
  const auto r = replay({0.4, 0.7, 0.7, 0.7, 0.7, 0.7}, cfg);
  EXPECT_EQ(r.best.epoch, 2u);
  EXPECT_EQ(r.history.size(), 5u);
}

TEST(EarlyStop, ConfigValidation) {
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.early_stop_delta = -1;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Train, ReferenceModelReproducibleAndLogged) {
  const auto corpus = synthesize_corpus(fixtures::small_synthetic(8, 6, 2));
  const auto splits = make_splits(corpus, {4, 1, 1});
  auto vocab = std::make_shared<const Vocabulary>(build_vocab(splits.train, corpus));
  ModelConfig mc;
  mc.dim = 16;
  TrainConfig tc;
  tc.max_epochs = 6;
  tc.batch_size = 8;
  auto a = make_model(vocab, corpus, mc);
  auto b = make_model(vocab, corpus, mc);
  std::vector<EpochMetrics> seen;
  const auto ra = train_epochs(a, splits.train, splits.val, tc, [&](const EpochMetrics& m) { seen.push_back(m); });
  const auto rb = train_epochs(b, splits.train, splits.val, tc);
  ASSERT_EQ(ra.history.size(), rb.history.size());
  ASSERT_EQ(seen.size(), ra.history.size());
  for (std::size_t i = 0; i < ra.history.size(); ++i) {
    EXPECT_EQ(ra.history[i].train_loss, rb.history[i].train_loss);
    EXPECT_EQ(ra.history[i].val_top1, rb.history[i].val_top1);
  }
  EXPECT_EQ(ra.best.model.parameter_hash(), rb.best.model.parameter_hash());
  EXPECT_THROW(train_epochs(a, std::vector<QueryDocPair>{}, splits.val, tc), Error);
}
