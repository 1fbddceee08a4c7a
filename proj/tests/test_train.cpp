#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "graft/coordinator.hpp"
#include "graft/train.hpp"

using namespace graft;

namespace {

ArchSpec tiny_arch() {
  ArchSpec a;
  a.height = 6;
  a.width = 6;
  a.convs = {{4, 3}, {6, 3}};
  return a;
}

}  // namespace

TEST(TrainEpoch, ZeroLearningRateIsNoOp) {
  const auto m = build_model(tiny_arch(), 1);
  const auto data = make_synthetic(3, 8, 6, 6, 1);
  TrainHyperparams hp;
  hp.lr_schedule = LrSchedule::step;
  hp.schedule_params = {0.0, 0.0};  // factor 0 from epoch 0 on
  hp.momentum = 0.0;
  hp.weight_decay = 0.0;
  const auto r = train_epoch(m, data, hp, 0);
  EXPECT_EQ(learning_rate(hp, 0), 0.0);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    EXPECT_EQ(r.model.layers[i].weights, m.layers[i].weights);
    EXPECT_EQ(r.model.layers[i].bias, m.layers[i].bias);
  }
  EXPECT_EQ(r.model.epoch, m.epoch + 1);
}

TEST(TrainEpoch, Deterministic) {
  const auto m = build_model(tiny_arch(), 2);
  const auto data = make_synthetic(3, 10, 6, 6, 2);
  TrainHyperparams hp;
  hp.batch_size = 4;
  const auto a = train_epoch(m, data, hp, 3);
  const auto b = train_epoch(m, data, hp, 3);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_NE(a.model, m);
}

TEST(TrainEpoch, DivergenceCarriesDiagnostics) {
  auto m = build_model(tiny_arch(), 3);
  m.worker_id = 5;
  m.layers.back().weights[0] = std::numeric_limits<double>::infinity();
  const auto data = make_synthetic(3, 4, 6, 6, 3);
  try {
    train_epoch(m, data, TrainHyperparams{}, 7);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.worker_id, 5);
    EXPECT_EQ(e.epoch, 7);
    EXPECT_EQ(e.iteration, 0);
    EXPECT_EQ(e.category(), "divergence_error");
  }
}

TEST(TrainEpoch, ShapeMismatchRejected) {
  const auto m = build_model(tiny_arch(), 1);
  SyntheticOptions two_channels;
  two_channels.channels = 2;
  const auto data = make_synthetic(3, 4, 6, 6, 1, two_channels);
  EXPECT_THROW(train_epoch(m, data, TrainHyperparams{}, 0), ShapeError);
}

TEST(Schedule, CosineStartsAtInitialAndDecreases) {
  TrainHyperparams hp;
  hp.initial_lr = 0.1;
  hp.epochs = 30;
  EXPECT_EQ(learning_rate(hp, 0), 0.1);
  for (int e = 1; e < 40; ++e) EXPECT_LE(learning_rate(hp, e), learning_rate(hp, e - 1));
  EXPECT_NEAR(learning_rate(hp, 15), 0.05, 1e-15);
}

TEST(Schedule, StepMultipliesAtMilestones) {
  TrainHyperparams hp;
  hp.initial_lr = 0.1;
  hp.lr_schedule = LrSchedule::step;
  hp.schedule_params = {0.5, 10, 20};
  EXPECT_EQ(learning_rate(hp, 0), 0.1);
  EXPECT_EQ(learning_rate(hp, 9), 0.1);
  EXPECT_EQ(learning_rate(hp, 10), 0.1 * 0.5);
  EXPECT_EQ(learning_rate(hp, 19), 0.1 * 0.5);
  EXPECT_EQ(learning_rate(hp, 20), 0.1 * 0.5 * 0.5);
}

TEST(Schedule, ValidationErrors) {
  TrainHyperparams hp;
  hp.initial_lr = 0.0;
  EXPECT_THROW(hp.validate(), ConfigError);
  hp = {};
  hp.batch_size = 0;
  EXPECT_THROW(hp.validate(), ConfigError);
  hp = {};
  hp.momentum = 1.0;
  EXPECT_THROW(hp.validate(), ConfigError);
}

TEST(Diversity, DistinctSeedsGiveDistinctOrders) {
  EXPECT_NE(epoch_order(100, 1, 0), epoch_order(100, 2, 0));
  EXPECT_NE(epoch_order(100, 1, 0), epoch_order(100, 1, 1));
  EXPECT_EQ(epoch_order(100, 1, 4), epoch_order(100, 1, 4));
  auto o = epoch_order(50, 9, 2);
  std::sort(o.begin(), o.end());
  for (std::size_t i = 0; i < o.size(); ++i) EXPECT_EQ(o[i], i);
}

TEST(Diversity, WorkersDifferInLrAtEveryEpoch) {
  const auto hps = diversified_hyperparams(TrainHyperparams{}, 3, 11);
  for (int e = 0; e < hps[0].epochs; ++e) {
    EXPECT_NE(learning_rate(hps[0], e), learning_rate(hps[1], e));
    EXPECT_NE(learning_rate(hps[1], e), learning_rate(hps[2], e));
  }
  EXPECT_NE(hps[0].data_seed, hps[1].data_seed);
  EXPECT_NE(hps[0].init_seed, hps[1].init_seed);
}

// The default toy setup must learn the synthetic task in 20 epochs. The
// achieved value is pinned in tests/golden so drifts show up as diffs.
TEST(Baseline, DefaultToyConfigLearnsInTwentyEpochs) {
  auto cfg = toy_experiment(1, 0);
  cfg.total_epochs = 20;
  for (auto& w : cfg.workers) w.epochs = 20;
  cfg.execution = ExecutionMode::sequential;
  const auto r = run_experiment(cfg);
  const double acc = r.history.back().train_accuracy;
  EXPECT_GT(acc, 0.8);
  std::ifstream golden(std::string(GRAFT_SOURCE_DIR) + "/tests/golden/baseline_train_accuracy.txt");
  ASSERT_TRUE(golden) << "golden file missing";
  double expected = 0.0;
  golden >> expected;
  EXPECT_NEAR(acc, expected, 1e-9) << "achieved " << acc;
}
