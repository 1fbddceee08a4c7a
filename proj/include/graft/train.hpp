#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "graft/data.hpp"
#include "graft/error.hpp"
#include "graft/model.hpp"
#include "graft/tensor.hpp"

namespace graft {

enum class LrSchedule { step, cosine };

inline const char* to_string(LrSchedule s) { return s == LrSchedule::step ? "step" : "cosine"; }

struct TrainHyperparams {
  double initial_lr = 0.05;
  LrSchedule lr_schedule = LrSchedule::cosine;
  // step: {factor, milestone_epoch...}; cosine: {} or {min_lr}
  std::vector<double> schedule_params;
  std::size_t batch_size = 8;
  std::uint64_t data_seed = 0;
  std::uint64_t init_seed = 0;
  int epochs = 40;  // schedule horizon
  double momentum = 0.9;
  double weight_decay = 2e-2;

  void validate() const {
    if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) throw ConfigError("initial_lr must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (lr_schedule == LrSchedule::step) {
      if (!schedule_params.empty() && !(schedule_params[0] >= 0.0))
        throw ConfigError("schedule_params: step factor must be >= 0");
    } else if (schedule_params.size() > 1) {
      throw ConfigError("schedule_params: cosine takes at most one value (min_lr)");
    }
  }

  friend bool operator==(const TrainHyperparams&, const TrainHyperparams&) = default;
};

// Learning rate used throughout epoch `epoch` (0-based).
inline double learning_rate(const TrainHyperparams& hp, int epoch) {
  if (hp.lr_schedule == LrSchedule::step) {
    double lr = hp.initial_lr;
    if (hp.schedule_params.empty()) return lr;
    const double factor = hp.schedule_params[0];
    for (std::size_t i = 1; i < hp.schedule_params.size(); ++i)
      if (static_cast<double>(epoch) >= hp.schedule_params[i]) lr *= factor;
    return lr;
  }
  const double min_lr = hp.schedule_params.empty() ? 0.0 : hp.schedule_params[0];
  if (epoch <= 0) return hp.initial_lr;
  const double t = std::min(1.0, static_cast<double>(epoch) / hp.epochs);
  return min_lr + (hp.initial_lr - min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

// Sample visiting order for one epoch; a pure function of (data_seed, epoch).
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t data_seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(Rng::mix(data_seed, {0x0de5, static_cast<std::uint64_t>(epoch)}));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

// Momentum buffers, owned by one worker across epochs.
struct SgdState {
  std::vector<LayerGradient> velocity;
};

struct EpochResult {
  ModelSnapshot model;
  double loss = 0.0;            // mean cross-entropy over the epoch's samples
  double train_accuracy = 0.0;  // measured on the fly, before each step
};

// One pass over `data` in the order given by epoch_order. Each step applies
// v <- momentum * v + (g + weight_decay * w);  w <- w - lr * v.
inline EpochResult train_epoch(const ModelSnapshot& model, const Dataset& data, const TrainHyperparams& hp,
                               int epoch_index, SgdState& state) {
  hp.validate();
  data.validate();
  EpochResult out{model, 0.0, 0.0};
  ModelSnapshot& m = out.model;
  if (state.velocity.size() != m.layers.size()) {
    state.velocity.clear();
    for (const auto& l : m.layers)
      state.velocity.push_back({Tensor::zeros(l.weights.shape()), Tensor::zeros(l.bias.shape())});
  }
  const double lr = learning_rate(hp, epoch_index);
  const auto order = epoch_order(data.size(), hp.data_seed, epoch_index);
  double total_loss = 0.0;
  std::size_t correct = 0;
  long iteration = 0;
  for (std::size_t start = 0; start < order.size(); start += hp.batch_size, ++iteration) {
    const std::size_t end = std::min(order.size(), start + hp.batch_size);
    std::span<const std::size_t> idx(order.data() + start, end - start);
    auto [batch, labels] = data.gather(idx);
    auto lg = loss_and_gradients(m, batch, labels);
    if (!std::isfinite(lg.loss))
      throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch_index) + ", iteration " +
                                std::to_string(iteration) + " (lr " + std::to_string(lr) + ")",
                            m.worker_id, epoch_index, iteration, lg.loss);
    total_loss += lg.loss * static_cast<double>(idx.size());
    correct += lg.correct;
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
      for (int part = 0; part < 2; ++part) {
        Tensor& w = part == 0 ? m.layers[li].weights : m.layers[li].bias;
        Tensor& v = part == 0 ? state.velocity[li].weights : state.velocity[li].bias;
        const Tensor& g = part == 0 ? lg.grads[li].weights : lg.grads[li].bias;
        for (std::size_t i = 0; i < w.numel(); ++i) {
          v[i] = hp.momentum * v[i] + (g[i] + hp.weight_decay * w[i]);
          w[i] -= lr * v[i];
        }
      }
    }
  }
  out.loss = total_loss / static_cast<double>(data.size());
  out.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  m.epoch = model.epoch + 1;
  return out;
}

// Fresh optimizer state; equivalent to the first epoch of a new run.
inline EpochResult train_epoch(const ModelSnapshot& model, const Dataset& data, const TrainHyperparams& hp,
                               int epoch_index) {
  SgdState state;
  return train_epoch(model, data, hp, epoch_index, state);
}

inline double evaluate_accuracy(const ModelSnapshot& model, const Dataset& data) {
  const Tensor logits = forward(model, data.images);
  std::size_t correct = 0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    auto row = logits.row(s);
    const auto pred = std::max_element(row.begin(), row.end()) - row.begin();
    if (pred == data.labels[s]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// Per-worker hyperparameters that differ in data order, init and initial
// learning rate: worker k gets base.initial_lr * (1 + lr_spread * k).
inline std::vector<TrainHyperparams> diversified_hyperparams(const TrainHyperparams& base, int workers,
                                                             std::uint64_t seed, double lr_spread = 0.2) {
  std::vector<TrainHyperparams> out;
  for (int k = 0; k < workers; ++k) {
    TrainHyperparams hp = base;
    hp.data_seed = Rng::mix(seed, {0xd, static_cast<std::uint64_t>(k)});
    hp.init_seed = Rng::mix(seed, {0x1, static_cast<std::uint64_t>(k)});
    hp.initial_lr = base.initial_lr * (1.0 + lr_spread * k);
    out.push_back(hp);
  }
  return out;
}

}  // namespace graft
