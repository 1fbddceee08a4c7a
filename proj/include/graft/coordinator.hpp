#pragma once

#include <algorithm>
#include <atomic>
#include <barrier>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "graft/criteria.hpp"
#include "graft/data.hpp"
#include "graft/diagnostics.hpp"
#include "graft/error.hpp"
#include "graft/grafting.hpp"
#include "graft/model.hpp"
#include "graft/train.hpp"

namespace graft {

enum class Topology { ring };
enum class ExecutionMode { sequential, concurrent };

inline const char* to_string(ExecutionMode m) { return m == ExecutionMode::sequential ? "sequential" : "concurrent"; }

struct DataConfig {
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 100;
  std::uint64_t train_seed = 1;
  std::uint64_t test_seed = 2;
  double noise = 1.0;
  double angle_jitter = 0.35;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct ExperimentConfig {
  int network_count = 2;
  std::vector<TrainHyperparams> workers;
  ArchSpec arch;
  DataConfig data;
  bool grafting_enabled = true;
  GraftConfig graft;
  BinningConfig bins;
  // Grafting fires at the end of every graft_period-th epoch.
  int graft_period = 1;
  int total_epochs = 40;
  Topology topology = Topology::ring;
  ExecutionMode execution = ExecutionMode::concurrent;
  std::vector<double> thresholds = default_thresholds();

  // Throws on invalid settings; returns non-fatal warnings.
  std::vector<std::string> validate() const {
    if (network_count < 1) throw ConfigError("network_count must be >= 1");
    if (workers.size() != static_cast<std::size_t>(network_count))
      throw ConfigError("expected " + std::to_string(network_count) + " worker hyperparameter sets, got " +
                        std::to_string(workers.size()));
    if (total_epochs < 1) throw ConfigError("total_epochs must be >= 1");
    if (graft_period < 1) throw ConfigError("graft_period must be >= 1");
    arch.validate();
    graft.validate();
    bins.validate();
    for (std::size_t k = 0; k < workers.size(); ++k) {
      try {
        workers[k].validate();
      } catch (const ConfigError& e) {
        throw ConfigError("worker." + std::to_string(k) + "." + e.what());
      }
    }
    if (grafting_enabled && graft.scion_source == ScionSource::external && network_count < 2)
      throw ConfigError("network_count must be >= 2 for external grafting (graft.scion_source = external)");
    std::vector<std::string> warnings;
    if (network_count >= 2) {
      for (int i = 0; i < network_count; ++i)
        for (int j = i + 1; j < network_count; ++j)
          if (workers[i].data_seed == workers[j].data_seed && workers[i].initial_lr == workers[j].initial_lr)
            warnings.push_back("workers " + std::to_string(i) + " and " + std::to_string(j) +
                               " share data_seed and initial_lr");
    }
    return warnings;
  }

  bool grafts_at(int epoch) const { return grafting_enabled && (epoch + 1) % graft_period == 0; }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// The toy setup used by the CLI's default-config and the acceptance runs:
// K workers diversified in data order, init and initial learning rate.
inline ExperimentConfig toy_experiment(int network_count, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.network_count = network_count;
  cfg.data.train_seed = Rng::mix(seed, {0x7a});
  cfg.data.test_seed = Rng::mix(seed, {0x7e});
  TrainHyperparams base;
  base.epochs = cfg.total_epochs;
  cfg.workers = diversified_hyperparams(base, network_count, seed);
  cfg.grafting_enabled = network_count > 1;
  // Grafting every epoch keeps two networks identical, so they die in the
  // same places; every other epoch lets them drift apart in between.
  cfg.graft_period = 2;
  return cfg;
}

struct EpochRecord {
  int epoch = 0;  // 0-based index of the finished epoch
  int worker_id = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double network_information = 0.0;
  std::vector<std::pair<std::string, double>> layer_entropies;
  std::vector<ThresholdRatio> invalid_ratio;
  std::vector<AlphaDecision> alphas;  // empty when no external graft happened
  bool grafted = false;
};

inline int ring_peer(int worker, int count) { return (worker - 1 + count) % count; }

struct GraftStepResult {
  std::vector<ModelSnapshot> snapshots;
  std::vector<std::vector<AlphaDecision>> decisions;
};

// Worker k is blended with worker k-1 (mod K). Every update reads only the
// frozen pre-graft vector, so the order in which workers are processed does
// not affect the result. `order` lists worker indices; empty means 0..K-1.
inline GraftStepResult graft_step(const std::vector<ModelSnapshot>& pre_graft, const GraftConfig& graft,
                                  const BinningConfig& bins, std::vector<int> order = {}) {
  const int k = static_cast<int>(pre_graft.size());
  if (k < 2) throw ConfigError("graft_step needs at least two networks");
  for (int i = 1; i < k; ++i)
    if (auto mismatch = architecture_mismatch(pre_graft[0], pre_graft[i]))
      throw GraftError("worker " + std::to_string(i) + " is not architecture-compatible: " + *mismatch);
  if (order.empty()) {
    order.resize(k);
    std::iota(order.begin(), order.end(), 0);
  }
  GraftStepResult out;
  out.snapshots.resize(k);
  out.decisions.resize(k);
  for (int w : order) {
    auto g = graft_external_pair(pre_graft[w], pre_graft[ring_peer(w, k)], graft, bins);
    out.snapshots[w] = std::move(g.model);
    out.decisions[w] = std::move(g.decisions);
  }
  return out;
}

inline GraftStepResult graft_step(const std::vector<ModelSnapshot>& pre_graft, const ExperimentConfig& cfg,
                                  std::vector<int> order = {}) {
  return graft_step(pre_graft, cfg.graft, cfg.bins, std::move(order));
}

struct ExperimentResult {
  std::vector<ModelSnapshot> finals;
  std::vector<EpochRecord> history;  // ordered by (epoch, worker)
  int graft_steps = 0;
};

inline Dataset make_train_set(const ExperimentConfig& cfg) {
  return make_synthetic(static_cast<int>(cfg.arch.class_count), cfg.data.train_per_class, cfg.arch.height,
                        cfg.arch.width, cfg.data.train_seed,
                        {cfg.arch.in_channels, cfg.data.noise, cfg.data.angle_jitter});
}

inline Dataset make_test_set(const ExperimentConfig& cfg) {
  return make_synthetic(static_cast<int>(cfg.arch.class_count), cfg.data.test_per_class, cfg.arch.height,
                        cfg.arch.width, cfg.data.test_seed,
                        {cfg.arch.in_channels, cfg.data.noise, cfg.data.angle_jitter});
}

namespace detail {

// Everything one worker owns; nothing here is touched by another worker.
struct WorkerState {
  int id = 0;
  TrainHyperparams hp;
  ModelSnapshot model;
  SgdState sgd;
  Rng graft_rng;
  double last_loss = 0.0;
  double last_train_accuracy = 0.0;
};

inline WorkerState make_worker(const ExperimentConfig& cfg, int k) {
  WorkerState w;
  w.id = k;
  w.hp = cfg.workers[k];
  w.model = build_model(cfg.arch, w.hp.init_seed);
  w.model.worker_id = k;
  w.model.tag = "worker" + std::to_string(k);
  w.graft_rng = Rng(Rng::mix(w.hp.init_seed, {0x6a2f, static_cast<std::uint64_t>(k)}));
  return w;
}

inline void train_phase(WorkerState& w, const Dataset& data, int epoch) {
  auto r = train_epoch(w.model, data, w.hp, epoch, w.sgd);
  w.model = std::move(r.model);
  w.last_loss = r.loss;
  w.last_train_accuracy = r.train_accuracy;
}

// Grafting that needs no peer: noise or internal scions.
inline void local_graft_phase(WorkerState& w, const ExperimentConfig& cfg, int epoch) {
  if (!cfg.grafts_at(epoch)) return;
  if (cfg.graft.scion_source == ScionSource::noise)
    w.model = graft_noise(w.model, epoch, cfg.graft, w.graft_rng, cfg.bins);
  else if (cfg.graft.scion_source == ScionSource::internal)
    w.model = graft_internal(w.model, cfg.graft, cfg.bins);
}

inline EpochRecord make_record(const WorkerState& w, const ExperimentConfig& cfg, const Dataset& test, int epoch,
                               std::vector<AlphaDecision> alphas) {
  EpochRecord r;
  r.epoch = epoch;
  r.worker_id = w.id;
  r.train_loss = w.last_loss;
  r.train_accuracy = w.last_train_accuracy;
  r.test_accuracy = evaluate_accuracy(w.model, test);
  for (const auto& l : w.model.layers) {
    const double h = layer_entropy(l, cfg.bins);
    r.layer_entropies.emplace_back(l.name, h);
    r.network_information += h;
  }
  r.invalid_ratio = invalid_ratio(w.model, cfg.thresholds);
  r.grafted = cfg.grafts_at(epoch);
  r.alphas = std::move(alphas);
  return r;
}

inline bool external(const ExperimentConfig& cfg) {
  return cfg.grafting_enabled && cfg.graft.scion_source == ScionSource::external;
}

inline void check_data(const ExperimentConfig& cfg, const Dataset& data, const char* what) {
  data.validate();
  const auto& s = data.images.shape();
  if (s[1] != cfg.arch.in_channels || s[2] != cfg.arch.height || s[3] != cfg.arch.width)
    throw ShapeError(std::string(what) + " images " + shape_string(s) + " do not match the architecture input");
  if (static_cast<std::size_t>(data.class_count) != cfg.arch.class_count)
    throw ShapeError(std::string(what) + " class count does not match the architecture");
}

inline ExperimentResult run_sequential(const ExperimentConfig& cfg, const Dataset& data, const Dataset& test) {
  const int k = cfg.network_count;
  std::vector<WorkerState> workers;
  for (int i = 0; i < k; ++i) workers.push_back(make_worker(cfg, i));
  ExperimentResult result;
  for (int e = 0; e < cfg.total_epochs; ++e) {
    for (auto& w : workers) {
      train_phase(w, data, e);
      local_graft_phase(w, cfg, e);
    }
    std::vector<std::vector<AlphaDecision>> alphas(k);
    if (external(cfg) && cfg.grafts_at(e)) {
      std::vector<ModelSnapshot> pre;
      for (const auto& w : workers) pre.push_back(w.model);
      auto step = graft_step(pre, cfg);
      for (int i = 0; i < k; ++i) workers[i].model = std::move(step.snapshots[i]);
      alphas = std::move(step.decisions);
      ++result.graft_steps;
    }
    for (int i = 0; i < k; ++i) result.history.push_back(make_record(workers[i], cfg, test, e, std::move(alphas[i])));
  }
  for (auto& w : workers) result.finals.push_back(std::move(w.model));
  return result;
}

// Shared slots for one experiment. Each slot index is written by exactly one
// worker between barrier phases, or by the barrier completion step.
struct Exchange {
  explicit Exchange(int k) : published(k), grafted(k), alphas(k), errors(k) {}

  std::vector<ModelSnapshot> published;
  std::vector<ModelSnapshot> grafted;
  std::vector<std::vector<AlphaDecision>> alphas;
  std::vector<std::exception_ptr> errors;
  std::exception_ptr step_error;
  std::atomic<bool> cancelled{false};
  int graft_steps = 0;
};

// One worker: train, publish, wait at the barrier while the coordinator
// grafts, take the grafted snapshot, record, repeat.
template <typename Barrier>
void worker_loop(WorkerState& w, const ExperimentConfig& cfg, const Dataset& data, const Dataset& test,
                 Exchange& ex, Barrier& barrier, std::vector<EpochRecord>& records) {
  for (int e = 0; e < cfg.total_epochs; ++e) {
    try {
      if (!ex.cancelled.load()) {
        train_phase(w, data, e);
        local_graft_phase(w, cfg, e);
        ex.published[w.id] = w.model;
      }
    } catch (...) {
      ex.errors[w.id] = std::current_exception();
    }
    barrier.arrive_and_wait();
    if (ex.cancelled.load()) return;
    std::vector<AlphaDecision> alphas;
    if (external(cfg) && cfg.grafts_at(e)) {
      w.model = std::move(ex.grafted[w.id]);
      alphas = std::move(ex.alphas[w.id]);
    }
    try {
      records.push_back(make_record(w, cfg, test, e, std::move(alphas)));
    } catch (...) {
      ex.errors[w.id] = std::current_exception();
    }
    barrier.arrive_and_wait();
    if (ex.cancelled.load()) return;
  }
}

inline ExperimentResult run_concurrent(const ExperimentConfig& cfg, const Dataset& data, const Dataset& test) {
  const int k = cfg.network_count;
  std::vector<WorkerState> workers;
  for (int i = 0; i < k; ++i) workers.push_back(make_worker(cfg, i));
  Exchange ex(k);
  int phase = 0;  // even: after training, odd: after recording
  auto on_phase_complete = [&]() noexcept {
    const int epoch = phase / 2;
    const bool after_training = phase % 2 == 0;
    ++phase;
    for (const auto& err : ex.errors)
      if (err) {
        ex.cancelled = true;
        return;
      }
    if (!after_training || !external(cfg) || !cfg.grafts_at(epoch)) return;
    try {
      auto step = graft_step(ex.published, cfg);
      ex.grafted = std::move(step.snapshots);
      ex.alphas = std::move(step.decisions);
      ++ex.graft_steps;
    } catch (...) {
      ex.step_error = std::current_exception();
      ex.cancelled = true;
    }
  };
  std::barrier barrier(k, on_phase_complete);
  std::vector<std::vector<EpochRecord>> records(k);
  {
    std::vector<std::jthread> threads;
    for (int i = 0; i < k; ++i)
      threads.emplace_back([&, i] { worker_loop(workers[i], cfg, data, test, ex, barrier, records[i]); });
  }
  for (const auto& err : ex.errors)
    if (err) std::rethrow_exception(err);
  if (ex.step_error) std::rethrow_exception(ex.step_error);

  ExperimentResult result;
  result.graft_steps = ex.graft_steps;
  for (int e = 0; e < cfg.total_epochs; ++e)
    for (int i = 0; i < k; ++i) result.history.push_back(std::move(records[i][e]));
  for (auto& w : workers) result.finals.push_back(std::move(w.model));
  return result;
}

}  // namespace detail

// Trains K networks for total_epochs. After each worker's epoch, grafting
// (when enabled) fires at the epoch boundary; external grafting waits for
// every worker and blends from the frozen pre-graft snapshots. Both execution
// modes produce bit-identical results.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& data, const Dataset& test) {
  cfg.validate();
  detail::check_data(cfg, data, "training");
  detail::check_data(cfg, test, "test");
  if (cfg.execution == ExecutionMode::sequential || cfg.network_count == 1)
    return detail::run_sequential(cfg, data, test);
  return detail::run_concurrent(cfg, data, test);
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  return run_experiment(cfg, make_train_set(cfg), make_test_set(cfg));
}

}  // namespace graft
