#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "graft/error.hpp"
#include "graft/model.hpp"
#include "graft/tensor.hpp"

namespace graft {

enum class RangeMode { per_tensor_minmax, fixed };

struct BinningConfig {
  std::size_t bin_count = 10;
  RangeMode range_mode = RangeMode::per_tensor_minmax;
  double lo = -1.0;  // used by RangeMode::fixed
  double hi = 1.0;

  void validate() const {
    if (bin_count < 2) throw ConfigError("bins.count must be >= 2");
    if (range_mode == RangeMode::fixed && !(lo < hi)) throw ConfigError("bins.range: fixed range needs lo < hi");
  }

  friend bool operator==(const BinningConfig&, const BinningConfig&) = default;
};

// Bin of v for a range [lo, hi] split into `bins` equal-width bins:
// floor((v - lo) * bins / (hi - lo)) clamped to [0, bins - 1]. Values outside
// a fixed range land in the edge bins; v == hi lands in the last bin.
inline std::size_t bin_index(double v, double lo, double hi, std::size_t bins) {
  const double pos = std::floor((v - lo) * static_cast<double>(bins) / (hi - lo));
  if (!(pos > 0.0)) return 0;
  if (pos >= static_cast<double>(bins)) return bins - 1;
  return static_cast<std::size_t>(pos);
}

inline std::vector<std::size_t> histogram(std::span<const double> values, const BinningConfig& cfg) {
  cfg.validate();
  if (values.empty()) throw DomainError("histogram of an empty value set");
  double lo = cfg.lo, hi = cfg.hi;
  if (cfg.range_mode == RangeMode::per_tensor_minmax) {
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo = *mn;
    hi = *mx;
  }
  std::vector<std::size_t> counts(cfg.bin_count, 0);
  if (hi == lo) {
    counts[0] = values.size();
    return counts;
  }
  for (double v : values) ++counts[bin_index(v, lo, hi, cfg.bin_count)];
  return counts;
}

// -sum p log p in nats over non-empty bins, visited in bin order.
inline double entropy_from_counts(std::span<const std::size_t> counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h;
}

// Binned entropy of a set of real values. A degenerate range (all values
// equal) gives 0.
inline double entropy_of_values(std::span<const double> values, const BinningConfig& cfg = {}) {
  for (double v : values)
    if (!std::isfinite(v)) throw DomainError("entropy of non-finite value");
  const auto counts = histogram(values, cfg);
  return entropy_from_counts(counts);
}

inline double l1_norm(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += std::abs(v);
  return s;
}

// Sum of absolute values over the filter's in_channels x K x K block.
inline double l1_norm_filter(const Tensor& filter) {
  if (filter.empty()) throw DomainError("l1 norm of an empty filter");
  return l1_norm(filter.values());
}

inline double filter_entropy(const Tensor& filter, const BinningConfig& cfg = {}) {
  return entropy_of_values(filter.values(), cfg);
}

// Per out-filter (leading-dimension row) scores.
inline std::vector<double> filter_l1_norms(const LayerWeights& layer) {
  std::vector<double> out(layer.filter_count());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = l1_norm(layer.weights.row(j));
  return out;
}

inline std::vector<double> filter_entropies(const LayerWeights& layer, const BinningConfig& cfg = {}) {
  std::vector<double> out(layer.filter_count());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = entropy_of_values(layer.weights.row(j), cfg);
  return out;
}

// Layer information as the sum of its filters' entropies.
inline double layer_info_sum(const LayerWeights& layer, const BinningConfig& cfg = {}) {
  if (layer.kind != LayerKind::conv)
    throw KindError("layer_info_sum needs a conv layer, '" + layer.name + "' is " + to_string(layer.kind));
  double s = 0.0;
  for (double h : filter_entropies(layer, cfg)) s += h;
  return s;
}

// Entropy of all weights of the layer binned jointly. Biases are not included.
inline double layer_entropy(const LayerWeights& layer, const BinningConfig& cfg = {}) {
  if (layer.weights.empty()) throw DomainError("layer '" + layer.name + "' has no weights");
  return entropy_of_values(layer.weights.values(), cfg);
}

enum class Criterion { l1, entropy };

inline const char* to_string(Criterion c) { return c == Criterion::l1 ? "l1" : "entropy"; }

struct InvalidSelector {
  enum class Mode { bottom_fraction, absolute_threshold };
  Mode mode = Mode::bottom_fraction;
  double value = 0.2;  // fraction f in (0, 1) or threshold gamma >= 0

  static InvalidSelector bottom_fraction(double f) { return {Mode::bottom_fraction, f}; }
  static InvalidSelector absolute_threshold(double gamma) { return {Mode::absolute_threshold, gamma}; }

  void validate() const {
    if (mode == Mode::bottom_fraction && !(value > 0.0 && value < 1.0))
      throw ConfigError("graft.selector: bottom fraction must lie in (0, 1)");
    if (mode == Mode::absolute_threshold && !(value >= 0.0)) throw ConfigError("graft.selector: threshold must be >= 0");
  }

  friend bool operator==(const InvalidSelector&, const InvalidSelector&) = default;
};

inline std::vector<double> filter_scores(const LayerWeights& layer, Criterion criterion,
                                         const BinningConfig& cfg = {}) {
  return criterion == Criterion::l1 ? filter_l1_norms(layer) : filter_entropies(layer, cfg);
}

// Filter indices sorted by ascending score; equal scores keep index order.
inline std::vector<std::size_t> ascending_order(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return idx;
}

inline std::vector<bool> invalid_mask_from_scores(const std::vector<double>& scores, const InvalidSelector& sel) {
  sel.validate();
  std::vector<bool> mask(scores.size(), false);
  if (sel.mode == InvalidSelector::Mode::absolute_threshold) {
    for (std::size_t j = 0; j < scores.size(); ++j) mask[j] = scores[j] < sel.value;
    return mask;
  }
  // The small epsilon keeps products such as 0.29 * 100 from flooring to 28.
  const auto count =
      static_cast<std::size_t>(std::floor(sel.value * static_cast<double>(scores.size()) + 1e-9));
  const auto order = ascending_order(scores);
  for (std::size_t i = 0; i < count; ++i) mask[order[i]] = true;
  return mask;
}

// Marks the filters judged uninformative: either the floor(f * C) lowest
// scores (ties: lower index first) or every score strictly below gamma.
inline std::vector<bool> invalid_filter_mask(const LayerWeights& layer, Criterion criterion,
                                             const InvalidSelector& selector, const BinningConfig& cfg = {}) {
  return invalid_mask_from_scores(filter_scores(layer, criterion, cfg), selector);
}

// Finite discrete random variable.
struct DiscreteDistribution {
  std::vector<double> support;
  std::vector<double> probs;

  void validate() const {
    if (support.size() != probs.size() || support.empty())
      throw ValidationError("distribution support and probabilities differ in length");
    double total = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0)) throw ValidationError("negative probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ValidationError("probabilities do not sum to 1");
    for (std::size_t i = 0; i < support.size(); ++i)
      for (std::size_t j = i + 1; j < support.size(); ++j)
        if (support[i] == support[j]) throw ValidationError("repeated support value");
  }
};

// Row i, column j holds P(X = x.support[i], Y = y.support[j]).
using JointTable = std::vector<std::vector<double>>;

inline double shannon_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

inline double joint_entropy(const DiscreteDistribution& x, const DiscreteDistribution& y, const JointTable& joint) {
  x.validate();
  y.validate();
  if (joint.size() != x.support.size()) throw ValidationError("joint table row count does not match X");
  std::vector<double> col(y.support.size(), 0.0);
  double h = 0.0;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    if (joint[i].size() != y.support.size()) throw ValidationError("joint table column count does not match Y");
    double row = 0.0;
    for (std::size_t j = 0; j < joint[i].size(); ++j) {
      const double p = joint[i][j];
      if (!(p >= 0.0)) throw ValidationError("negative joint probability");
      row += p;
      col[j] += p;
      if (p > 0.0) h -= p * std::log(p);
    }
    if (std::abs(row - x.probs[i]) > 1e-9) throw ValidationError("joint marginal does not match X");
  }
  for (std::size_t j = 0; j < col.size(); ++j)
    if (std::abs(col[j] - y.probs[j]) > 1e-9) throw ValidationError("joint marginal does not match Y");
  return h;
}

}  // namespace graft
