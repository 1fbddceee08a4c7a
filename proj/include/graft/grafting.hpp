#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "graft/criteria.hpp"
#include "graft/error.hpp"
#include "graft/model.hpp"
#include "graft/tensor.hpp"

namespace graft {

enum class ScionSource { noise, internal, external };
enum class Weighting { adaptive, fixed };
enum class Granularity { layer_level, filter_level };
enum class InternalMode { add, replace };
// How a layer's information is measured for the blend coefficient:
// whole_layer bins all weights of the layer jointly, filter_sum adds up the
// per-filter entropies.
enum class LayerMeasure { whole_layer, filter_sum };

inline const char* to_string(ScionSource s) {
  switch (s) {
    case ScionSource::noise: return "noise";
    case ScionSource::internal: return "internal";
    case ScionSource::external: return "external";
  }
  return "?";
}
inline const char* to_string(Granularity g) { return g == Granularity::layer_level ? "layer_level" : "filter_level"; }
inline const char* to_string(InternalMode m) { return m == InternalMode::add ? "add" : "replace"; }
inline const char* to_string(LayerMeasure m) { return m == LayerMeasure::whole_layer ? "whole_layer" : "filter_sum"; }

struct GraftConfig {
  ScionSource scion_source = ScionSource::external;
  Criterion criterion = Criterion::entropy;
  double A = 0.25;
  double c = 50.0;
  double noise_base_a = 0.9;
  InvalidSelector invalid_selector = InvalidSelector::bottom_fraction(0.2);
  Weighting weighting = Weighting::adaptive;
  double fixed_alpha = 0.5;
  Granularity granularity = Granularity::layer_level;
  InternalMode internal_mode = InternalMode::add;
  LayerMeasure layer_measure = LayerMeasure::whole_layer;

  void validate() const {
    if (!(A > 0.0 && A < 1.0 / std::numbers::pi)) throw ConfigError("graft.A must lie in (0, 1/pi)");
    if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("graft.c must be > 0");
    if (!(noise_base_a > 0.0 && noise_base_a < 1.0)) throw ConfigError("graft.noise_base must lie in (0, 1)");
    if (weighting == Weighting::fixed && !(fixed_alpha > 0.0 && fixed_alpha < 1.0))
      throw ConfigError("graft.fixed_alpha must lie in (0, 1)");
    invalid_selector.validate();
  }

  friend bool operator==(const GraftConfig&, const GraftConfig&) = default;
};

struct AlphaDecision {
  std::string layer_name;
  double h_self = 0.0;
  double h_peer = 0.0;
  double alpha = 0.5;

  friend bool operator==(const AlphaDecision&, const AlphaDecision&) = default;
};

// alpha = A * atan(c * (h_self - h_peer)) + 0.5, where self is the network
// being updated. For a negative difference the value is formed as
// 1 - alpha(-difference), so alpha(d) + alpha(-d) == 1 holds exactly and
// mutual grafting of two networks yields bit-identical results.
inline double adaptive_alpha(double h_self, double h_peer, double A, double c) {
  if (!(A > 0.0 && A < 1.0 / std::numbers::pi)) throw DomainError("A must lie in (0, 1/pi)");
  if (!(c > 0.0)) throw DomainError("c must be > 0");
  const double x = c * (h_self - h_peer);
  const double upper = A * std::atan(std::abs(x)) + 0.5;
  return x >= 0.0 ? upper : 1.0 - upper;
}

// Noise scale a^t for grafting round t.
inline double noise_sigma(int t, double a) {
  if (!(a > 0.0 && a < 1.0)) throw ConfigError("noise base a must lie in (0, 1)");
  if (t < 0) throw DomainError("noise round must be >= 0");
  return std::pow(a, t);
}

// Adds N(0, a^epoch) noise to the invalid filters of every conv layer. The
// noise is drawn layer by layer, filter by filter in index order.
inline ModelSnapshot graft_noise(const ModelSnapshot& model, int epoch, const GraftConfig& cfg, Rng& rng,
                                 const BinningConfig& bins = {}) {
  cfg.validate();
  const double sigma = noise_sigma(epoch, cfg.noise_base_a);
  ModelSnapshot out = model;
  for (auto& layer : out.layers) {
    if (layer.kind != LayerKind::conv) continue;
    const auto mask = invalid_filter_mask(layer, cfg.criterion, cfg.invalid_selector, bins);
    for (std::size_t j = 0; j < mask.size(); ++j) {
      if (!mask[j]) continue;
      auto row = layer.weights.row(j);
      for (double& v : row) v += sigma * rng.normal();
    }
  }
  return out;
}

// Per conv layer: rank filters by L1 norm; the i-th smallest invalid filter
// receives the i-th largest valid filter (added to it, or copied over it).
inline ModelSnapshot graft_internal(const ModelSnapshot& model, const GraftConfig& cfg, const BinningConfig& bins = {}) {
  cfg.validate();
  ModelSnapshot out = model;
  for (auto& layer : out.layers) {
    if (layer.kind != LayerKind::conv) continue;
    const auto mask = invalid_filter_mask(layer, cfg.criterion, cfg.invalid_selector, bins);
    const auto order = ascending_order(filter_l1_norms(layer));
    std::vector<std::size_t> invalid, valid;
    for (std::size_t j : order) (mask[j] ? invalid : valid).push_back(j);
    if (invalid.size() > valid.size())
      throw GraftError("layer '" + layer.name + "' has " + std::to_string(invalid.size()) + " invalid filters but only " +
                       std::to_string(valid.size()) + " valid ones");
    const LayerWeights source = layer;
    for (std::size_t i = 0; i < invalid.size(); ++i) {
      const std::size_t dst = invalid[i];
      const std::size_t src = valid[valid.size() - 1 - i];
      auto to = layer.weights.row(dst);
      auto from = source.weights.row(src);
      if (cfg.internal_mode == InternalMode::add) {
        for (std::size_t k = 0; k < to.size(); ++k) to[k] = from[k] + source.weights.row(dst)[k];
        layer.bias[dst] = source.bias[dst] + source.bias[src];
      } else {
        std::copy(from.begin(), from.end(), to.begin());
        layer.bias[dst] = source.bias[src];
      }
    }
  }
  return out;
}

inline double layer_information(const LayerWeights& layer, LayerMeasure measure, const BinningConfig& bins) {
  if (measure == LayerMeasure::whole_layer) return layer_entropy(layer, bins);
  // Dense rows play the role of filters here.
  double s = 0.0;
  for (double h : filter_entropies(layer, bins)) s += h;
  return s;
}

struct GraftOutcome {
  ModelSnapshot model;
  std::vector<AlphaDecision> decisions;
};

inline double blend_coefficient(double h_self, double h_peer, const GraftConfig& cfg) {
  return cfg.weighting == Weighting::adaptive ? adaptive_alpha(h_self, h_peer, cfg.A, cfg.c) : cfg.fixed_alpha;
}

// Blends every weight-bearing layer of `self` with the same layer of `peer`:
// new = alpha * self + (1 - alpha) * peer, for weights and biases alike.
// With filter_level granularity only the invalid filters of self's conv
// layers are blended, each with the filter at the same index in peer.
inline GraftOutcome graft_external_pair(const ModelSnapshot& self, const ModelSnapshot& peer, const GraftConfig& cfg,
                                        const BinningConfig& bins = {}) {
  cfg.validate();
  bins.validate();
  if (auto mismatch = architecture_mismatch(self, peer))
    throw GraftError("snapshots are not architecture-compatible: " + *mismatch);
  GraftOutcome out{self, {}};
  for (std::size_t li = 0; li < self.layers.size(); ++li) {
    const auto& mine = self.layers[li];
    const auto& theirs = peer.layers[li];
    AlphaDecision d;
    d.layer_name = mine.name;
    d.h_self = layer_information(mine, cfg.layer_measure, bins);
    d.h_peer = layer_information(theirs, cfg.layer_measure, bins);
    d.alpha = blend_coefficient(d.h_self, d.h_peer, cfg);
    auto& target = out.model.layers[li];
    if (cfg.granularity == Granularity::filter_level && mine.kind == LayerKind::conv) {
      const auto mask = invalid_filter_mask(mine, cfg.criterion, cfg.invalid_selector, bins);
      const double beta = 1.0 - d.alpha;
      for (std::size_t j = 0; j < mask.size(); ++j) {
        if (!mask[j]) continue;
        auto dst = target.weights.row(j);
        auto a = mine.weights.row(j);
        auto b = theirs.weights.row(j);
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = d.alpha * a[k] + beta * b[k];
        target.bias[j] = d.alpha * mine.bias[j] + beta * theirs.bias[j];
      }
    } else {
      target.weights = linear_blend(mine.weights, theirs.weights, d.alpha);
      target.bias = linear_blend(mine.bias, theirs.bias, d.alpha);
    }
    out.decisions.push_back(std::move(d));
  }
  return out;
}

}  // namespace graft
