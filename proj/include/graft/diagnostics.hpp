#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "graft/criteria.hpp"
#include "graft/error.hpp"
#include "graft/model.hpp"

namespace graft {

inline const std::vector<double>& default_thresholds() {
  static const std::vector<double> grid{1e-4, 1e-3, 1e-2, 1e-1};
  return grid;
}

struct ThresholdRatio {
  double threshold = 0.0;
  double fraction = 0.0;
  friend bool operator==(const ThresholdRatio&, const ThresholdRatio&) = default;
};

// Fraction of conv filters, pooled over all conv layers, whose L1 norm is
// strictly below each threshold.
inline std::vector<ThresholdRatio> invalid_ratio(const ModelSnapshot& model,
                                                 const std::vector<double>& thresholds = default_thresholds()) {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0)) throw DomainError("thresholds must be positive");
    if (i && !(thresholds[i - 1] <= thresholds[i])) throw DomainError("thresholds must be sorted ascending");
  }
  std::vector<double> norms;
  for (const auto& l : model.layers)
    if (l.kind == LayerKind::conv)
      for (double n : filter_l1_norms(l)) norms.push_back(n);
  std::vector<ThresholdRatio> out;
  for (double t : thresholds) {
    std::size_t below = 0;
    for (double n : norms)
      if (n < t) ++below;
    out.push_back({t, norms.empty() ? 0.0 : static_cast<double>(below) / static_cast<double>(norms.size())});
  }
  return out;
}

// Sum of whole-layer entropies over every weight-bearing layer.
inline double network_information(const ModelSnapshot& model, const BinningConfig& bins = {}) {
  double s = 0.0;
  for (const auto& l : model.layers) s += layer_entropy(l, bins);
  return s;
}

struct LayerIou {
  std::string layer;
  double iou = 1.0;
  friend bool operator==(const LayerIou&, const LayerIou&) = default;
};

// Per conv layer, IoU of the bottom-`fraction` filter index sets of a and b.
// Two empty sets count as identical (IoU 1).
inline std::vector<LayerIou> invalid_location_iou(const ModelSnapshot& a, const ModelSnapshot& b, double fraction,
                                                  Criterion criterion = Criterion::l1,
                                                  const BinningConfig& bins = {}) {
  if (auto mismatch = architecture_mismatch(a, b))
    throw GraftError("snapshots are not architecture-compatible: " + *mismatch);
  const auto sel = InvalidSelector::bottom_fraction(fraction);
  sel.validate();
  std::vector<LayerIou> out;
  for (std::size_t li = 0; li < a.layers.size(); ++li) {
    if (a.layers[li].kind != LayerKind::conv) continue;
    const auto ma = invalid_filter_mask(a.layers[li], criterion, sel, bins);
    const auto mb = invalid_filter_mask(b.layers[li], criterion, sel, bins);
    std::size_t inter = 0, uni = 0;
    for (std::size_t j = 0; j < ma.size(); ++j) {
      inter += ma[j] && mb[j];
      uni += ma[j] || mb[j];
    }
    out.push_back({a.layers[li].name, uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni)});
  }
  return out;
}

struct LayerDiagnostics {
  std::string name;
  LayerKind kind = LayerKind::conv;
  std::vector<double> l1;              // per out-filter
  std::vector<double> filter_entropy;  // per out-filter
  std::optional<double> filter_entropy_sum;  // conv layers only
  double layer_entropy = 0.0;
};

struct DiagnosticsReport {
  int epoch = 0;
  int worker_id = 0;
  std::string tag;
  std::string config_hash;
  BinningConfig bins;
  std::vector<LayerDiagnostics> layers;
  double network_information = 0.0;
  std::vector<ThresholdRatio> invalid_ratio;
  std::optional<double> iou_fraction;
  std::vector<LayerIou> iou;
};

inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << h;
  return out.str();
}

inline DiagnosticsReport analyze_model(const ModelSnapshot& model, const BinningConfig& bins = {},
                                       const std::vector<double>& thresholds = default_thresholds(),
                                       const ModelSnapshot* peer = nullptr, double iou_fraction = 0.2) {
  bins.validate();
  DiagnosticsReport r;
  r.epoch = model.epoch;
  r.worker_id = model.worker_id;
  r.tag = model.tag;
  r.bins = bins;
  for (const auto& l : model.layers) {
    LayerDiagnostics d;
    d.name = l.name;
    d.kind = l.kind;
    d.l1 = filter_l1_norms(l);
    d.filter_entropy = filter_entropies(l, bins);
    if (l.kind == LayerKind::conv) d.filter_entropy_sum = layer_info_sum(l, bins);
    d.layer_entropy = layer_entropy(l, bins);
    r.network_information += d.layer_entropy;
    r.layers.push_back(std::move(d));
  }
  r.invalid_ratio = invalid_ratio(model, thresholds);
  if (peer) {
    r.iou_fraction = iou_fraction;
    r.iou = invalid_location_iou(model, *peer, iou_fraction, Criterion::l1, bins);
  }
  std::ostringstream key;
  key.precision(17);
  key << "bins=" << bins.bin_count << ";range=" << (bins.range_mode == RangeMode::fixed ? "fixed" : "minmax");
  if (bins.range_mode == RangeMode::fixed) key << ':' << bins.lo << ':' << bins.hi;
  key << ";thresholds=";
  for (double t : thresholds) key << t << ',';
  if (peer) key << ";iou=" << iou_fraction;
  r.config_hash = fnv1a_hex(key.str());
  return r;
}

}  // namespace graft
