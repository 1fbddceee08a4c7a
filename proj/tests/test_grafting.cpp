#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "graft/grafting.hpp"

using namespace graft;

namespace {

ArchSpec small_arch() {
  ArchSpec a;
  a.convs = {{6, 3}, {8, 3}};
  return a;
}

ModelSnapshot random_model(std::uint64_t seed) { return build_model(small_arch(), seed); }

// One conv layer whose filter j is the constant norms[j] / 9, followed by fc.
ModelSnapshot model_with_norms(const std::vector<double>& norms) {
  ModelSnapshot m;
  Tensor w({norms.size(), 1, 3, 3});
  for (std::size_t j = 0; j < norms.size(); ++j)
    for (double& v : w.row(j)) v = norms[j] / 9.0;
  Tensor b({norms.size()});
  for (std::size_t j = 0; j < norms.size(); ++j) b[j] = 10.0 * static_cast<double>(j + 1);
  m.layers.push_back({"conv1", LayerKind::conv, w, b});
  m.layers.push_back({"fc", LayerKind::dense, Tensor::full({2, norms.size()}, 0.5), Tensor::zeros({2})});
  return m;
}

GraftConfig threshold_cfg(double gamma) {
  GraftConfig c;
  c.criterion = Criterion::l1;
  c.invalid_selector = InvalidSelector::absolute_threshold(gamma);
  return c;
}

}  // namespace

TEST(AdaptiveAlpha, Examples) {
  EXPECT_EQ(adaptive_alpha(1.3, 1.3, 0.25, 50), 0.5);
  EXPECT_NEAR(adaptive_alpha(2.0, 1.0, 0.25, 1.0), 0.25 * std::atan(1.0) + 0.5, 1e-15);
  EXPECT_NEAR(adaptive_alpha(2.0, 1.0, 0.25, 1.0), 0.696349540849362, 1e-12);
  EXPECT_NEAR(adaptive_alpha(1e9, 0.0, 0.25, 50), 0.5 + 0.25 * std::numbers::pi / 2, 1e-9);
}

TEST(AdaptiveAlpha, ComplementAndBounds) {
  Rng r(1);
  const double A = 0.25;
  for (int i = 0; i < 1000; ++i) {
    const double hs = r.uniform(0, 3), hp = r.uniform(0, 3);
    const double a = adaptive_alpha(hs, hp, A, 50), b = adaptive_alpha(hp, hs, A, 50);
    EXPECT_EQ(a + b, 1.0);
    EXPECT_GT(a, 0.5 - A * std::numbers::pi / 2);
    EXPECT_LT(a, 0.5 + A * std::numbers::pi / 2);
  }
}

TEST(AdaptiveAlpha, RejectsBadParameters) {
  EXPECT_THROW(adaptive_alpha(0, 0, 0.0, 1), DomainError);
  EXPECT_THROW(adaptive_alpha(0, 0, 0.4, 1), DomainError);
  EXPECT_THROW(adaptive_alpha(0, 0, 0.2, 0), DomainError);
}

TEST(NoiseSigma, Examples) {
  EXPECT_EQ(noise_sigma(0, 0.9), 1.0);
  EXPECT_NEAR(noise_sigma(2, 0.9), 0.81, 1e-15);
  for (int t = 1; t <= 10; ++t) EXPECT_LT(noise_sigma(t, 0.5), noise_sigma(t - 1, 0.5));
  EXPECT_THROW(noise_sigma(1, 1.0), ConfigError);
  EXPECT_THROW(noise_sigma(1, 0.0), ConfigError);
}

TEST(GraftNoise, EmptyMaskIsIdentity) {
  const auto m = random_model(1);
  Rng r(2);
  EXPECT_EQ(graft_noise(m, 0, threshold_cfg(0.0), r), m);
}

TEST(GraftNoise, OnlyInvalidFiltersChange) {
  const auto m = model_with_norms({5, 3, 1, 0.5});
  Rng r(3);
  const auto g = graft_noise(m, 0, threshold_cfg(2.0), r);
  EXPECT_TRUE(std::equal(m.layers[0].weights.row(0).begin(), m.layers[0].weights.row(0).end(),
                         g.layers[0].weights.row(0).begin()));
  EXPECT_TRUE(std::equal(m.layers[0].weights.row(1).begin(), m.layers[0].weights.row(1).end(),
                         g.layers[0].weights.row(1).begin()));
  EXPECT_FALSE(std::equal(m.layers[0].weights.row(2).begin(), m.layers[0].weights.row(2).end(),
                          g.layers[0].weights.row(2).begin()));
  EXPECT_EQ(g.layers[1], m.layers[1]);
}

TEST(GraftNoise, RaisesNormsOfTinyFiltersOnAverage) {
  const auto m = model_with_norms({5, 3, 0.01, 0.005});
  double before = 0.0, after = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng r(s);
    const auto g = graft_noise(m, 0, threshold_cfg(2.0), r);
    for (std::size_t j : {2u, 3u}) {
      before += l1_norm(m.layers[0].weights.row(j));
      after += l1_norm(g.layers[0].weights.row(j));
    }
  }
  EXPECT_GT(after, before);
}

TEST(GraftNoise, Deterministic) {
  const auto m = random_model(4);
  Rng a(9), b(9);
  EXPECT_EQ(graft_noise(m, 3, GraftConfig{}, a), graft_noise(m, 3, GraftConfig{}, b));
}

TEST(GraftInternal, ReplacePairsSmallestWithLargest) {
  const auto m = model_with_norms({5, 3, 1, 0.5});
  auto cfg = threshold_cfg(2.0);
  cfg.internal_mode = InternalMode::replace;
  const auto g = graft_internal(m, cfg);
  const auto& w = g.layers[0].weights;
  const auto norms = filter_l1_norms(g.layers[0]);
  // The norm-0.5 filter (index 3) is the smallest invalid one and receives
  // the largest valid filter; the norm-1 filter receives the next largest.
  EXPECT_DOUBLE_EQ(norms[3], 5.0);
  EXPECT_DOUBLE_EQ(norms[2], 3.0);
  EXPECT_EQ(g.layers[0].bias[3], m.layers[0].bias[0]);
  EXPECT_EQ(g.layers[0].bias[2], m.layers[0].bias[1]);
  EXPECT_TRUE(std::equal(w.row(0).begin(), w.row(0).end(), m.layers[0].weights.row(0).begin()));
  EXPECT_TRUE(std::equal(w.row(1).begin(), w.row(1).end(), m.layers[0].weights.row(1).begin()));
}

TEST(GraftInternal, AddModeSumsPairedFilters) {
  Rng r(5);
  auto m = random_model(5);
  auto cfg = GraftConfig{};
  cfg.criterion = Criterion::l1;
  const auto g = graft_internal(m, cfg);
  for (std::size_t li = 0; li < 2; ++li) {
    const auto& src = m.layers[li];
    const auto mask = invalid_filter_mask(src, Criterion::l1, cfg.invalid_selector);
    const auto order = ascending_order(filter_l1_norms(src));
    std::vector<std::size_t> inv, val;
    for (auto j : order) (mask[j] ? inv : val).push_back(j);
    for (std::size_t i = 0; i < inv.size(); ++i) {
      const auto x = src.weights.row(inv[i]);
      const auto y = src.weights.row(val[val.size() - 1 - i]);
      const auto z = g.layers[li].weights.row(inv[i]);
      for (std::size_t k = 0; k < z.size(); ++k) EXPECT_EQ(z[k], x[k] + y[k]);
    }
  }
}

TEST(GraftInternal, NoInvalidIsIdentity) {
  const auto m = random_model(6);
  EXPECT_EQ(graft_internal(m, threshold_cfg(0.0)), m);
}

TEST(GraftInternal, TooManyInvalidNamesLayer) {
  const auto m = model_with_norms({5, 1, 1, 0.5});
  try {
    graft_internal(m, threshold_cfg(2.0));
    FAIL();
  } catch (const GraftError& e) {
    EXPECT_NE(std::string(e.what()).find("conv1"), std::string::npos);
  }
}

TEST(GraftExternal, IdenticalSnapshotsAreFixedPoint) {
  const auto m = random_model(7);
  const auto g = graft_external_pair(m, m, GraftConfig{});
  EXPECT_EQ(g.model, m);
  for (const auto& d : g.decisions) EXPECT_EQ(d.alpha, 0.5);
}

TEST(GraftExternal, FixedHalfIsMidpoint) {
  auto a = random_model(8), b = a;
  for (auto& l : a.layers) l.weights = Tensor::full(l.weights.shape(), 1.0);
  for (auto& l : b.layers) l.weights = Tensor::zeros(l.weights.shape());
  GraftConfig cfg;
  cfg.weighting = Weighting::fixed;
  cfg.fixed_alpha = 0.5;
  const auto g = graft_external_pair(a, b, cfg);
  for (const auto& l : g.model.layers) EXPECT_EQ(l.weights, Tensor::full(l.weights.shape(), 0.5));
}

TEST(GraftExternal, MatchesComposedPrimitives) {
  const auto a = random_model(9), b = random_model(10);
  const GraftConfig cfg;
  const auto g = graft_external_pair(a, b, cfg);
  ASSERT_EQ(g.decisions.size(), a.layers.size());
  for (std::size_t li = 0; li < a.layers.size(); ++li) {
    const double hs = layer_entropy(a.layers[li]), hp = layer_entropy(b.layers[li]);
    const double alpha = adaptive_alpha(hs, hp, cfg.A, cfg.c);
    EXPECT_EQ(g.decisions[li].alpha, alpha);
    EXPECT_EQ(g.model.layers[li].weights, linear_blend(a.layers[li].weights, b.layers[li].weights, alpha));
    EXPECT_EQ(g.model.layers[li].bias, linear_blend(a.layers[li].bias, b.layers[li].bias, alpha));
  }
}

TEST(GraftExternal, MutualGraftConverges) {
  const auto a = random_model(11), b = random_model(12);
  EXPECT_EQ(graft_external_pair(a, b, GraftConfig{}).model.layers,
            graft_external_pair(b, a, GraftConfig{}).model.layers);
}

TEST(GraftExternal, FilterLevelTouchesOnlyInvalidRows) {
  const auto a = random_model(13), b = random_model(14);
  GraftConfig cfg;
  cfg.granularity = Granularity::filter_level;
  cfg.criterion = Criterion::l1;
  const auto g = graft_external_pair(a, b, cfg);
  const auto mask = invalid_filter_mask(a.layers[0], Criterion::l1, cfg.invalid_selector);
  for (std::size_t j = 0; j < mask.size(); ++j) {
    const bool same = std::equal(a.layers[0].weights.row(j).begin(), a.layers[0].weights.row(j).end(),
                                 g.model.layers[0].weights.row(j).begin());
    EXPECT_EQ(same, !mask[j]) << "filter " << j;
  }
}

TEST(GraftExternal, FilterSumMeasureUsesPerFilterEntropies) {
  const auto a = random_model(15), b = random_model(16);
  GraftConfig cfg;
  cfg.layer_measure = LayerMeasure::filter_sum;
  const auto g = graft_external_pair(a, b, cfg);
  EXPECT_EQ(g.decisions[0].h_self, layer_info_sum(a.layers[0]));
  EXPECT_EQ(g.decisions[0].h_peer, layer_info_sum(b.layers[0]));
}

TEST(GraftExternal, IncompatibleSnapshotsRejected) {
  const auto a = random_model(1);
  auto b = build_model(ArchSpec{}, 2);
  EXPECT_THROW(graft_external_pair(a, b, GraftConfig{}), GraftError);
}

TEST(GraftConfig, Validation) {
  GraftConfig c;
  c.A = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.c = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.weighting = Weighting::fixed;
  c.fixed_alpha = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(GraftOps, PreserveArchitecture) {
  Rng r(20);
  for (int trial = 0; trial < 20; ++trial) {
    ArchSpec arch;
    arch.convs = {{2 + r.below(6), 3}, {2 + r.below(6), 1 + 2 * r.below(2)}};
    arch.class_count = 2 + r.below(3);
    const auto a = build_model(arch, r.next_u64()), b = build_model(arch, r.next_u64());
    Rng nr(trial);
    GraftConfig cfg;
    cfg.invalid_selector = InvalidSelector::bottom_fraction(0.4);
    EXPECT_FALSE(architecture_mismatch(a, graft_noise(a, trial, cfg, nr)));
    EXPECT_FALSE(architecture_mismatch(a, graft_internal(a, cfg)));
    EXPECT_FALSE(architecture_mismatch(a, graft_external_pair(a, b, cfg).model));
  }
}
