#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "minimax/metrics.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace minimax {
namespace {

using testing::Rng;

struct Labelled {
  std::vector<double> scores;
  std::vector<int> labels;
};

// Scores drawn from a small lattice so ties are common.
Labelled random_instance(Rng& rng, int n) {
  Labelled d;
  const bool coarse = rng.uniform() < 0.5;
  for (int i = 0; i < n; ++i) {
    const int y = static_cast<int>(rng.integer(0, 1));
    const double s = coarse ? static_cast<double>(rng.integer(0, 6)) + 0.5 * y
                            : rng.uniform() + 0.3 * y;
    d.scores.push_back(s);
    d.labels.push_back(y);
  }
  d.labels[0] = 1;
  d.labels[1] = 0;
  return d;
}

oracle::Grid random_grid(Rng& rng, int h, int w) {
  oracle::Grid g{h, w, {}, {}};
  g.mask.assign(static_cast<std::size_t>(h * w), 0);
  const int blobs = static_cast<int>(rng.integer(1, 3));
  for (int b = 0; b < blobs; ++b) {
    const int r0 = static_cast<int>(rng.integer(0, h - 1)), c0 = static_cast<int>(rng.integer(0, w - 1));
    const int rh = static_cast<int>(rng.integer(1, 4)), cw = static_cast<int>(rng.integer(1, 4));
    for (int r = r0; r < std::min(h, r0 + rh); ++r)
      for (int c = c0; c < std::min(w, c0 + cw); ++c) g.mask[r * w + c] = 1;
  }
  const bool coarse = rng.uniform() < 0.3;
  for (int p = 0; p < h * w; ++p) {
    const double base = coarse ? static_cast<double>(rng.integer(0, 9)) : rng.uniform();
    g.score.push_back(base + (g.mask[p] ? rng.uniform(0.0, 0.8) : 0.0));
  }
  return g;
}

void to_maps(const std::vector<oracle::Grid>& grids, std::vector<ScoreMap>& s,
             std::vector<MaskMap>& m) {
  for (const auto& g : grids) {
    ScoreMap sm(g.h, g.w);
    MaskMap mm(g.h, g.w);
    for (int r = 0; r < g.h; ++r)
      for (int c = 0; c < g.w; ++c) {
        sm(r, c) = g.score[r * g.w + c];
        mm(r, c) = static_cast<unsigned char>(g.mask[r * g.w + c]);
      }
    s.push_back(sm);
    m.push_back(mm);
  }
}

// ---------------------------------------------------------------------------

TEST(AurocTest, Examples) {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  EXPECT_EQ(auroc(s, std::vector<int>{1, 1, 0, 0}), 1.0);
  EXPECT_EQ(auroc(s, std::vector<int>{0, 0, 1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{0.9, 0.6, 0.4, 0.1}, std::vector<int>{1, 0, 1, 0}),
                   0.75);
}

TEST(AurocTest, SingleClassIsUndefined) {
  const std::vector<double> s{0.1, 0.2};
  EXPECT_THROW(auroc(s, std::vector<int>{1, 1}), UndefinedMetricError);
  EXPECT_THROW(auroc(s, std::vector<int>{0, 0}), UndefinedMetricError);
  EXPECT_THROW(auroc(s, std::vector<int>{1}), ContractError);
}

TEST(AurocTest, NegatedScoresComplement) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < 40; ++i) {
      s.push_back(rng.uniform());
      y.push_back(i % 3 == 0);
    }
    std::vector<double> neg(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) neg[i] = -s[i];
    EXPECT_NEAR(auroc(s, y) + auroc(neg, y), 1.0, 1e-12);
  }
}

TEST(AveragePrecisionTest, Examples) {
  EXPECT_EQ(average_precision(std::vector<double>{0.9, 0.8, 0.2}, std::vector<int>{1, 1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(
      average_precision(std::vector<double>{0.9, 0.6, 0.4}, std::vector<int>{0, 1, 0}), 0.5);
  EXPECT_EQ(average_precision(std::vector<double>{0.7, 0.2}, std::vector<int>{1, 0}), 1.0);
  EXPECT_THROW(average_precision(std::vector<double>{0.7}, std::vector<int>{0}),
               UndefinedMetricError);
}

TEST(F1MaxTest, Examples) {
  EXPECT_EQ(f1_max(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(f1_max(std::vector<double>{0.9, 0.6, 0.4, 0.1}, std::vector<int>{1, 0, 1, 0}),
                   0.8);
  EXPECT_EQ(f1_max(std::vector<double>{0.3, 0.2, 0.9}, std::vector<int>{1, 1, 1}), 1.0);
  EXPECT_THROW(f1_max(std::vector<double>{0.7}, std::vector<int>{0}), UndefinedMetricError);
}

TEST(RankingMetricsTest, MatchExhaustiveOracles) {
  Rng rng(32);
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = random_instance(rng, static_cast<int>(rng.integer(2, 200)));
    EXPECT_NEAR(auroc(d.scores, d.labels), oracle::auroc(d.scores, d.labels), 1e-12);
    EXPECT_NEAR(average_precision(d.scores, d.labels),
                oracle::average_precision(d.scores, d.labels), 1e-12);
    EXPECT_NEAR(f1_max(d.scores, d.labels), oracle::f1_max(d.scores, d.labels), 1e-12);
  }
}

TEST(RankingMetricsTest, InvariantUnderIncreasingTransform) {
  Rng rng(33);
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = random_instance(rng, 60);
    std::vector<double> t;
    for (double s : d.scores) t.push_back(std::exp(3 * s) - 2);
    EXPECT_NEAR(auroc(t, d.labels), auroc(d.scores, d.labels), 1e-12);
    EXPECT_NEAR(average_precision(t, d.labels), average_precision(d.scores, d.labels), 1e-12);
    EXPECT_NEAR(f1_max(t, d.labels), f1_max(d.scores, d.labels), 1e-12);
  }
}

// ---------------------------------------------------------------------------

TEST(ConnectedComponentsTest, DiagonalTouchDependsOnConnectivity) {
  MaskMap m = MaskMap::Zero(3, 3);
  m(0, 0) = 1;
  m(1, 1) = 1;
  m(2, 0) = 1;
  int n8 = 0, n4 = 0;
  connected_components(m, Connectivity::Eight, &n8);
  const auto l4 = connected_components(m, Connectivity::Four, &n4);
  EXPECT_EQ(n8, 1);
  EXPECT_EQ(n4, 3);
  EXPECT_EQ(l4(0, 1), -1);
}

TEST(AuproTest, PerfectScoresGiveOne) {
  Rng rng(34);
  std::vector<oracle::Grid> grids{random_grid(rng, 16, 16), random_grid(rng, 16, 16)};
  for (auto& g : grids)
    for (std::size_t p = 0; p < g.score.size(); ++p) g.score[p] = g.mask[p];
  std::vector<ScoreMap> s;
  std::vector<MaskMap> m;
  to_maps(grids, s, m);
  EXPECT_NEAR(aupro(s, m), 1.0, 1e-12);
}

TEST(AuproTest, ConstantScoresTraceTheDiagonal) {
  std::vector<ScoreMap> s{ScoreMap::Constant(8, 8, 0.4)};
  MaskMap mask = MaskMap::Zero(8, 8);
  mask.block(2, 2, 3, 3).setOnes();
  std::vector<MaskMap> m{mask};
  // The curve is the straight segment (0,0)-(1,1): area cap^2/2 over cap.
  EXPECT_DOUBLE_EQ(aupro(s, m, {1.0, Connectivity::Eight}), 0.5);
  EXPECT_DOUBLE_EQ(aupro(s, m, {0.3, Connectivity::Eight}), 0.15);
}

TEST(AuproTest, NoRegionsOrNoNormalsAreUndefined) {
  std::vector<ScoreMap> s{ScoreMap::Constant(4, 4, 0.1)};
  EXPECT_THROW(aupro(s, {MaskMap::Zero(4, 4)}), UndefinedMetricError);
  EXPECT_THROW(aupro(s, {MaskMap::Ones(4, 4)}), UndefinedMetricError);
}

TEST(AuproTest, MatchesExhaustiveOracle) {
  Rng rng(35);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<oracle::Grid> grids;
    const int images = static_cast<int>(rng.integer(1, 3));
    for (int i = 0; i < images; ++i) grids.push_back(random_grid(rng, 16, 16));
    std::vector<ScoreMap> s;
    std::vector<MaskMap> m;
    to_maps(grids, s, m);
    for (double cap : {0.3, 1.0, 0.05})
      EXPECT_NEAR(aupro(s, m, {cap, Connectivity::Eight}), oracle::aupro(grids, cap), 1e-9)
          << "trial " << trial << " cap " << cap;
  }
}

TEST(AuproTest, SinglePixelRegionMatchesRocOnItsIndicator) {
  Rng rng(36);
  for (int trial = 0; trial < 20; ++trial) {
    ScoreMap s(6, 6);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.uniform();
    MaskMap m = MaskMap::Zero(6, 6);
    m(static_cast<int>(rng.integer(0, 5)), static_cast<int>(rng.integer(0, 5))) = 1;
    std::vector<double> flat(s.data(), s.data() + s.size());
    std::vector<int> y(m.data(), m.data() + m.size());
    EXPECT_NEAR(aupro({s}, {m}, {1.0, Connectivity::Eight}), auroc(flat, y), 1e-12);
  }
}

// ---------------------------------------------------------------------------

TEST(MadTest, ReproducesPublishedRow) {
  MetricReport r;
  r.i_auroc = 98.8;
  r.i_ap = 99.6;
  r.i_f1max = 97.7;
  r.p_auroc = 96.1;
  r.p_ap = 58.5;
  r.p_f1max = 59.5;
  r.aupro = 92.2;
  EXPECT_EQ(std::round(mad(r) * 10) / 10, 86.1);
}

TEST(MadTest, ArithmeticAndMissingFields) {
  MetricReport r;
  EXPECT_THROW(mad(r), ContractError);
  r.i_auroc = r.i_ap = r.i_f1max = r.p_auroc = r.p_ap = r.p_f1max = 0;
  EXPECT_THROW(mad(r), ContractError);
  r.aupro = 7;
  EXPECT_DOUBLE_EQ(mad(r), 1.0);
  r.i_auroc = r.i_ap = r.i_f1max = r.p_auroc = r.p_ap = r.p_f1max = r.aupro = 1.0;
  EXPECT_DOUBLE_EQ(mad(r), 1.0);
}

TEST(ComputeMetricsTest, OracleScorerGivesPerfectPixelMetrics) {
  Rng rng(37);
  EvalSet set;
  for (int i = 0; i < 4; ++i) {
    auto g = random_grid(rng, 12, 12);
    if (i % 2 == 0) std::fill(g.mask.begin(), g.mask.end(), 0);
    for (std::size_t p = 0; p < g.score.size(); ++p) g.score[p] = g.mask[p];
    std::vector<ScoreMap> s;
    std::vector<MaskMap> m;
    to_maps({g}, s, m);
    set.pixel_scores.push_back(s[0]);
    set.pixel_masks.push_back(m[0]);
    set.image_labels.push_back(i % 2);
    set.image_scores.push_back(s[0].maxCoeff());
  }
  const auto r = compute_metrics(set);
  for (double v : r.fields()) EXPECT_DOUBLE_EQ(v, 1.0);
  EXPECT_DOUBLE_EQ(mad(r), 1.0);
}

}  // namespace
}  // namespace minimax
