#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>

#include "bandgauge/rng.hpp"
#include "bandgauge/subjective.hpp"

using namespace bandgauge;

namespace {

double boost_grubbs(std::size_t n, double alpha) {
  const double N = static_cast<double>(n);
  boost::math::students_t dist(N - 2);
  const double t = boost::math::quantile(boost::math::complement(dist, alpha / (2 * N)));
  return (N - 1) / std::sqrt(N) * std::sqrt(t * t / (N - 2 + t * t));
}

std::vector<double> sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST(GrubbsStatistic, Examples) {
  EXPECT_EQ(grubbs_statistic(std::vector<double>{10, 10, 10}), 0.0);
  EXPECT_NEAR(grubbs_statistic(std::vector<double>{0, 0, 0, 0, 10}), 8.0 / std::sqrt(20.0), 1e-12);
  EXPECT_NEAR(grubbs_statistic(std::vector<double>{0, 0, 0, 0, 10}), 1.789, 1e-3);
  EXPECT_THROW(grubbs_statistic(std::vector<double>{1, 2}), InputError);
}

TEST(GrubbsStatistic, TranslationInvariant) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> s(3 + rng.below(20));
    for (auto& v : s) v = rng.uniform(0, 100);
    const double c = rng.uniform(-50, 50);
    auto shifted = s;
    for (auto& v : shifted) v += c;
    EXPECT_NEAR(grubbs_statistic(shifted), grubbs_statistic(s), 1e-9);
  }
}

TEST(GrubbsThreshold, PublishedTable) {
  const std::vector<std::pair<std::size_t, double>> table{{3, 1.1543}, {5, 1.7150}, {10, 2.2900}, {20, 2.7082}, {30, 2.9085}};
  for (auto [n, g] : table) EXPECT_NEAR(grubbs_threshold(n, 0.05), g, 1e-3) << n;
}

TEST(GrubbsThreshold, MatchesBoostQuantile) {
  for (double alpha : {0.01, 0.05, 0.1, 0.2})
    for (std::size_t n = 3; n <= 60; ++n) EXPECT_NEAR(grubbs_threshold(n, alpha), boost_grubbs(n, alpha), 1e-8) << n << " " << alpha;
}

TEST(GrubbsThreshold, Monotone) {
  for (std::size_t n = 4; n <= 50; ++n) EXPECT_GT(grubbs_threshold(n), grubbs_threshold(n - 1));
  for (double a = 0.02; a < 0.5; a += 0.02) EXPECT_LT(grubbs_threshold(10, a), grubbs_threshold(10, a - 0.01));
  EXPECT_THROW(grubbs_threshold(2), InputError);
  EXPECT_THROW(grubbs_threshold(10, 0.0), InputError);
}

TEST(RemoveOutliers, Examples) {
  const auto tight = remove_outliers(std::vector<double>{50, 51, 49, 52, 48});
  EXPECT_TRUE(tight.removed.empty());
  EXPECT_EQ(tight.kept.size(), 5u);

  const auto spike = remove_outliers(std::vector<double>{1, 1, 1, 1, 100});
  EXPECT_EQ(spike.removed, std::vector<double>{100});
  EXPECT_EQ(spike.kept, (std::vector<double>{1, 1, 1, 1}));
  EXPECT_EQ(mos(spike.kept), 1.0);
}

TEST(RemoveOutliers, ConjunctiveRuleIsStricter) {
  OutlierConfig cfg;
  cfg.rule = OutlierRule::grubbs_and_sd;
  // For N = 5 the largest attainable deviation is 4/sqrt(5) SD < 2.5 SD.
  EXPECT_TRUE(remove_outliers(std::vector<double>{1, 1, 1, 1, 100}, cfg).removed.empty());
  std::vector<double> big(20, 50.0);
  big[7] = 0.0;
  big[3] = 51;
  const auto r = remove_outliers(big, cfg);
  EXPECT_EQ(r.removed.front(), 0.0);
}

TEST(RemoveOutliers, TiesBrokenByLowestIndex) {
  OutlierConfig cfg;
  cfg.max_removals = 1;
  std::vector<double> s(20, 50.0);
  s[4] = 0.0;
  s[11] = 100.0;
  const auto r = remove_outliers(s, cfg);
  ASSERT_EQ(r.removed.size(), 1u);
  EXPECT_EQ(r.removed[0], 0.0);
}

TEST(RemoveOutliers, Properties) {
  Rng rng(5);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> s(3 + rng.below(25));
    for (auto& v : s) v = std::clamp(60 + 8 * rng.normal(), 0.0, 100.0);
    for (std::size_t k = 0; k < rng.below(4); ++k) s[rng.below(s.size())] = rng.below(2) ? 0.0 : 100.0;
    OutlierConfig cfg;
    if (rng.below(3) == 0) cfg.max_removals = rng.below(3);
    const auto r = remove_outliers(s, cfg);
    EXPECT_LE(r.removed.size(), cfg.max_removals);
    EXPECT_GE(r.kept.size(), std::min<std::size_t>(3, s.size()));
    EXPECT_EQ(r.kept.size() + r.removed.size(), s.size());
    if (cfg.max_removals == std::numeric_limits<std::size_t>::max()) {
      EXPECT_TRUE(remove_outliers(r.kept, cfg).removed.empty());
      auto perm = s;
      rng.shuffle(perm.begin(), perm.end());
      EXPECT_EQ(sorted(remove_outliers(perm, cfg).kept), sorted(r.kept));
    }
  }
}

TEST(Mos, Examples) {
  EXPECT_EQ(mos(std::vector<double>{50, 60, 70}), 60.0);
  EXPECT_EQ(mos(std::vector<double>{42.5}), 42.5);
  EXPECT_THROW(mos(std::vector<double>{}), InputError);
  const auto rec = aggregate({"img", {1, 1, 1, 1, 100}});
  EXPECT_EQ(rec.mos, 1.0);
  EXPECT_EQ(rec.n_kept, 4u);
  EXPECT_EQ(rec.n_removed, 1u);
  EXPECT_EQ(aggregate({"two", {10, 20}}).mos, 15.0);
  EXPECT_THROW(aggregate({"bad", {10, 120}}), InputError);
  EXPECT_THROW(aggregate({"none", {}}), InputError);
}
