#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/distributions/fisher_f.hpp>
#include <cmath>
#include <numeric>

#include "bandgauge/eval.hpp"
#include "bandgauge/rng.hpp"

using namespace bandgauge;
using namespace bandgauge::eval;

namespace {

using Vec = std::vector<double>;

Vec naive_ranks(const Vec& v) {
  Vec r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, eq = 0;
    for (double w : v) less += w < v[i], eq += w == v[i];
    r[i] = less + (eq + 1) / 2;
  }
  return r;
}

double naive_pearson(const Vec& x, const Vec& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n, my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

double naive_tau_b(const Vec& x, const Vec& y) {
  double c = 0, d = 0, tx = 0, ty = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double a = x[i] - x[j], b = y[i] - y[j];
      if (a == 0 && b == 0) continue;
      if (a == 0) tx += 1;
      else if (b == 0) ty += 1;
      else if (a * b > 0) c += 1;
      else d += 1;
    }
  return (c - d) / std::sqrt((c + d + tx) * (c + d + ty));
}

double naive_auroc(const Vec& s, const std::vector<int>& l) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (l[i] == 1 && l[j] == 0) {
        den += 1;
        num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return num / den;
}

// Precision at each distinct threshold times the recall gained there.
double naive_auprc(const Vec& s, const std::vector<int>& l) {
  Vec thr(s);
  std::sort(thr.begin(), thr.end(), std::greater<>());
  thr.erase(std::unique(thr.begin(), thr.end()), thr.end());
  const double pos = std::count(l.begin(), l.end(), 1);
  double prev = 0, area = 0;
  for (double t : thr) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= t) (l[i] ? tp : fp) += 1;
    area += (tp / pos - prev) * tp / (tp + fp);
    prev = tp / pos;
  }
  return area;
}

double exhaustive_accuracy(const Vec& s, const std::vector<int>& l) {
  Vec cand(s);
  std::sort(cand.begin(), cand.end());
  cand.push_back(cand.back() + 1);
  double best = 0;
  for (double t : cand) best = std::max(best, accuracy_at(s, l, t));
  return best;
}

Vec random_vec(Rng& rng, std::size_t n, bool ties) {
  Vec v(n);
  for (auto& x : v) x = ties ? static_cast<double>(rng.below(6)) : rng.uniform(-3, 3);
  return v;
}

}  // namespace

TEST(Correlation, SrccExamples) {
  const Vec x{1, 2, 3, 4, 5};
  Vec neg(x);
  for (auto& v : neg) v = -v;
  EXPECT_NEAR(srcc(x, x), 1.0, 1e-15);
  EXPECT_NEAR(srcc(x, neg), -1.0, 1e-15);
  EXPECT_NEAR(srcc(Vec{1, 2, 3, 4}, Vec{1, 3, 2, 4}), 0.8, 1e-12);
  EXPECT_THROW(srcc(Vec{1, 1, 1}, Vec{1, 2, 3}), InputError);
  EXPECT_THROW(srcc(Vec{1, 2}, Vec{1, 2, 3}), InputError);
}

TEST(Correlation, KrccExamples) {
  EXPECT_NEAR(krcc(Vec{1, 2, 3, 4}, Vec{10, 20, 30, 40}), 1.0, 1e-15);
  EXPECT_NEAR(krcc(Vec{1, 2, 3}, Vec{2, 1, 3}), 1.0 / 3, 1e-12);
  EXPECT_NEAR(krcc(Vec{1, 2, 3, 4}, Vec{4, 3, 2, 1}), -1.0, 1e-15);
  EXPECT_THROW(krcc(Vec{2, 2, 2}, Vec{1, 2, 3}), InputError);
}

TEST(Correlation, MatchNaiveReference) {
  Rng rng(21);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 4 + rng.below(197);
    const bool ties = t % 2 == 1;
    const Vec x = random_vec(rng, n, ties), y = random_vec(rng, n, ties);
    if (naive_ranks(x) == Vec(n, (n + 1) / 2.0) || naive_ranks(y) == Vec(n, (n + 1) / 2.0)) continue;
    EXPECT_NEAR(srcc(x, y), naive_pearson(naive_ranks(x), naive_ranks(y)), 1e-10);
    EXPECT_NEAR(krcc(x, y), naive_tau_b(x, y), 1e-10);
    EXPECT_NEAR(pearson(x, y), naive_pearson(x, y), 1e-10);
  }
}

TEST(Correlation, InvariantUnderMonotoneTransforms) {
  Rng rng(22);
  for (int t = 0; t < 50; ++t) {
    const Vec x = random_vec(rng, 40, t % 2), y = random_vec(rng, 40, t % 2);
    Vec fx(x), fy(y);
    for (auto& v : fx) v = std::exp(v) + 3;
    for (auto& v : fy) v = -1.0 / (5 + v);
    EXPECT_NEAR(srcc(fx, fy), srcc(x, y), 1e-12);
    EXPECT_NEAR(krcc(fx, fy), krcc(x, y), 1e-12);
  }
}

TEST(Logistic, RecoversGeneratingCurve) {
  Rng rng(23);
  for (int t = 0; t < 20; ++t) {
    const Logistic5Params truth{rng.uniform(20, 60), rng.uniform(0.5, 3), rng.uniform(-1, 1), rng.uniform(-2, 2), rng.uniform(30, 60)};
    Vec x(50), y(50);
    for (std::size_t i = 0; i < 50; ++i) {
      x[i] = rng.uniform(-3, 3);
      y[i] = truth(x[i]);
    }
    const auto fit = fit_logistic5(x, y);
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    EXPECT_LE(fit.rmse, 1e-4 * (*hi - *lo)) << t;
  }
}

TEST(Logistic, IdentityData) {
  Vec x(30);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i) * 0.37 - 2;
  const auto fit = fit_logistic5(x, x);
  EXPECT_LE(fit.rmse, 1e-6);
  const auto pr = plcc_rmse(x, x);
  EXPECT_NEAR(pr.plcc, 1.0, 1e-9);
  EXPECT_LE(pr.rmse, 1e-6);
}

TEST(Logistic, OrderInvariantAndNestsLinear) {
  Rng rng(24);
  for (int t = 0; t < 20; ++t) {
    Vec x(40), y(40);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = rng.uniform(0, 10);
      y[i] = 20 + 60 / (1 + std::exp(-(x[i] - 5))) + 5 * rng.normal();
    }
    const auto a = fit_logistic5(x, y);
    std::vector<std::size_t> perm(x.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    Vec px(x.size()), py(y.size());
    for (std::size_t i = 0; i < perm.size(); ++i) px[i] = x[perm[i]], py[i] = y[perm[i]];
    const auto b = fit_logistic5(px, py);
    EXPECT_EQ(a.rmse, b.rmse);
    EXPECT_EQ(a.b1, b.b1);

    const auto [slope, icpt] = linear_fit(x, y);
    double lin = 0;
    for (std::size_t i = 0; i < x.size(); ++i) lin += std::pow(slope * x[i] + icpt - y[i], 2);
    EXPECT_LE(a.rmse * a.rmse * static_cast<double>(x.size()), lin + 1e-9);
  }
}

TEST(PlccRmse, RandomPermutationAndShift) {
  Rng rng(25);
  Vec x(200), y;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  y = x;
  rng.shuffle(y.begin(), y.end());
  EXPECT_LT(std::abs(plcc_rmse(x, y).plcc), 0.2);

  Vec a(60), b(60);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.uniform(0, 1);
    b[i] = 40 * a[i] + 10 + rng.normal();
  }
  const auto base = plcc_rmse(a, b);
  Vec bs(b);
  for (auto& v : bs) v += 7;
  EXPECT_NEAR(plcc_rmse(a, bs).rmse, base.rmse, 1e-6);
}

TEST(RocPr, Examples) {
  const std::vector<int> l{0, 0, 1, 1};
  EXPECT_NEAR(roc_pr(Vec{0.1, 0.4, 0.35, 0.8}, l).auroc, 0.75, 1e-15);
  EXPECT_EQ(roc_pr(Vec{0.1, 0.2, 0.8, 0.9}, l).auroc, 1.0);
  EXPECT_EQ(roc_pr(Vec{0.1, 0.2, 0.8, 0.9}, l).auprc, 1.0);
  EXPECT_THROW(roc_pr(Vec{0.1, 0.2}, std::vector<int>{1, 1}), InputError);
  EXPECT_THROW(roc_pr(Vec{0.1, 0.2}, std::vector<int>{1, 2}), InputError);

  Rng rng(26);
  Vec s(1000);
  std::vector<int> r(1000);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = rng.uniform(), r[i] = static_cast<int>(rng.below(2));
  const double auc = roc_pr(s, r).auroc;
  EXPECT_GE(auc, 0.45);
  EXPECT_LE(auc, 0.55);
}

TEST(RocPr, MatchesNaiveAndComplement) {
  Rng rng(27);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 4 + rng.below(197);
    const bool ties = t % 2 == 1;
    Vec s = random_vec(rng, n, ties);
    std::vector<int> l(n);
    for (auto& v : l) v = static_cast<int>(rng.below(2));
    l[0] = 0, l[1] = 1;
    const auto r = roc_pr(s, l);
    EXPECT_NEAR(r.auroc, naive_auroc(s, l), 1e-10);
    EXPECT_NEAR(r.auprc, naive_auprc(s, l), 1e-10);
    Vec neg(s);
    for (auto& v : neg) v = -v;
    EXPECT_NEAR(r.auroc + roc_pr(neg, l).auroc, 1.0, 1e-10);
  }
}

TEST(ThresholdSearch, Examples) {
  const auto sep = threshold_search(Vec{0.1, 0.2, 0.7, 0.9}, std::vector<int>{0, 0, 1, 1});
  EXPECT_EQ(sep.accuracy, 1.0);
  EXPECT_GT(sep.threshold, 0.2);
  EXPECT_LE(sep.threshold, 0.7);
  const auto one = threshold_search(Vec{0.3, 0.5, 0.4}, std::vector<int>{1, 1, 1});
  EXPECT_EQ(one.accuracy, 1.0);
  EXPECT_LE(one.threshold, 0.3);
  const auto zero = threshold_search(Vec{0.3, 0.5, 0.4}, std::vector<int>{0, 0, 0});
  EXPECT_EQ(zero.accuracy, 1.0);
  EXPECT_GT(zero.threshold, 0.5);
}

TEST(ThresholdSearch, MatchesExhaustive) {
  Rng rng(28);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 4 + rng.below(97);
    Vec s = random_vec(rng, n, t % 2);
    std::vector<int> l(n);
    for (std::size_t i = 0; i < n; ++i) l[i] = rng.uniform() < 1 / (1 + std::exp(-s[i])) ? 1 : 0;
    const auto r = threshold_search(s, l);
    EXPECT_EQ(r.accuracy, exhaustive_accuracy(s, l));
    EXPECT_EQ(accuracy_at(s, l, r.threshold), r.accuracy);
  }
}

TEST(FTest, Examples) {
  Rng rng(29);
  Vec a(100), b(100);
  for (std::size_t i = 0; i < 100; ++i) b[i] = rng.normal();
  const double sb = std::sqrt(stats::sample_variance(b));
  for (std::size_t i = 0; i < 100; ++i) a[i] = b[i] / 10;
  const auto r = ftest_significance(a, b);
  EXPECT_NEAR(r.f, 0.01, 1e-12);
  EXPECT_NEAR(r.critical, 0.72, 0.01);
  EXPECT_TRUE(r.a_significantly_better);
  EXPECT_FALSE(ftest_significance(b, a).a_significantly_better);
  EXPECT_FALSE(ftest_significance(b, b).a_significantly_better);
  EXPECT_THROW(ftest_significance(b, Vec(10, 1.0)), NumericError);
  EXPECT_THROW(ftest_significance(Vec{1, 2, 3}, b), InputError);
  (void)sb;
}

TEST(FTest, CriticalMatchesBoost) {
  for (double d1 : {3.0, 9.0, 30.0, 99.0, 250.0})
    for (double d2 : {4.0, 20.0, 99.0}) {
      boost::math::fisher_f dist(d1, d2);
      EXPECT_NEAR(stats::f_quantile(0.05, d1, d2), boost::math::quantile(dist, 0.05), 1e-9);
      EXPECT_NEAR(stats::f_cdf(1.3, d1, d2), boost::math::cdf(dist, 1.3), 1e-10);
    }
}

TEST(Diversity, Examples) {
  const PlanarImage gray(std::vector<Plane8>(3, Plane8(8, 8, 77)));
  auto d = diversity_metrics(gray);
  EXPECT_NEAR(d.contrast, 0.0, 1e-9);
  EXPECT_EQ(d.colorfulness, 0.0);
  EXPECT_EQ(d.brightness, 77.0);

  std::vector<Plane8> red{Plane8(4, 4, 255), Plane8(4, 4, 0), Plane8(4, 4, 0)};
  EXPECT_NEAR(diversity_metrics(PlanarImage(red)).colorfulness, std::hypot(255.0, 127.5), 1e-9);
  EXPECT_NEAR(diversity_metrics(PlanarImage(red)).colorfulness, 285.1, 0.05);

  Plane8 cb(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) cb.at(x, y) = (x + y) % 2 ? 255 : 0;
  EXPECT_EQ(diversity_metrics(PlanarImage(std::vector<Plane8>(3, cb))).brightness, 127.5);
  EXPECT_THROW(diversity_metrics(PlanarImage(cb)), InputError);
}
