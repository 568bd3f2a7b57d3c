#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "error.hpp"
#include "image.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace bandgauge::eval {

inline void check_paired(std::span<const double> a, std::span<const double> b, std::size_t min_len = 2) {
  require(a.size() == b.size(), "paired vectors differ in length");
  require(a.size() >= min_len, "too few paired samples");
  for (std::size_t i = 0; i < a.size(); ++i)
    require(std::isfinite(a[i]) && std::isfinite(b[i]), "non-finite value in paired scores");
}

// 1-based ranks, ties receive the average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  check_paired(x, y);
  const double mx = stats::mean(x), my = stats::mean(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0) || !(syy > 0)) fail_input("correlation undefined for a constant vector");
  return sxy / std::sqrt(sxx * syy);
}

inline double srcc(std::span<const double> predicted, std::span<const double> subjective) {
  check_paired(predicted, subjective);
  const auto rp = average_ranks(predicted);
  const auto rs = average_ranks(subjective);
  return pearson(rp, rs);
}

// Kendall tau-b in O(n log n) (Knight's merge-sort algorithm).
inline double krcc(std::span<const double> x, std::span<const double> y) {
  check_paired(x, y);
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  auto pairs = [](std::uint64_t t) { return t * (t - 1) / 2; };

  std::uint64_t tie_x = 0, tie_xy = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && x[idx[j]] == x[idx[i]]) ++j;
    tie_x += pairs(j - i);
    for (std::size_t k = i; k < j;) {
      std::size_t l = k + 1;
      while (l < j && y[idx[l]] == y[idx[k]]) ++l;
      tie_xy += pairs(l - k);
      k = l;
    }
    i = j;
  }

  // Count inversions of y in x-order; equal y values are not inversions.
  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[idx[i]];
  std::uint64_t swaps = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n), hi = std::min(lo + 2 * width, n);
      std::size_t a = lo, b = mid, o = lo;
      while (a < mid && b < hi) {
        if (ys[b] < ys[a]) {
          swaps += mid - a;
          buf[o++] = ys[b++];
        } else {
          buf[o++] = ys[a++];
        }
      }
      while (a < mid) buf[o++] = ys[a++];
      while (b < hi) buf[o++] = ys[b++];
    }
    std::swap(ys, buf);
  }
  std::uint64_t tie_y = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && ys[j] == ys[i]) ++j;
    tie_y += pairs(j - i);
    i = j;
  }
  const double n0 = static_cast<double>(pairs(n));
  const double nx = n0 - static_cast<double>(tie_x), ny = n0 - static_cast<double>(tie_y);
  if (!(nx > 0) || !(ny > 0)) fail_input("correlation undefined for a constant vector");
  const double con_minus_dis =
      n0 - static_cast<double>(tie_x) - static_cast<double>(tie_y) + static_cast<double>(tie_xy) - 2.0 * static_cast<double>(swaps);
  return con_minus_dis / std::sqrt(nx * ny);
}

// ---------------------------------------------------------------------------
// Five-parameter logistic mapping
//   f(x) = b1 (1/2 - 1/(1 + exp(b2 (x - b3)))) + b4 x + b5

struct Logistic5Params {
  double b1 = 0, b2 = 1, b3 = 0, b4 = 0, b5 = 0;
  double rmse = 0;           // fit residual
  bool converged = true;     // false: fell back to the linear fit
  bool linear_fallback = false;

  double operator()(double x) const {
    const double z = std::clamp(b2 * (x - b3), -700.0, 700.0);
    return b1 * (0.5 - 1.0 / (1.0 + std::exp(z))) + b4 * x + b5;
  }
};

namespace detail {

using Vec5 = std::array<double, 5>;

inline Logistic5Params from_vec(const Vec5& v) { return {v[0], v[1], v[2], v[3], v[4]}; }

inline double sse(const Vec5& v, std::span<const double> x, std::span<const double> y) {
  const auto f = from_vec(v);
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = f(x[i]) - y[i];
    s += r * r;
  }
  return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
}

template <std::size_t N>
struct SimplexResult {
  std::array<double, N> best;
  double value;
  bool converged;
};

// Nelder-Mead with standard coefficients.
template <std::size_t N, class F>
SimplexResult<N> nelder_mead(F f, std::array<double, N> start, const std::array<double, N>& scale, int max_evals,
                             double ftol, double fatol = 0.0) {
  using V = std::array<double, N>;
  constexpr std::size_t n = N;
  std::array<V, n + 1> s;
  std::array<double, n + 1> fv;
  s[0] = start;
  for (std::size_t i = 0; i < n; ++i) {
    s[i + 1] = start;
    s[i + 1][i] += scale[i];
  }
  int evals = 0;
  for (std::size_t i = 0; i <= n; ++i) fv[i] = f(s[i]), ++evals;
  bool converged = false;
  while (evals < max_evals) {
    std::array<std::size_t, n + 1> order;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const auto s_old = s;
    const auto f_old = fv;
    for (std::size_t i = 0; i <= n; ++i) s[i] = s_old[order[i]], fv[i] = f_old[order[i]];
    if (fv[n] - fv[0] <= ftol * std::abs(fv[0]) + fatol || fv[n] - fv[0] <= 1e-300) {
      converged = true;
      break;
    }
    V c{};
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) c[k] += s[i][k] / static_cast<double>(n);
    auto along = [&](double t) {
      V p;
      for (std::size_t k = 0; k < n; ++k) p[k] = c[k] + t * (s[n][k] - c[k]);
      return p;
    };
    const V xr = along(-1.0);
    const double fr = f(xr);
    ++evals;
    if (fr < fv[0]) {
      const V xe = along(-2.0);
      const double fe = f(xe);
      ++evals;
      if (fe < fr) s[n] = xe, fv[n] = fe;
      else s[n] = xr, fv[n] = fr;
    } else if (fr < fv[n - 1]) {
      s[n] = xr, fv[n] = fr;
    } else {
      const bool outside = fr < fv[n];
      const V xc = along(outside ? -0.5 : 0.5);
      const double fc = f(xc);
      ++evals;
      if (fc < (outside ? fr : fv[n])) {
        s[n] = xc, fv[n] = fc;
      } else {
        for (std::size_t i = 1; i <= n; ++i) {
          for (std::size_t k = 0; k < n; ++k) s[i][k] = s[0][k] + 0.5 * (s[i][k] - s[0][k]);
          fv[i] = f(s[i]);
          ++evals;
        }
      }
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  return {s[best], fv[best], converged};
}

// For fixed (b2, b3) the model is linear in (b1, b4, b5): solve that
// least-squares problem in closed form (3x3 normal equations).
inline Vec5 project_linear(double b2, double b3, std::span<const double> x, std::span<const double> y) {
  std::array<std::array<double, 4>, 3> m{};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = std::clamp(b2 * (x[i] - b3), -700.0, 700.0);
    const std::array<double, 3> phi{0.5 - 1.0 / (1.0 + std::exp(z)), x[i], 1.0};
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 3; ++c) m[r][c] += phi[r] * phi[c];
      m[r][3] += phi[r] * y[i];
    }
  }
  // Gaussian elimination with partial pivoting; singular systems drop the sigmoid term.
  for (std::size_t col = 0; col < 3; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < 3; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    std::swap(m[col], m[piv]);
    if (std::abs(m[col][col]) < 1e-12 * (1.0 + std::abs(m[0][0]) + std::abs(m[1][1]) + std::abs(m[2][2]))) {
      const auto [slope, icpt] = [&] {
        double mx = 0, my = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
        mx /= static_cast<double>(x.size()), my /= static_cast<double>(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) sxx += (x[i] - mx) * (x[i] - mx), sxy += (x[i] - mx) * (y[i] - my);
        const double sl = sxx > 0 ? sxy / sxx : 0.0;
        return std::pair{sl, my - sl * mx};
      }();
      return {0.0, b2, b3, slope, icpt};
    }
    for (std::size_t r = col + 1; r < 3; ++r) {
      const double k = m[r][col] / m[col][col];
      for (std::size_t c = col; c < 4; ++c) m[r][c] -= k * m[col][c];
    }
  }
  std::array<double, 3> sol{};
  for (std::size_t r = 3; r-- > 0;) {
    double v = m[r][3];
    for (std::size_t c = r + 1; c < 3; ++c) v -= m[r][c] * sol[c];
    sol[r] = v / m[r][r];
  }
  return {sol[0], b2, b3, sol[1], sol[2]};
}

}  // namespace detail

// Least-squares affine fit y = slope x + intercept.
inline std::pair<double, double> linear_fit(std::span<const double> x, std::span<const double> y) {
  const double mx = stats::mean(x), my = stats::mean(y);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  const double slope = sxx > 0 ? sxy / sxx : 0.0;
  return {slope, my - slope * mx};
}

struct LogisticFitOptions {
  std::uint64_t seed = 0x10615;
  int restarts = 3;
  int max_evals = 40000;
  double ftol = 1e-15;
};

inline Logistic5Params fit_logistic5(std::span<const double> predicted, std::span<const double> subjective,
                                     const LogisticFitOptions& opt = {}) {
  check_paired(predicted, subjective, 6);
  // Canonical order so the result does not depend on the input order.
  std::vector<std::size_t> idx(predicted.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return predicted[a] < predicted[b] || (predicted[a] == predicted[b] && subjective[a] < subjective[b]);
  });
  std::vector<double> x(idx.size()), y(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) x[i] = predicted[idx[i]], y[i] = subjective[idx[i]];

  const auto n = static_cast<double>(x.size());
  const double x_mean = stats::mean(x), y_mean = stats::mean(y);
  const double x_std = std::sqrt(stats::population_variance(x));
  const auto [y_lo, y_hi] = std::minmax_element(y.begin(), y.end());
  const double y_range = *y_hi - *y_lo;
  const auto [slope, intercept] = linear_fit(x, y);
  auto objective = [&](const detail::Vec5& v) { return detail::sse(v, x, y); };

  const double b2_init = x_std > 0 ? 1.0 / x_std : 1.0;
  const detail::Vec5 base{y_range, b2_init, x_mean, 0.0, y_mean};
  const detail::Vec5 scale{std::max(std::abs(y_range), 1e-3) * 0.5, b2_init * 0.5, std::max(x_std, 1e-3) * 0.5,
                           std::max(std::abs(y_range) / std::max(x_std, 1e-12), 1e-3) * 0.1,
                           std::max(std::abs(y_range), 1e-3) * 0.5};

  const detail::Vec5 linear{0.0, b2_init, x_mean, slope, intercept};
  detail::Vec5 best = linear;
  double best_sse = objective(linear);
  const double linear_sse = best_sse;
  bool any_converged = false;

  // Absolute floor for the stopping rule: exact data drives the SSE to rounding noise.
  double y_energy = 0;
  for (double v : y) y_energy += v * v;
  const double fatol = 1e-24 * (y_energy + 1.0);

  auto reduced = [&](const std::array<double, 2>& v) { return objective(detail::project_linear(v[0], v[1], x, y)); };
  // Coarse grid over (b2, b3) with the linear coefficients projected out;
  // the best cells seed the restarts.
  std::vector<std::pair<double, std::array<double, 2>>> grid;
  for (int i = -3; i <= 4; ++i)
    for (int j = 0; j <= 8; ++j) {
      const std::array<double, 2> g{base[1] * std::ldexp(1.0, i), x.front() + (x.back() - x.front()) * j / 8.0};
      grid.push_back({reduced(g), g});
    }
  std::stable_sort(grid.begin(), grid.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  Rng rng(opt.seed);
  for (int r = 0; r < opt.restarts; ++r) {
    std::array<double, 2> start = r == 0 ? std::array<double, 2>{base[1], base[2]} : grid[static_cast<std::size_t>(r - 1) % grid.size()].second;
    if (r > 1) {
      start[0] *= std::exp(rng.uniform(-0.5, 0.5));
      start[1] += scale[2] * rng.uniform(-0.5, 0.5);
    }
    // Refine the nonlinear pair, then polish all five jointly. Restarting
    // the simplex from its own optimum escapes collapsed simplices.
    detail::SimplexResult<2> red{start, reduced(start), false};
    for (int pass = 0; pass < 3; ++pass)
      red = detail::nelder_mead<2>(reduced, red.best, {scale[1], scale[2]}, opt.max_evals / 6, opt.ftol, fatol);
    detail::SimplexResult<5> res{detail::project_linear(red.best[0], red.best[1], x, y), red.value, red.converged};
    for (int pass = 0; pass < 2; ++pass) {
      detail::Vec5 step{};
      for (std::size_t k = 0; k < 5; ++k) step[k] = 0.05 * std::max(std::abs(res.best[k]), 1e-3);
      auto next = detail::nelder_mead<5>(objective, res.best, step, opt.max_evals / 4, opt.ftol, fatol);
      if (next.value <= res.value) res = next;
      res.converged = res.converged || next.converged;
    }
    any_converged = any_converged || res.converged;
    if (res.value < best_sse) best_sse = res.value, best = res.best;
  }

  if (!any_converged) best = linear, best_sse = linear_sse;
  Logistic5Params p = detail::from_vec(best);
  p.converged = any_converged;
  p.linear_fallback = best_sse == linear_sse;
  p.rmse = std::sqrt(best_sse / n);
  return p;
}

struct PlccRmse {
  double plcc = 0;
  double rmse = 0;
  Logistic5Params mapping;
};

inline PlccRmse plcc_rmse(std::span<const double> predicted, std::span<const double> subjective,
                          const LogisticFitOptions& opt = {}) {
  PlccRmse out;
  out.mapping = fit_logistic5(predicted, subjective, opt);
  std::vector<double> mapped(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) mapped[i] = out.mapping(predicted[i]);
  double s = 0;
  for (std::size_t i = 0; i < mapped.size(); ++i) s += (mapped[i] - subjective[i]) * (mapped[i] - subjective[i]);
  out.rmse = std::sqrt(s / static_cast<double>(mapped.size()));
  out.plcc = pearson(mapped, subjective);
  return out;
}

// ---------------------------------------------------------------------------
// Binary classification metrics. Label 1 = positive (banded); higher score = more positive.

inline void check_binary(std::span<const double> scores, std::span<const int> labels, bool need_both = true) {
  require(scores.size() == labels.size(), "scores and labels differ in length");
  require(!scores.empty(), "empty scored set");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] == 0 || labels[i] == 1, "labels must be 0 or 1");
    require(std::isfinite(scores[i]), "non-finite score");
    pos += static_cast<std::size_t>(labels[i]);
  }
  if (need_both) require(pos > 0 && pos < labels.size(), "both classes must be present");
}

struct CurvePoint {
  double threshold;
  double x;  // FPR (ROC) or recall (PR)
  double y;  // TPR (ROC) or precision (PR)
};

struct RocPr {
  double auroc = 0;
  double auprc = 0;
  std::vector<CurvePoint> roc;
  std::vector<CurvePoint> pr;
};

// AUROC from the Mann-Whitney rank statistic (average ranks for ties);
// AUPRC as the step-wise sum of precision over recall increments.
inline RocPr roc_pr(std::span<const double> scores, std::span<const int> labels) {
  check_binary(scores, labels);
  const std::size_t n = scores.size();
  const auto ranks = average_ranks(scores);
  double pos = 0, rank_sum = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] == 1) pos += 1, rank_sum += ranks[i];
  const double neg = static_cast<double>(n) - pos;
  RocPr out;
  out.auroc = (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double tp = 0, fp = 0, prev_recall = 0;
  out.roc.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    const double thr = scores[idx[i]];
    const double recall = tp / pos, precision = tp / (tp + fp);
    out.roc.push_back({thr, fp / neg, recall});
    out.pr.push_back({thr, recall, precision});
    out.auprc += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return out;
}

struct ThresholdResult {
  double threshold = 0;  // predict positive iff score >= threshold
  double accuracy = 0;
  bool from_bisection = false;
};

inline double accuracy_at(std::span<const double> scores, std::span<const int> labels, double threshold) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) ok += static_cast<std::size_t>((scores[i] >= threshold) == (labels[i] == 1));
  return static_cast<double>(ok) / static_cast<double>(scores.size());
}

// Half-interval search over the score range, checked against an exhaustive
// sweep of every midpoint between consecutive distinct scores; the better
// result wins (accuracy is not unimodal in general).
inline ThresholdResult threshold_search(std::span<const double> scores, std::span<const int> labels) {
  check_binary(scores, labels, false);
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  const double lo = scores[idx.front()], hi = scores[idx.back()];

  // Exhaustive sweep: candidate thresholds below the minimum, between
  // distinct values, and above the maximum.
  std::size_t pos_total = 0;
  for (int l : labels) pos_total += static_cast<std::size_t>(l);
  const double span_pad = std::max(1.0, hi - lo);
  double best_thr = lo - span_pad;
  std::size_t neg_below = 0, pos_below = 0;
  std::size_t best_ok = pos_total;  // everything predicted positive
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? pos_below : neg_below) += 1;
      ++j;
    }
    const double thr = j < n ? 0.5 * (scores[idx[i]] + scores[idx[j]]) : hi + span_pad;
    const std::size_t ok = neg_below + (pos_total - pos_below);
    if (ok > best_ok) best_ok = ok, best_thr = thr;
    i = j;
  }
  ThresholdResult exhaustive{best_thr, static_cast<double>(best_ok) / static_cast<double>(n), false};

  double a = lo, b = hi;
  double bis_thr = lo, bis_acc = accuracy_at(scores, labels, lo);
  for (int it = 0; it < 64 && b > a; ++it) {
    const double q1 = a + 0.25 * (b - a), q3 = a + 0.75 * (b - a);
    const double acc1 = accuracy_at(scores, labels, q1), acc3 = accuracy_at(scores, labels, q3);
    if (acc1 > bis_acc) bis_acc = acc1, bis_thr = q1;
    if (acc3 > bis_acc) bis_acc = acc3, bis_thr = q3;
    if (acc1 >= acc3) b = 0.5 * (a + b);
    else a = 0.5 * (a + b);
  }
  if (bis_acc >= exhaustive.accuracy) return {bis_thr, bis_acc, true};
  return exhaustive;
}

// ---------------------------------------------------------------------------

struct FTestResult {
  double f = 0;
  double critical = 0;
  bool a_significantly_better = false;
};

// Left-tailed F-test on residual variances: a beats b when var(a)/var(b)
// falls below the lower critical value at the given confidence.
inline FTestResult ftest_significance(std::span<const double> residuals_a, std::span<const double> residuals_b,
                                      double confidence = 0.95) {
  require(residuals_a.size() >= 4 && residuals_b.size() >= 4, "F-test needs at least 4 residuals per model");
  require(confidence > 0 && confidence < 1, "confidence must lie in (0,1)");
  const double va = stats::sample_variance(residuals_a), vb = stats::sample_variance(residuals_b);
  if (!(vb > 0)) fail_numeric("F-test: zero variance in the denominator");
  FTestResult r;
  r.f = va / vb;
  r.critical = stats::f_quantile(1.0 - confidence, static_cast<double>(residuals_a.size() - 1),
                                 static_cast<double>(residuals_b.size() - 1));
  r.a_significantly_better = r.f < r.critical;
  return r;
}

// ---------------------------------------------------------------------------

struct Diversity {
  double contrast = 0;      // std of luma, 0-255 scale
  double colorfulness = 0;  // sqrt(mu_rg^2 + mu_yb^2) + sqrt(sd_rg^2 + sd_yb^2)
  double brightness = 0;    // mean over R, G and B samples
};

inline Diversity diversity_metrics(const PlanarImage& img) {
  require(img.channels() == 3 && img.depth() == SampleDepth::u8, "diversity metrics need an 8-bit RGB image");
  const auto n = static_cast<std::size_t>(img.width()) * img.height();
  const auto& R = img.plane8(0).data;
  const auto& G = img.plane8(1).data;
  const auto& B = img.plane8(2).data;
  std::vector<double> luma(n), rg(n), yb(n);
  double sum_rgb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = R[i], g = G[i], b = B[i];
    luma[i] = 0.299 * r + 0.587 * g + 0.114 * b;
    rg[i] = r - g;
    yb[i] = 0.5 * (r + g) - b;
    sum_rgb += r + g + b;
  }
  Diversity d;
  d.contrast = std::sqrt(stats::population_variance(luma));
  const double mrg = stats::mean(rg), myb = stats::mean(yb);
  d.colorfulness = std::sqrt(mrg * mrg + myb * myb) +
                   std::sqrt(stats::population_variance(rg) + stats::population_variance(yb));
  d.brightness = sum_rgb / (3.0 * static_cast<double>(n));
  return d;
}

}  // namespace bandgauge::eval
