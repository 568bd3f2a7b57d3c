#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "error.hpp"
#include "image.hpp"

namespace bandgauge {

// Gradient-magnitude field of a patch. Values are non-negative.
struct HighFreqMap : PlaneF {
  using PlaneF::PlaneF;
  explicit HighFreqMap(PlaneF p) : PlaneF(std::move(p)) {}
};

// Piecewise-smooth approximation of a patch, values in [0,1].
struct LowFreqMap : PlaneF {
  using PlaneF::PlaneF;
  explicit LowFreqMap(PlaneF p) : PlaneF(std::move(p)) {}
};

// ---------------------------------------------------------------------------
// Isotropic Sobel: Sx = [-1 0 1; -r2 0 r2; -1 0 1], Sy = Sx^T, edge replication.

struct SobelResponse {
  PlaneF gx;
  PlaneF gy;
};

inline SobelResponse sobel_components(const PlaneF& in) {
  require(in.width >= 3 && in.height >= 3, "Sobel needs a patch of at least 3x3");
  constexpr double r2 = std::numbers::sqrt2;
  SobelResponse out{PlaneF(in.width, in.height), PlaneF(in.width, in.height)};
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      auto I = [&](int dx, int dy) { return static_cast<double>(in.clamped(x + dx, y + dy)); };
      const double gx = (I(1, -1) - I(-1, -1)) + r2 * (I(1, 0) - I(-1, 0)) + (I(1, 1) - I(-1, 1));
      const double gy = (I(-1, 1) - I(-1, -1)) + r2 * (I(0, 1) - I(0, -1)) + (I(1, 1) - I(1, -1));
      out.gx.at(x, y) = static_cast<float>(gx);
      out.gy.at(x, y) = static_cast<float>(gy);
    }
  }
  return out;
}

inline HighFreqMap sobel_hfm(const PlaneF& patch) {
  const auto s = sobel_components(patch);
  HighFreqMap h(patch.width, patch.height);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double gx = s.gx.data[i], gy = s.gy.data[i];
    h.data[i] = static_cast<float>(std::sqrt(gx * gx + gy * gy));
  }
  return h;
}

// ---------------------------------------------------------------------------
// Piecewise-smooth low-frequency map.
//
//   F(L) = 1/2 sum (I - L)^2 + alpha sum_{p not in E} |grad L(p)|^2 + beta |E|
//
// with forward differences, E frozen from the input's gradient. Once E is fixed
// the problem is the SPD system (Id + 2 alpha Lap_E) L = I, solved by
// Jacobi-preconditioned conjugate gradients starting from L = I.

struct PwsConfig {
  double reg_alpha = 2.0;
  double reg_beta = 0.05;
  // Gradient cutoff for the edge set; unset means mean + 2 std of |grad I|.
  std::optional<double> edge_threshold;
  int max_iters = 500;
  // Bound on the relative solution error at termination.
  double tol = 1e-6;

  void validate() const {
    require(reg_alpha > 0 && std::isfinite(reg_alpha), "reg_alpha must be positive");
    require(reg_beta > 0 && std::isfinite(reg_beta), "reg_beta must be positive");
    require(tol > 0, "tol must be positive");
    require(max_iters >= 0, "max_iters must be non-negative");
  }
};

using EdgeSet = Plane<std::uint8_t>;  // 1 where the pixel belongs to E

inline double forward_grad_sq(const PlaneF& img, int x, int y) {
  const double c = img.at(x, y);
  const double dx = x + 1 < img.width ? img.at(x + 1, y) - c : 0.0;
  const double dy = y + 1 < img.height ? img.at(x, y + 1) - c : 0.0;
  return dx * dx + dy * dy;
}

inline double default_edge_threshold(const PlaneF& img) {
  const std::size_t n = img.size();
  double sum = 0, sum_sq = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double g = std::sqrt(forward_grad_sq(img, x, y));
      sum += g;
      sum_sq += g * g;
    }
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sum_sq / static_cast<double>(n) - mean * mean);
  return mean + 2.0 * std::sqrt(var);
}

inline EdgeSet edge_set(const PlaneF& img, double threshold) {
  EdgeSet e(img.width, img.height, 0);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      e.at(x, y) = std::sqrt(forward_grad_sq(img, x, y)) > threshold ? 1 : 0;
  return e;
}

namespace detail {

// Sample access for PlaneF or a double buffer with the same layout.
inline double sample(const PlaneF& p, std::size_t i) { return p.data[i]; }
inline double sample(const std::vector<double>& v, std::size_t i) { return v[i]; }

template <class Field>
double pws_energy_impl(const PlaneF& I, const Field& L, const EdgeSet& E, double alpha, double beta) {
  const int w = I.width, h = I.height;
  double data = 0, smooth = 0;
  std::size_t edges = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y) * w + x;
      const double r = I.data[i] - sample(L, i);
      data += r * r;
      if (E.data[i]) {
        ++edges;
        continue;
      }
      const double c = sample(L, i);
      if (x + 1 < w) {
        const double d = sample(L, i + 1) - c;
        smooth += d * d;
      }
      if (y + 1 < h) {
        const double d = sample(L, i + static_cast<std::size_t>(w)) - c;
        smooth += d * d;
      }
    }
  }
  return 0.5 * data + alpha * smooth + beta * static_cast<double>(edges);
}

// y = (Id + 2 alpha Lap_E) x; a pair (p, p+e) is coupled when p is not an edge pixel.
inline void pws_apply(const std::vector<double>& x, std::vector<double>& y, const EdgeSet& E, double alpha) {
  const int w = E.width, h = E.height;
  y = x;
  const double k = 2.0 * alpha;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const auto i = static_cast<std::size_t>(r) * w + c;
      if (E.data[i]) continue;
      if (c + 1 < w) {
        const double d = k * (x[i] - x[i + 1]);
        y[i] += d;
        y[i + 1] -= d;
      }
      if (r + 1 < h) {
        const auto j = i + static_cast<std::size_t>(w);
        const double d = k * (x[i] - x[j]);
        y[i] += d;
        y[j] -= d;
      }
    }
  }
}

inline std::vector<double> pws_diagonal(const EdgeSet& E, double alpha) {
  const int w = E.width, h = E.height;
  std::vector<double> d(static_cast<std::size_t>(w) * h, 1.0);
  const double k = 2.0 * alpha;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const auto i = static_cast<std::size_t>(r) * w + c;
      if (E.data[i]) continue;
      if (c + 1 < w) d[i] += k, d[i + 1] += k;
      if (r + 1 < h) d[i] += k, d[i + static_cast<std::size_t>(w)] += k;
    }
  return d;
}

}  // namespace detail

inline double pws_energy(const PlaneF& I, const PlaneF& L, const EdgeSet& E, const PwsConfig& cfg) {
  require(I.width == L.width && I.height == L.height && E.width == I.width && E.height == I.height,
          "pws_energy: dimension mismatch");
  return detail::pws_energy_impl(I, L, E, cfg.reg_alpha, cfg.reg_beta);
}

struct PwsResult {
  LowFreqMap lfm;
  std::vector<double> solution;        // unclamped double iterate
  std::vector<double> energy_history;  // F at iterate 0, 1, ...
  EdgeSet edges;
  double edge_threshold = 0;
  int iterations = 0;
  bool converged = false;
};

inline PwsResult pws_solve(const PlaneF& img, const PwsConfig& cfg) {
  cfg.validate();
  for (float v : img.data)
    if (!std::isfinite(v)) fail_numeric("pws_lfm: non-finite input sample");

  PwsResult res;
  res.edge_threshold = cfg.edge_threshold ? *cfg.edge_threshold : default_edge_threshold(img);
  res.edges = edge_set(img, res.edge_threshold);
  const auto& E = res.edges;
  const double alpha = cfg.reg_alpha;
  const std::size_t n = img.size();

  std::vector<double> b(img.data.begin(), img.data.end());
  std::vector<double> x = b, r(n), z(n), p(n), Ap(n);
  const auto diag = detail::pws_diagonal(E, alpha);

  detail::pws_apply(x, Ap, E, alpha);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - Ap[i];

  auto dot = [](const std::vector<double>& a, const std::vector<double>& c) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * c[i];
    return s;
  };
  // ||e||/||x|| <= cond(A) ||r||/||b||, and cond(A) <= 1 + 16 alpha on the 4-neighbour grid.
  const double kappa = 1.0 + 16.0 * alpha;
  const double b_norm = std::sqrt(dot(b, b));
  const double stop = cfg.tol * b_norm / kappa;

  res.energy_history.push_back(detail::pws_energy_impl(img, x, E, alpha, cfg.reg_beta));
  for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
  p = z;
  double rz = dot(r, z);
  int it = 0;
  res.converged = std::sqrt(dot(r, r)) <= stop;
  while (!res.converged && it < cfg.max_iters) {
    detail::pws_apply(p, Ap, E, alpha);
    const double pAp = dot(p, Ap);
    if (!(pAp > 0)) break;
    const double step = rz / pAp;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += step * p[i];
      r[i] -= step * Ap[i];
    }
    ++it;
    res.energy_history.push_back(detail::pws_energy_impl(img, x, E, alpha, cfg.reg_beta));
    if (std::sqrt(dot(r, r)) <= stop) {
      res.converged = true;
      break;
    }
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  for (double v : x)
    if (!std::isfinite(v)) fail_numeric("pws_lfm: solver diverged");

  res.iterations = it;
  res.lfm = LowFreqMap(img.width, img.height);
  for (std::size_t i = 0; i < n; ++i) res.lfm.data[i] = static_cast<float>(std::clamp(x[i], 0.0, 1.0));
  res.solution = std::move(x);
  return res;
}

inline LowFreqMap pws_lfm(const PlaneF& img, const PwsConfig& cfg = {}) { return pws_solve(img, cfg).lfm; }

}  // namespace bandgauge
