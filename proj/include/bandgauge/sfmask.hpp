#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "error.hpp"
#include "image.hpp"

namespace bandgauge {

struct SpatialFrequency {
  double cf = 0;  // column frequency: differences along x
  double rf = 0;  // row frequency: differences along y
  double sf = 0;
};

// CF/RF are normalised by N^2 (all pixels), not by the number of differences.
inline SpatialFrequency spatial_frequency(const PlaneF& patch) {
  require(patch.width == patch.height, "spatial_frequency needs a square patch");
  require(patch.width >= 2, "spatial_frequency needs N >= 2");
  const int n = patch.width;
  double col = 0, row = 0;
  for (int y = 0; y < n; ++y)
    for (int x = 1; x < n; ++x) {
      const double d = static_cast<double>(patch.at(x, y)) - patch.at(x - 1, y);
      col += d * d;
    }
  for (int y = 1; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double d = static_cast<double>(patch.at(x, y)) - patch.at(x, y - 1);
      row += d * d;
    }
  const double norm = 1.0 / (static_cast<double>(n) * n);
  SpatialFrequency s;
  s.cf = std::sqrt(col * norm);
  s.rf = std::sqrt(row * norm);
  s.sf = std::sqrt(s.cf * s.cf + s.rf * s.rf);
  return s;
}

// Grid-mean spatial frequency, summed in patch order.
inline double sf_threshold(std::span<const SpatialFrequency> stats) {
  require(!stats.empty(), "sf_threshold: empty grid");
  double sum = 0;
  for (const auto& s : stats) sum += s.sf;
  return sum / static_cast<double>(stats.size());
}

// Banding visibility transfer function. |sf| is a no-op since sf >= 0.
inline double mask_weight(double sf, double epsilon, int n, double gamma = 1.5) {
  const double a = std::abs(sf);
  if (a <= epsilon) return 1.0;
  return 1.0 + std::pow(a - epsilon, gamma) / static_cast<double>(n);
}

struct MaskWeights {
  std::vector<SpatialFrequency> stats;
  std::vector<double> w;
  double epsilon = 0;
  double gamma = 1.5;
};

inline MaskWeights mask_weights(std::vector<SpatialFrequency> stats, int n, double gamma = 1.5) {
  require(n >= 1, "mask_weights: N must be positive");
  require(gamma > 0, "mask_weights: gamma must be positive");
  MaskWeights m;
  m.epsilon = sf_threshold(stats);
  m.gamma = gamma;
  m.w.reserve(stats.size());
  for (const auto& s : stats) m.w.push_back(mask_weight(s.sf, m.epsilon, n, gamma));
  m.stats = std::move(stats);
  return m;
}

}  // namespace bandgauge
