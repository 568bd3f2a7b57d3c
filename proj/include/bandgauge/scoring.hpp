#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "error.hpp"
#include "freq.hpp"
#include "image.hpp"

namespace bandgauge {

struct PatchMeta {
  PatchLabel label;
  double weight = 1.0;
  std::size_t index = 0;
};

// Per-pixel banding visibility: w_k * P_k * |HFM_k| inside patch k, zero elsewhere.
struct BandingMap {
  PlaneF values;
  PatchGrid grid;
  std::vector<PatchMeta> patch_meta;

  std::size_t patch_count() const { return grid.size(); }  // M
  int width() const { return values.width; }
  int height() const { return values.height; }
};

inline BandingMap banding_map(const PatchGrid& grid, std::span<const PatchLabel> labels,
                              std::span<const double> weights, std::span<const HighFreqMap> hfms) {
  require(labels.size() == grid.size() && weights.size() == grid.size() && hfms.size() == grid.size(),
          "banding_map: per-patch collections are not aligned with the grid");
  BandingMap bm;
  bm.values = PlaneF(grid.image_width, grid.image_height, 0.0f);
  bm.grid = grid;
  bm.patch_meta.reserve(grid.size());
  const int n = grid.patch_size;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto& h = hfms[k];
    require(h.width == n && h.height == n, "banding_map: HFM size differs from patch size");
    bm.patch_meta.push_back({labels[k], weights[k], k});
    if (!labels[k].banded()) continue;
    const auto [ox, oy] = grid.patches[k];
    const double w = weights[k];
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        bm.values.at(ox + x, oy + y) = static_cast<float>(w * std::abs(static_cast<double>(h.at(x, y))));
  }
  return bm;
}

enum class PoolMode { per_patch, global };

struct QualityScore {
  double q = 0;
  double p_percent = 80;
  std::vector<double> per_patch_scores;
  std::size_t banded_patches = 0;
  std::size_t patch_count = 0;
};

// Mean of the largest p% of the non-zero values. The cutoff count is
// ceil(p% * nnz); values tied with the cutoff value are all included. The
// selected values are summed in descending order.
inline double top_percent_mean(std::vector<float> nonzero, double p_percent) {
  if (nonzero.empty()) return 0.0;
  const auto nnz = nonzero.size();
  auto count = static_cast<std::size_t>(std::ceil(p_percent * static_cast<double>(nnz) / 100.0));
  count = std::clamp<std::size_t>(count, 1, nnz);
  std::nth_element(nonzero.begin(), nonzero.begin() + static_cast<std::ptrdiff_t>(count - 1), nonzero.end(),
                   std::greater<>());
  const float cutoff = nonzero[count - 1];
  auto sel_end = std::partition(nonzero.begin(), nonzero.end(), [cutoff](float v) { return v >= cutoff; });
  std::sort(nonzero.begin(), sel_end, std::greater<>());
  double sum = 0;
  for (auto it = nonzero.begin(); it != sel_end; ++it) sum += *it;
  return sum / static_cast<double>(sel_end - nonzero.begin());
}

inline QualityScore pool_score(const BandingMap& bm, double p_percent = 80.0, PoolMode mode = PoolMode::per_patch) {
  require(p_percent > 0 && p_percent <= 100, "pool_score: p must lie in (0, 100]");
  QualityScore qs;
  qs.p_percent = p_percent;
  qs.patch_count = bm.patch_count();
  const int n = bm.grid.patch_size;
  std::vector<float> all;
  for (std::size_t k = 0; k < bm.grid.size(); ++k) {
    if (k < bm.patch_meta.size() && bm.patch_meta[k].label.banded()) ++qs.banded_patches;
    const auto [ox, oy] = bm.grid.patches[k];
    std::vector<float> nz;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const float v = bm.values.at(ox + x, oy + y);
        if (v != 0.0f) nz.push_back(v);
      }
    if (mode == PoolMode::global) all.insert(all.end(), nz.begin(), nz.end());
    qs.per_patch_scores.push_back(top_percent_mean(std::move(nz), p_percent));
  }
  if (qs.patch_count == 0) return qs;
  if (mode == PoolMode::global) {
    qs.q = top_percent_mean(std::move(all), p_percent);
  } else {
    double sum = 0;
    for (double s : qs.per_patch_scores) sum += s;
    qs.q = sum / static_cast<double>(qs.patch_count);
  }
  return qs;
}

// Min-max normalised 8-bit rendering; an all-zero map renders black.
inline Plane8 render_banding_map(const BandingMap& bm) {
  Plane8 out(bm.width(), bm.height(), 0);
  const auto [lo_it, hi_it] = std::minmax_element(bm.values.data.begin(), bm.values.data.end());
  const double lo = std::min(0.0f, *lo_it), hi = *hi_it;
  if (!(hi > lo)) return out;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data[i] = static_cast<std::uint8_t>(std::lround(255.0 * (bm.values.data[i] - lo) / (hi - lo)));
  return out;
}

}  // namespace bandgauge
