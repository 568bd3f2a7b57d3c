#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "stats.hpp"

namespace bandgauge {

// Raw opinion scores for one image on the 0-100 continuous scale.
struct RatingSet {
  std::string image_id;
  std::vector<double> scores;

  void validate() const {
    for (double s : scores)
      require(std::isfinite(s) && s >= 0.0 && s <= 100.0, "rating outside [0,100] for image " + image_id);
  }
};

enum class OutlierRule {
  grubbs_or_sd,   // remove if G exceeds the Grubbs critical value or the deviation exceeds k*SD
  grubbs_and_sd,  // remove only if both hold
  grubbs_only,
};

struct OutlierConfig {
  double sig_alpha = 0.05;
  double sd_multiplier = 2.5;
  std::size_t max_removals = std::numeric_limits<std::size_t>::max();
  OutlierRule rule = OutlierRule::grubbs_or_sd;
};

// Max standardized deviation using the sample SD (n-1). Zero variance gives 0.
inline double grubbs_statistic(std::span<const double> scores) {
  require(scores.size() >= 3, "grubbs_statistic needs at least 3 scores");
  const double m = stats::mean(scores);
  const double sd = std::sqrt(stats::sample_variance(scores));
  if (!(sd > 0)) return 0.0;
  double worst = 0;
  for (double s : scores) worst = std::max(worst, std::abs(s - m));
  return worst / sd;
}

// Two-sided Grubbs critical value: t is the upper alpha/(2N) point of Student's t with N-2 dof.
inline double grubbs_threshold(std::size_t n, double sig_alpha = 0.05) {
  require(n >= 3, "grubbs_threshold needs N >= 3");
  require(sig_alpha > 0 && sig_alpha < 1, "significance level must lie in (0,1)");
  const double N = static_cast<double>(n);
  const double t = stats::student_t_upper_quantile(sig_alpha / (2.0 * N), N - 2.0, 1e-10);
  const double t2 = t * t;
  return (N - 1.0) / std::sqrt(N) * std::sqrt(t2 / (N - 2.0 + t2));
}

struct OutlierResult {
  std::vector<double> kept;     // original order
  std::vector<double> removed;  // removal order
};

// Iterative single-point removal with recomputation after each removal.
inline OutlierResult remove_outliers(std::span<const double> scores, const OutlierConfig& cfg = {}) {
  require(cfg.sig_alpha > 0 && cfg.sig_alpha < 1, "significance level must lie in (0,1)");
  OutlierResult res;
  res.kept.assign(scores.begin(), scores.end());
  while (res.kept.size() > 3 && res.removed.size() < cfg.max_removals) {
    const double m = stats::mean(res.kept);
    const double sd = std::sqrt(stats::sample_variance(res.kept));
    if (!(sd > 0)) break;
    std::size_t worst = 0;
    double worst_dev = -1;
    for (std::size_t i = 0; i < res.kept.size(); ++i) {
      const double dev = std::abs(res.kept[i] - m);
      if (dev > worst_dev) worst_dev = dev, worst = i;  // strict: lowest index wins ties
    }
    const double g = worst_dev / sd;
    const bool grubbs = g > grubbs_threshold(res.kept.size(), cfg.sig_alpha);
    const bool sd_rule = worst_dev > cfg.sd_multiplier * sd;
    bool outlier = false;
    switch (cfg.rule) {
      case OutlierRule::grubbs_or_sd: outlier = grubbs || sd_rule; break;
      case OutlierRule::grubbs_and_sd: outlier = grubbs && sd_rule; break;
      case OutlierRule::grubbs_only: outlier = grubbs; break;
    }
    if (!outlier) break;
    res.removed.push_back(res.kept[worst]);
    res.kept.erase(res.kept.begin() + static_cast<std::ptrdiff_t>(worst));
  }
  return res;
}

inline double mos(std::span<const double> kept) {
  require(!kept.empty(), "mos of an empty score set");
  return stats::mean(kept);
}

struct MosRecord {
  std::string image_id;
  double mos = 0;
  std::size_t n_kept = 0;
  std::size_t n_removed = 0;
};

inline MosRecord aggregate(const RatingSet& ratings, const OutlierConfig& cfg = {}) {
  ratings.validate();
  require(!ratings.scores.empty(), "no ratings for image " + ratings.image_id);
  OutlierResult r;
  if (ratings.scores.size() >= 3) {
    r = remove_outliers(ratings.scores, cfg);
  } else {
    r.kept = ratings.scores;
  }
  return {ratings.image_id, mos(r.kept), r.kept.size(), r.removed.size()};
}

}  // namespace bandgauge
