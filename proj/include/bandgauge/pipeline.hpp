#pragma once

#include <optional>
#include <vector>

#include "classifier.hpp"
#include "features.hpp"
#include "freq.hpp"
#include "image.hpp"
#include "scoring.hpp"
#include "sfmask.hpp"

namespace bandgauge {

struct ScoreConfig {
  int patch_size = 235;
  double p_percent = 80.0;
  double gamma = 1.5;
  // Luma is in [0,1]; spatial frequency is measured on the 8-bit scale.
  double sf_scale = 255.0;
  PoolMode pool = PoolMode::per_patch;
  bool full_image_hfm = false;  // Sobel on the whole image, then crop
  FreqConfig freq;
  BaselineConfig baseline;
};

// Either a trained dual-branch model or the handcrafted baseline.
struct PatchClassifier {
  std::optional<DualNetParams<float>> model;
  BaselineConfig baseline;

  static PatchClassifier from_model(DualNetParams<float> p) { return {std::move(p), {}}; }
  static PatchClassifier from_baseline(BaselineConfig c = {}) { return {std::nullopt, c}; }
};

struct ScoreResult {
  QualityScore quality;
  BandingMap map;
  MaskWeights masks;
  std::vector<PatchLabel> labels;
  std::vector<double> probabilities;  // empty for the baseline
};

// tile -> frequency maps -> classify -> mask -> banding map -> pool.
inline ScoreResult score_image(const PlanarImage& img, const PatchClassifier& clf, const ScoreConfig& cfg) {
  const PlaneF luma = luma_plane(img);
  const int n = cfg.patch_size;
  if (clf.model)
    require(clf.model->arch.patch_size == n, "model was trained on " + std::to_string(clf.model->arch.patch_size) +
                                                 "px patches but scoring uses " + std::to_string(n) + "px");
  const PatchGrid grid = tile(luma.width, luma.height, n);
  std::optional<HighFreqMap> full_hfm;
  if (cfg.full_image_hfm) full_hfm = sobel_hfm(luma);

  ScoreResult res;
  std::vector<HighFreqMap> hfms;
  std::vector<SpatialFrequency> sfs;
  hfms.reserve(grid.size());
  for (const auto& o : grid.patches) {
    const PlaneF patch = crop(luma, o.x, o.y, n, n);
    HighFreqMap hfm = full_hfm ? HighFreqMap(crop<float>(*full_hfm, o.x, o.y, n, n)) : sobel_hfm(patch);
    if (clf.model) {
      const LowFreqMap lfm = pws_lfm(patch, cfg.freq.pws);
      const double p = forward(*clf.model, hfm, lfm);
      res.probabilities.push_back(p);
      res.labels.push_back(label_from_probability(p));
    } else {
      res.labels.push_back(baseline_predict(patch, clf.baseline));
    }
    PlaneF scaled = patch;
    for (auto& v : scaled.data) v = static_cast<float>(v * cfg.sf_scale);
    sfs.push_back(spatial_frequency(scaled));
    hfms.push_back(std::move(hfm));
  }
  res.masks = mask_weights(std::move(sfs), n, cfg.gamma);
  res.map = banding_map(grid, res.labels, res.masks.w, hfms);
  res.quality = pool_score(res.map, cfg.p_percent, cfg.pool);
  return res;
}

}  // namespace bandgauge
