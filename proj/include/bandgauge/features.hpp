#pragma once

#include "freq.hpp"
#include "image.hpp"

namespace bandgauge {

// Options for turning a luma patch into the classifier's two inputs.
struct FreqConfig {
  PwsConfig pws;
};

// Classifier input: the two frequency maps of one patch plus its label.
struct PatchSample {
  HighFreqMap hfm;
  LowFreqMap lfm;
  PatchLabel label;
};

inline PatchSample frequency_pair(const PlaneF& luma_patch, const FreqConfig& cfg = {}, PatchLabel label = {}) {
  return {sobel_hfm(luma_patch), pws_lfm(luma_patch, cfg.pws), label};
}

}  // namespace bandgauge
