#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "bandgauge/datagen.hpp"

using namespace bandgauge;
using namespace bandgauge::datagen;

TEST(Quantize, Examples) {
  for (int v = 0; v < 256; ++v) EXPECT_EQ(quantize_sample(static_cast<std::uint8_t>(v), 8), v);
  EXPECT_EQ(quantize_sample(200, 4), 200);
  Plane8 ramp(256, 1);
  for (int x = 0; x < 256; ++x) ramp.at(x, 0) = static_cast<std::uint8_t>(x);
  const auto q = quantize_bitdepth(ramp, 3);
  EXPECT_EQ(std::set<std::uint8_t>(q.data.begin(), q.data.end()).size(), 8u);
  EXPECT_THROW(quantize_bitdepth(ramp, 0), InputError);
  EXPECT_THROW(quantize_bitdepth(ramp, 9), InputError);
}

TEST(Quantize, IdempotentAndBounded) {
  for (int d = 1; d <= 8; ++d) {
    double err = 0;
    for (int v = 0; v < 256; ++v) {
      const auto q = quantize_sample(static_cast<std::uint8_t>(v), d);
      EXPECT_EQ(quantize_sample(q, d), q);
      EXPECT_LE(std::abs(q - v), d == 8 ? 0 : 1 << (7 - d));
      err += std::abs(q - v);
    }
    EXPECT_LE(err / 256.0, d == 8 ? 0.0 : std::ldexp(1.0, 7 - d));
  }
}

TEST(Quantize, ColorQuantizesLumaOnly) {
  SynthSpec spec;
  spec.size = 64;
  spec.color = true;
  const auto base = gen_base(spec);
  EXPECT_EQ(base.channels(), 3);
  const auto q = quantize_bitdepth(base, 4);
  const auto ycc = rgb_to_ycbcr420(q);
  std::set<std::uint8_t> levels(ycc.y.data.begin(), ycc.y.data.end());
  EXPECT_LE(levels.size(), 20u);
  EXPECT_EQ(quantize_bitdepth(base, 8), base);
}

TEST(GenBase, LinearRampRowConstantFullRange) {
  SynthSpec spec;
  spec.size = 256;
  const auto img = gen_base(spec).plane8(0);
  for (int y = 1; y < 256; ++y)
    for (int x = 0; x < 256; ++x) ASSERT_EQ(img.at(x, y), img.at(x, 0));
  const auto [mn, mx] = std::minmax_element(img.data.begin(), img.data.end());
  EXPECT_EQ(*mn, 0);
  EXPECT_EQ(*mx, 255);
}

TEST(GenBase, RadialPeakAtCentre) {
  SynthSpec spec;
  spec.kind = Kind::radial_ramp;
  spec.size = 65;
  const auto img = gen_base(spec).plane8(0);
  const auto [mn, mx] = std::minmax_element(img.data.begin(), img.data.end());
  EXPECT_EQ(img.at(32, 32), *mx);
  EXPECT_EQ(img.at(32, 32), 255);
  for (auto [x, y] : {std::pair{0, 0}, {64, 0}, {0, 64}, {64, 64}}) EXPECT_EQ(img.at(x, y), *mn);
}

TEST(GenBase, DeterministicAndSmooth) {
  for (Kind k : {Kind::linear_ramp, Kind::radial_ramp, Kind::sky_gradient, Kind::noise_texture, Kind::mixed_scene}) {
    SynthSpec spec;
    spec.kind = k;
    spec.size = 96;
    spec.seed = 1234;
    spec.angle = 0.7;
    const auto a = gen_base(spec), b = gen_base(spec);
    EXPECT_EQ(a, b) << to_string(k);
    if (!is_ramp(k)) continue;
    const auto& p = a.plane8(0);
    for (int y = 0; y < 96; ++y)
      for (int x = 0; x < 96; ++x) {
        if (x + 1 < 96) {
          ASSERT_LE(std::abs(p.at(x + 1, y) - p.at(x, y)), 1) << to_string(k);
        }
        if (y + 1 < 96) {
          ASSERT_LE(std::abs(p.at(x, y + 1) - p.at(x, y)), 1) << to_string(k);
        }
      }
  }
}

TEST(GenBase, RejectsInvalidSpec) {
  SynthSpec spec;
  spec.bit_depth = 0;
  EXPECT_THROW(gen_base(spec), InputError);
  spec = {};
  spec.size = 4;
  EXPECT_THROW(gen_base(spec), InputError);
}

TEST(MakeSample, Masks) {
  SynthSpec spec;
  spec.size = 128;
  spec.kind = Kind::noise_texture;
  spec.bit_depth = 3;
  const auto noise = make_sample(spec);
  EXPECT_EQ(std::count(noise.banded_mask.data.begin(), noise.banded_mask.data.end(), 1), 0);

  spec.kind = Kind::linear_ramp;
  spec.bit_depth = 4;
  const auto ramp = make_sample(spec);
  const double frac = static_cast<double>(std::count(ramp.banded_mask.data.begin(), ramp.banded_mask.data.end(), 1)) /
                      static_cast<double>(ramp.banded_mask.size());
  EXPECT_GT(frac, 0.9);
  EXPECT_EQ(ramp.banded_mask.width, ramp.image.width());

  spec.kind = Kind::mixed_scene;
  const auto mixed = make_sample(spec);
  std::size_t upper = 0;
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      if (y >= 64) ASSERT_EQ(mixed.banded_mask.at(x, y), 0);
      else upper += mixed.banded_mask.at(x, y);
    }
  EXPECT_GT(upper, 0u);

  spec.kind = Kind::linear_ramp;
  spec.bit_depth = 7;
  const auto fine = make_sample(spec);
  EXPECT_EQ(std::count(fine.banded_mask.data.begin(), fine.banded_mask.data.end(), 1), 0);
}

TEST(LabelPatches, ThirtyPercentBoundary) {
  const auto grid = tile(10, 10, 10);
  Plane8 mask(10, 10, 0);
  EXPECT_FALSE(label_patches(mask, grid)[0].banded());
  for (int i = 0; i < 30; ++i) mask.data[static_cast<std::size_t>(i)] = 1;
  EXPECT_FALSE(label_patches(mask, grid)[0].banded());
  mask.data[30] = 1;
  EXPECT_TRUE(label_patches(mask, grid)[0].banded());
  EXPECT_THROW(label_patches(Plane8(12, 10), grid), InputError);
}

TEST(MakeDataset, SplitDeterminismAndLeakage) {
  DatasetOptions opt;
  opt.image_size = 64;
  opt.patch_size = 32;
  opt.compute_features = false;
  const auto a = make_dataset(10, 42, {}, opt);
  const auto b = make_dataset(10, 42, {}, opt);
  EXPECT_EQ(a.manifest, b.manifest);
  std::array<int, 3> counts{};
  for (auto s : a.image_splits) ++counts[static_cast<std::size_t>(s)];
  EXPECT_EQ(counts, (std::array<int, 3>{8, 1, 1}));
  std::map<std::string, SplitName> owner;
  for (const auto& r : a.manifest) {
    auto [it, fresh] = owner.emplace(r.image_path, r.split);
    EXPECT_EQ(it->second, r.split);
  }
  EXPECT_EQ(owner.size(), 10u);
  EXPECT_EQ(a.manifest.size(), 40u);
  EXPECT_NE(make_dataset(10, 43, {}, opt).manifest, a.manifest);
}

TEST(MakeDataset, FeaturesFollowSplits) {
  DatasetOptions opt;
  opt.image_size = 64;
  opt.patch_size = 32;
  const auto ds = make_dataset(10, 3, {}, opt);
  EXPECT_EQ(ds.train.size(), 32u);
  EXPECT_EQ(ds.val.size(), 4u);
  EXPECT_EQ(ds.test.size(), 4u);
  for (const auto& s : ds.train) {
    EXPECT_EQ(s.hfm.width, 32);
    EXPECT_EQ(s.lfm.width, 32);
  }
}

TEST(MakeDataset, Errors) {
  EXPECT_THROW(make_dataset(9, 1), InputError);
  EXPECT_THROW(make_dataset(10, 1, Split{0.5, 0.1, 0.1}), InputError);
  EXPECT_THROW(make_dataset(10, 1, Split{1.2, -0.1, -0.1}), InputError);
}

TEST(MakeDataset, DefaultClassBalance) {
  DatasetOptions opt;
  opt.compute_features = false;
  const auto ds = make_dataset(60, 7, {}, opt);
  const double banded =
      static_cast<double>(std::count_if(ds.manifest.begin(), ds.manifest.end(), [](const ManifestRow& r) { return r.label == Label::banded; })) /
      static_cast<double>(ds.manifest.size());
  EXPECT_GE(banded, 0.35);
  EXPECT_LE(banded, 0.65);
}

TEST(ToySamples, AlternatingLabels) {
  const auto s = make_toy_samples(10, 16, 1);
  ASSERT_EQ(s.size(), 10u);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s[i].label.banded(), i % 2 == 0);
  for (float v : s[1].hfm.data) EXPECT_EQ(v, 0.0f);
}
