#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "error.hpp"
#include "features.hpp"
#include "image.hpp"
#include "rng.hpp"

namespace bandgauge::datagen {

enum class Kind { linear_ramp, radial_ramp, sky_gradient, noise_texture, mixed_scene };

inline const char* to_string(Kind k) {
  switch (k) {
    case Kind::linear_ramp: return "linear_ramp";
    case Kind::radial_ramp: return "radial_ramp";
    case Kind::sky_gradient: return "sky_gradient";
    case Kind::noise_texture: return "noise_texture";
    case Kind::mixed_scene: return "mixed_scene";
  }
  return "?";
}

inline bool is_ramp(Kind k) { return k == Kind::linear_ramp || k == Kind::radial_ramp || k == Kind::sky_gradient; }

struct SynthSpec {
  Kind kind = Kind::linear_ramp;
  int size = 256;
  int bit_depth = 8;
  double noise_sigma = 12.0;  // gray levels, texture kinds
  std::uint64_t seed = 0;
  // Ramp geometry: direction of a linear ramp (radians, 0 = varies along x)
  // and the gray range; the range is clipped so no per-pixel step exceeds 1 level.
  double angle = 0.0;
  double lo = 0.0;
  double hi = 255.0;
  bool color = false;            // tinted RGB output
  bool quantize_chroma = false;  // also quantize Cb/Cr (color only)

  void validate() const {
    require(bit_depth >= 1 && bit_depth <= 8, "bit depth must lie in 1..8");
    require(size >= 8, "synthetic image size must be at least 8");
    require(!color || size % 2 == 0, "color synthesis needs an even size");
    require(lo >= 0 && hi <= 255 && lo <= hi, "ramp range must lie inside [0,255]");
  }
};

struct GeneratedSample {
  PlanarImage image;
  Plane8 banded_mask;  // 1 = banded
  SynthSpec spec;
};

struct MaskRule {
  int max_banded_depth = 6;  // ramps at this depth or coarser are banded
  int contour_radius = 32;   // pixels within this Chebyshev distance of a quantization contour
};

namespace detail {

// Scales a [0,1] field into [lo, lo + r] with r chosen so adjacent pixels differ by at most one level.
inline Plane8 field_to_gray(const std::vector<double>& f, int size, double lo, double hi) {
  double max_step = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const auto i = static_cast<std::size_t>(y) * size + x;
      if (x + 1 < size) max_step = std::max(max_step, std::abs(f[i + 1] - f[i]));
      if (y + 1 < size) max_step = std::max(max_step, std::abs(f[i + size] - f[i]));
    }
  double range = hi - lo;
  if (max_step > 0) range = std::min(range, 1.0 / max_step);
  Plane8 out(size, size);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(lo + range * f[i]), 0L, 255L));
  return out;
}

inline std::vector<double> normalise(std::vector<double> f) {
  const auto [mn, mx] = std::minmax_element(f.begin(), f.end());
  const double a = *mn, b = *mx;
  for (auto& v : f) v = b > a ? (v - a) / (b - a) : 0.0;
  return f;
}

inline Plane8 linear_ramp(int size, double angle, double lo, double hi) {
  const double c = std::cos(angle), s = std::sin(angle);
  std::vector<double> f(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) f[static_cast<std::size_t>(y) * size + x] = c * x + s * y;
  return field_to_gray(normalise(std::move(f)), size, lo, hi);
}

// Peak at the centre, minimum at the corners.
inline Plane8 radial_ramp(int size, double lo, double hi) {
  const double cx = (size - 1) / 2.0;
  std::vector<double> f(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) f[static_cast<std::size_t>(y) * size + x] = -std::hypot(x - cx, y - cx);
  f = normalise(std::move(f));
  // Anchor the peak at hi.
  double max_step = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x + 1 < size; ++x)
      max_step = std::max(max_step, std::abs(f[static_cast<std::size_t>(y) * size + x + 1] - f[static_cast<std::size_t>(y) * size + x]));
  for (int y = 0; y + 1 < size; ++y)
    for (int x = 0; x < size; ++x)
      max_step = std::max(max_step, std::abs(f[static_cast<std::size_t>(y + 1) * size + x] - f[static_cast<std::size_t>(y) * size + x]));
  const double range = std::min(hi - lo, max_step > 0 ? 1.0 / max_step : hi - lo);
  return field_to_gray(f, size, hi - range, hi);
}

// Sum of a few long-wavelength cosines: a smooth 2-D random field.
inline Plane8 sky_gradient(int size, double lo, double hi, Rng& rng) {
  std::vector<double> f(static_cast<std::size_t>(size) * size, 0.0);
  for (int k = 0; k < 4; ++k) {
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double wavelength = size * rng.uniform(1.5, 4.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double amp = rng.uniform(0.5, 1.0);
    const double kx = std::cos(theta) * 2.0 * std::numbers::pi / wavelength;
    const double ky = std::sin(theta) * 2.0 * std::numbers::pi / wavelength;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) f[static_cast<std::size_t>(y) * size + x] += amp * std::cos(kx * x + ky * y + phase);
  }
  return field_to_gray(normalise(std::move(f)), size, lo, hi);
}

// Box-blurred Gaussian noise around a random mean, standard deviation ~sigma.
inline Plane8 noise_texture(int size, double sigma, Rng& rng) {
  const double base = rng.uniform(60.0, 196.0);
  const int radius = static_cast<int>(rng.below(2));
  Plane<double> raw(size, size);
  for (auto& v : raw.data) v = rng.normal();
  Plane8 out(size, size);
  const int win = 2 * radius + 1;
  const double gain = sigma * win;  // blur of unit noise has std 1/win
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double s = 0;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) s += raw.clamped(x + dx, y + dy);
      s /= win * win;
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(base + gain * s), 0L, 255L));
    }
  return out;
}

inline Plane8 gray_base(const SynthSpec& spec, Rng& rng) {
  const int n = spec.size;
  switch (spec.kind) {
    case Kind::linear_ramp: return linear_ramp(n, spec.angle, spec.lo, spec.hi);
    case Kind::radial_ramp: return radial_ramp(n, spec.lo, spec.hi);
    case Kind::sky_gradient: return sky_gradient(n, spec.lo, spec.hi, rng);
    case Kind::noise_texture: return noise_texture(n, spec.noise_sigma, rng);
    case Kind::mixed_scene: {
      Plane8 out = linear_ramp(n, spec.angle, spec.lo, spec.hi);
      const Plane8 noise = noise_texture(n, spec.noise_sigma, rng);
      for (int y = n / 2; y < n; ++y)
        for (int x = 0; x < n; ++x) out.at(x, y) = noise.at(x, y);
      return out;
    }
  }
  return {};
}

}  // namespace detail

// Smooth or textured 8-bit source content.
inline PlanarImage gen_base(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Plane8 gray = detail::gray_base(spec, rng);
  if (!spec.color) return PlanarImage(std::move(gray));
  const std::array<double, 3> tint{rng.uniform(0.6, 1.0), rng.uniform(0.6, 1.0), rng.uniform(0.6, 1.0)};
  std::vector<Plane8> rgb(3, Plane8(gray.width, gray.height));
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < gray.size(); ++i)
      rgb[static_cast<std::size_t>(c)].data[i] = static_cast<std::uint8_t>(std::lround(gray.data[i] * tint[static_cast<std::size_t>(c)]));
  return PlanarImage(std::move(rgb));
}

// Reduce to d bits then promote back to 8 bits at the mid-rise level.
inline std::uint8_t quantize_sample(std::uint8_t v, int d) {
  if (d >= 8) return v;
  const int step = 1 << (8 - d);
  return static_cast<std::uint8_t>((v / step) * step + step / 2);
}

inline Plane8 quantize_bitdepth(const Plane8& p, int d) {
  require(d >= 1 && d <= 8, "bit depth must lie in 1..8");
  Plane8 out = p;
  for (auto& v : out.data) v = quantize_sample(v, d);
  return out;
}

// Gray images are quantized directly; RGB images are quantized in YCbCr 4:2:0
// (luma only unless chroma is requested).
inline PlanarImage quantize_bitdepth(const PlanarImage& img, int d, bool quantize_chroma = false) {
  require(img.depth() == SampleDepth::u8, "quantize_bitdepth needs an 8-bit image");
  if (img.channels() == 1) return PlanarImage(quantize_bitdepth(img.plane8(0), d));
  if (d >= 8) return img;
  auto ycc = rgb_to_ycbcr420(img);
  ycc.y = quantize_bitdepth(ycc.y, d);
  if (quantize_chroma) {
    ycc.cb = quantize_bitdepth(ycc.cb, d);
    ycc.cr = quantize_bitdepth(ycc.cr, d);
  }
  return ycbcr420_to_rgb(ycc);
}

namespace detail {

// Square dilation of a binary mask (Chebyshev radius r), separable running max.
inline Plane8 dilate(const Plane8& m, int r) {
  auto pass = [r](const Plane8& in, bool horizontal) {
    Plane8 out(in.width, in.height, 0);
    const int len = horizontal ? in.width : in.height;
    const int lines = horizontal ? in.height : in.width;
    for (int l = 0; l < lines; ++l) {
      int last = -1'000'000;
      std::vector<int> next_on(static_cast<std::size_t>(len) + 1, 1'000'000);
      for (int i = len - 1; i >= 0; --i) {
        const auto v = horizontal ? in.at(i, l) : in.at(l, i);
        next_on[static_cast<std::size_t>(i)] = v ? i : next_on[static_cast<std::size_t>(i) + 1];
      }
      for (int i = 0; i < len; ++i) {
        if (horizontal ? in.at(i, l) : in.at(l, i)) last = i;
        const bool on = i - last <= r || next_on[static_cast<std::size_t>(i)] - i <= r;
        (horizontal ? out.at(i, l) : out.at(l, i)) = on ? 1 : 0;
      }
    }
    return out;
  };
  return pass(pass(m, true), false);
}

}  // namespace detail

// Ground truth for a generated image: ramp pixels (at d <= max_banded_depth)
// lying near a quantization contour. Texture pixels are never banded.
inline GeneratedSample make_sample(const SynthSpec& spec, const MaskRule& rule = {}) {
  GeneratedSample s;
  s.spec = spec;
  const PlanarImage base = gen_base(spec);
  s.image = quantize_bitdepth(base, spec.bit_depth, spec.quantize_chroma);
  const int n = spec.size;
  s.banded_mask = Plane8(n, n, 0);
  if (!(is_ramp(spec.kind) || spec.kind == Kind::mixed_scene) || spec.bit_depth > rule.max_banded_depth) return s;

  const int smooth_rows = spec.kind == Kind::mixed_scene ? n / 2 : n;
  const PlaneF luma = luma_plane(s.image);
  Plane8 contour(n, n, 0);
  for (int y = 0; y < smooth_rows; ++y)
    for (int x = 0; x < n; ++x) {
      const float v = luma.at(x, y);
      const bool right = x + 1 < n && luma.at(x + 1, y) != v;
      const bool down = y + 1 < smooth_rows && luma.at(x, y + 1) != v;
      if (right || down) contour.at(x, y) = 1;
    }
  Plane8 near = detail::dilate(contour, rule.contour_radius);
  for (int y = 0; y < smooth_rows; ++y)
    for (int x = 0; x < n; ++x) s.banded_mask.at(x, y) = near.at(x, y);
  return s;
}

// Banded iff strictly more than 30% of the patch's pixels are banded.
inline std::vector<PatchLabel> label_patches(const Plane8& banded_mask, const PatchGrid& grid) {
  require(grid.image_width == banded_mask.width && grid.image_height == banded_mask.height,
          "label_patches: grid does not match mask");
  std::vector<PatchLabel> labels;
  labels.reserve(grid.size());
  const int n = grid.patch_size;
  const std::size_t area = static_cast<std::size_t>(n) * n;
  for (const auto& o : grid.patches) {
    std::size_t hits = 0;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) hits += banded_mask.at(o.x + x, o.y + y) ? 1 : 0;
    labels.push_back({10 * hits > 3 * area ? Label::banded : Label::non_banded, 1.0});
  }
  return labels;
}

inline std::vector<PatchLabel> label_patches(const GeneratedSample& s, const PatchGrid& grid) {
  return label_patches(s.banded_mask, grid);
}

// ---------------------------------------------------------------------------

struct Split {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;

  void validate() const {
    require(train >= 0 && val >= 0 && test >= 0, "split fractions must be non-negative");
    require(std::abs(train + val + test - 1.0) < 1e-9, "split fractions must sum to 1");
  }
};

enum class SplitName { train, val, test };

inline const char* to_string(SplitName s) {
  switch (s) {
    case SplitName::train: return "train";
    case SplitName::val: return "val";
    case SplitName::test: return "test";
  }
  return "?";
}

struct ManifestRow {
  std::string image_path;
  int patch_x = 0;
  int patch_y = 0;
  int n = 0;
  Label label = Label::non_banded;
  SplitName split = SplitName::train;
  bool operator==(const ManifestRow&) const = default;
};

struct DatasetOptions {
  int image_size = 256;
  int patch_size = 64;
  std::vector<int> depths{2, 3, 4, 5, 6, 7};
  std::vector<Kind> kinds{Kind::linear_ramp, Kind::radial_ramp, Kind::sky_gradient, Kind::noise_texture,
                          Kind::mixed_scene};
  double noise_sigma_min = 6.0;
  double noise_sigma_max = 24.0;
  MaskRule mask;
  FreqConfig freq;
  bool compute_features = true;  // HFM/LFM per patch
  bool keep_images = false;
};

struct Dataset {
  std::vector<PatchSample> train, val, test;
  std::vector<ManifestRow> manifest;
  std::vector<GeneratedSample> images;  // filled when keep_images
  std::vector<std::string> image_names;
  std::vector<SplitName> image_splits;

  std::vector<PatchSample>& split(SplitName s) { return s == SplitName::train ? train : s == SplitName::val ? val : test; }
};

inline std::string image_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%04zu.png", i);
  return buf;
}

// Per-image spec drawn from the image's own RNG stream.
inline SynthSpec random_spec(std::uint64_t seed, std::size_t index, const DatasetOptions& opt) {
  Rng rng(substream(seed, "gen", index));
  SynthSpec s;
  s.kind = opt.kinds[index % opt.kinds.size()];
  s.size = opt.image_size;
  s.bit_depth = opt.depths[rng.below(opt.depths.size())];
  s.noise_sigma = rng.uniform(opt.noise_sigma_min, opt.noise_sigma_max);
  s.angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double span = rng.uniform(96.0, 255.0);
  s.lo = rng.uniform(0.0, 255.0 - span);
  s.hi = s.lo + span;
  s.seed = rng.next();
  return s;
}

// Images, not patches, are assigned to splits so no image leaks across them.
inline Dataset make_dataset(std::size_t n_images, std::uint64_t seed, const Split& split = {},
                            const DatasetOptions& opt = {}) {
  split.validate();
  require(n_images >= 10, "make_dataset needs at least 10 images");
  require(!opt.depths.empty() && !opt.kinds.empty(), "dataset options need depths and kinds");
  const auto n_train = static_cast<std::size_t>(std::floor(split.train * static_cast<double>(n_images) + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(split.val * static_cast<double>(n_images) + 1e-9));
  std::vector<std::size_t> order(n_images);
  for (std::size_t i = 0; i < n_images; ++i) order[i] = i;
  Rng rng(substream(seed, "split"));
  rng.shuffle(order.begin(), order.end());

  Dataset ds;
  ds.image_splits.resize(n_images);
  for (std::size_t r = 0; r < n_images; ++r)
    ds.image_splits[order[r]] = r < n_train ? SplitName::train : r < n_train + n_val ? SplitName::val : SplitName::test;

  for (std::size_t i = 0; i < n_images; ++i) {
    const SynthSpec spec = random_spec(seed, i, opt);
    GeneratedSample sample = make_sample(spec, opt.mask);
    const PatchGrid grid = tile(sample.image, opt.patch_size);
    const auto labels = label_patches(sample, grid);
    const PlaneF luma = luma_plane(sample.image);
    const std::string name = image_name(i);
    const SplitName sp = ds.image_splits[i];
    ds.image_names.push_back(name);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const auto o = grid.patches[k];
      ds.manifest.push_back({name, o.x, o.y, grid.patch_size, labels[k].value, sp});
      if (opt.compute_features) {
        const PlaneF patch = crop(luma, o.x, o.y, grid.patch_size, grid.patch_size);
        ds.split(sp).push_back(frequency_pair(patch, opt.freq, labels[k]));
      }
    }
    if (opt.keep_images) ds.images.push_back(std::move(sample));
  }
  return ds;
}

// Separable toy patches: vertical stripes (banded) or a flat field (non-banded).
inline PlaneF toy_patch(int n, bool banded, Rng& rng) {
  const float level = static_cast<float>(rng.uniform(0.2, 0.8));
  PlaneF p(n, n, level);
  if (!banded) return p;
  const int period = 4 + static_cast<int>(rng.below(5));
  const float amp = static_cast<float>(rng.uniform(0.05, 0.15));
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      if ((x / period) % 2) p.at(x, y) = level + amp;
  return p;
}

inline std::vector<PatchSample> make_toy_samples(std::size_t count, int n, std::uint64_t seed, const FreqConfig& freq = {}) {
  Rng rng(substream(seed, "toy"));
  std::vector<PatchSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const bool banded = i % 2 == 0;
    out.push_back(frequency_pair(toy_patch(n, banded, rng), freq, {banded ? Label::banded : Label::non_banded, 1.0}));
  }
  return out;
}

}  // namespace bandgauge::datagen
