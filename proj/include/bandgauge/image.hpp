#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "error.hpp"

namespace bandgauge {

// Row-major single-channel raster.
template <class T>
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Plane() = default;
  Plane(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::size_t size() const { return data.size(); }
  T& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T& at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

  // Edge-replicated read.
  const T& clamped(int x, int y) const {
    return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1));
  }

  bool operator==(const Plane&) const = default;
};

using PlaneF = Plane<float>;
using Plane8 = Plane<std::uint8_t>;

enum class SampleDepth { u8, f32 };

// Decoded raster with 1 or 3 channels of either 8-bit or [0,1] float samples.
class PlanarImage {
 public:
  PlanarImage() = default;

  explicit PlanarImage(std::vector<Plane8> planes) : planes_(std::move(planes)) { validate(); }
  explicit PlanarImage(std::vector<PlaneF> planes) : planes_(std::move(planes)) { validate(); }
  explicit PlanarImage(Plane8 gray) : PlanarImage(std::vector<Plane8>{std::move(gray)}) {}
  explicit PlanarImage(PlaneF gray) : PlanarImage(std::vector<PlaneF>{std::move(gray)}) {}

  static PlanarImage filled_u8(int w, int h, int channels, std::uint8_t v) {
    return PlanarImage(std::vector<Plane8>(static_cast<std::size_t>(channels), Plane8(w, h, v)));
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  SampleDepth depth() const { return std::holds_alternative<std::vector<Plane8>>(planes_) ? SampleDepth::u8 : SampleDepth::f32; }
  bool empty() const { return channels_ == 0; }

  const Plane8& plane8(int c) const { return std::get<std::vector<Plane8>>(planes_).at(static_cast<std::size_t>(c)); }
  const PlaneF& planef(int c) const { return std::get<std::vector<PlaneF>>(planes_).at(static_cast<std::size_t>(c)); }
  const std::vector<Plane8>& planes8() const { return std::get<std::vector<Plane8>>(planes_); }
  const std::vector<PlaneF>& planesf() const { return std::get<std::vector<PlaneF>>(planes_); }

  bool operator==(const PlanarImage&) const = default;

 private:
  template <class T>
  void check(const std::vector<Plane<T>>& planes) {
    require(planes.size() == 1 || planes.size() == 3, "image must have 1 or 3 channels");
    width_ = planes[0].width;
    height_ = planes[0].height;
    channels_ = static_cast<int>(planes.size());
    require(width_ > 0 && height_ > 0, "image dimensions must be positive");
    for (const auto& p : planes) {
      require(p.width == width_ && p.height == height_, "channel planes differ in size");
      require(p.data.size() == static_cast<std::size_t>(width_) * height_, "plane length != width*height");
      if constexpr (std::is_floating_point_v<T>) {
        for (T v : p.data)
          require(std::isfinite(v) && v >= T(0) && v <= T(1), "float samples must lie in [0,1]");
      }
    }
  }
  void validate() {
    std::visit([this](const auto& planes) { check(planes); }, planes_);
  }

  std::variant<std::vector<Plane8>, std::vector<PlaneF>> planes_;
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
};

inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

// BT.601 luma scaled to [0,1].
inline PlaneF luma_plane(const PlanarImage& img) {
  require(!img.empty(), "empty image");
  PlaneF out(img.width(), img.height());
  const bool u8 = img.depth() == SampleDepth::u8;
  const double scale = u8 ? 1.0 / 255.0 : 1.0;
  auto sample = [&](int c, std::size_t i) -> double {
    return u8 ? static_cast<double>(img.plane8(c).data[i]) : static_cast<double>(img.planef(c).data[i]);
  };
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = img.channels() == 3
                   ? kLumaR * sample(0, i) + kLumaG * sample(1, i) + kLumaB * sample(2, i)
                   : sample(0, i);
    out.data[i] = static_cast<float>(std::clamp(v * scale, 0.0, 1.0));
  }
  return out;
}

inline PlanarImage to_luma(const PlanarImage& img) { return PlanarImage(luma_plane(img)); }

inline Plane8 to_u8(const PlaneF& p) {
  Plane8 out(p.width, p.height);
  for (std::size_t i = 0; i < p.size(); ++i)
    out.data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(p.data[i], 0.0f, 1.0f) * 255.0f));
  return out;
}

template <class T>
Plane<T> crop(const Plane<T>& src, int x0, int y0, int w, int h) {
  require(x0 >= 0 && y0 >= 0 && x0 + w <= src.width && y0 + h <= src.height, "crop outside plane");
  Plane<T> out(w, h);
  for (int y = 0; y < h; ++y)
    std::copy_n(&src.at(x0, y0 + y), w, &out.at(0, y));
  return out;
}

// ---------------------------------------------------------------------------
// YCbCr 4:2:0, BT.601 full range.

struct YCbCr420 {
  Plane8 y;   // full resolution
  Plane8 cb;  // half resolution
  Plane8 cr;
};

inline std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

inline YCbCr420 rgb_to_ycbcr420(const PlanarImage& img) {
  require(img.channels() == 3 && img.depth() == SampleDepth::u8, "YCbCr conversion needs an 8-bit RGB image");
  require(img.width() % 2 == 0 && img.height() % 2 == 0, "YCbCr 4:2:0 needs even width and height");
  const int w = img.width(), h = img.height();
  const auto& r = img.plane8(0);
  const auto& g = img.plane8(1);
  const auto& b = img.plane8(2);
  YCbCr420 out{Plane8(w, h), Plane8(w / 2, h / 2), Plane8(w / 2, h / 2)};
  std::vector<double> cb(static_cast<std::size_t>(w) * h), cr(cb.size());
  for (std::size_t i = 0; i < cb.size(); ++i) {
    const double R = r.data[i], G = g.data[i], B = b.data[i];
    out.y.data[i] = clamp_u8(kLumaR * R + kLumaG * G + kLumaB * B);
    cb[i] = 128.0 - 0.168736 * R - 0.331264 * G + 0.5 * B;
    cr[i] = 128.0 + 0.5 * R - 0.418688 * G - 0.081312 * B;
  }
  for (int y = 0; y < h / 2; ++y) {
    for (int x = 0; x < w / 2; ++x) {
      double sb = 0, sr = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const auto i = static_cast<std::size_t>(2 * y + dy) * w + (2 * x + dx);
          sb += cb[i];
          sr += cr[i];
        }
      out.cb.at(x, y) = clamp_u8(sb / 4.0);
      out.cr.at(x, y) = clamp_u8(sr / 4.0);
    }
  }
  return out;
}

inline PlanarImage ycbcr420_to_rgb(const YCbCr420& ycc) {
  const int w = ycc.y.width, h = ycc.y.height;
  require(ycc.cb.width * 2 == w && ycc.cb.height * 2 == h && ycc.cr.width == ycc.cb.width &&
              ycc.cr.height == ycc.cb.height,
          "chroma planes must be half resolution");
  std::vector<Plane8> rgb(3, Plane8(w, h));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double Y = ycc.y.at(x, y);
      const double Cb = ycc.cb.at(x / 2, y / 2) - 128.0;
      const double Cr = ycc.cr.at(x / 2, y / 2) - 128.0;
      rgb[0].at(x, y) = clamp_u8(Y + 1.402 * Cr);
      rgb[1].at(x, y) = clamp_u8(Y - 0.344136 * Cb - 0.714136 * Cr);
      rgb[2].at(x, y) = clamp_u8(Y + 1.772 * Cb);
    }
  }
  return PlanarImage(std::move(rgb));
}

// ---------------------------------------------------------------------------
// Patch tiling.

struct PatchOrigin {
  int x = 0;
  int y = 0;
  bool operator==(const PatchOrigin&) const = default;
};

// Non-overlapping N x N tiling anchored at (0,0); right/bottom remainders are dropped.
struct PatchGrid {
  int patch_size = 0;
  int cols = 0;
  int rows = 0;
  int image_width = 0;
  int image_height = 0;
  std::vector<PatchOrigin> patches;  // raster order

  std::size_t size() const { return patches.size(); }
};

inline PatchGrid tile(int image_width, int image_height, int n) {
  require(n >= 8, "patch size must be at least 8");
  require(n <= std::min(image_width, image_height), "patch size larger than image");
  PatchGrid g;
  g.patch_size = n;
  g.cols = image_width / n;
  g.rows = image_height / n;
  g.image_width = image_width;
  g.image_height = image_height;
  g.patches.reserve(static_cast<std::size_t>(g.cols) * g.rows);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) g.patches.push_back({c * n, r * n});
  return g;
}

inline PatchGrid tile(const PlanarImage& img, int n) { return tile(img.width(), img.height(), n); }

enum class Label { non_banded = 0, banded = 1 };

struct PatchLabel {
  Label value = Label::non_banded;
  double confidence = 1.0;

  bool banded() const { return value == Label::banded; }
  bool operator==(const PatchLabel&) const = default;
};

inline const char* to_string(Label l) { return l == Label::banded ? "banded" : "non_banded"; }

}  // namespace bandgauge
