#pragma once

#include <png.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "image.hpp"

namespace bandgauge {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline PlanarImage interleaved_to_planar(const std::vector<std::uint8_t>& buf, int w, int h, int channels) {
  std::vector<Plane8> planes(static_cast<std::size_t>(channels), Plane8(w, h));
  for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i)
    for (int c = 0; c < channels; ++c) planes[static_cast<std::size_t>(c)].data[i] = buf[i * channels + c];
  return PlanarImage(std::move(planes));
}

inline std::vector<std::uint8_t> planar_to_interleaved(const PlanarImage& img) {
  const int c = img.channels();
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(img.width()) * img.height() * c);
  for (std::size_t i = 0; i < static_cast<std::size_t>(img.width()) * img.height(); ++i)
    for (int k = 0; k < c; ++k) buf[i * c + k] = img.plane8(k).data[i];
  return buf;
}

// Netpbm header token, skipping whitespace and '#' comments.
inline int pnm_read_int(std::istream& in) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  int v = -1;
  if (!(in >> v)) fail_input("malformed PNM header");
  return v;
}

inline PlanarImage load_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_input("cannot open " + path.string());
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
    fail_input("unsupported PNM variant in " + path.string());
  const int channels = magic[1] == '5' ? 1 : 3;
  const int w = pnm_read_int(in), h = pnm_read_int(in), maxval = pnm_read_int(in);
  if (w <= 0 || h <= 0) fail_input("zero image dimension in " + path.string());
  if (maxval != 255) fail_input("only 8-bit PNM (maxval 255) is supported");
  in.get();  // single whitespace before raster
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) fail_input("truncated PNM raster in " + path.string());
  return interleaved_to_planar(buf, w, h, channels);
}

inline void save_pnm(const PlanarImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_input("cannot write " + path.string());
  out << (img.channels() == 1 ? "P5" : "P6") << '\n' << img.width() << ' ' << img.height() << "\n255\n";
  const auto buf = planar_to_interleaved(img);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) fail_input("write failed for " + path.string());
}

#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wclobbered"
inline PlanarImage load_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) fail_input("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail_input("libpng initialisation failed");
  }
  std::vector<std::uint8_t> buf;
  int w = 0, h = 0, channels = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail_input("corrupt PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png), png_set_strip_alpha(png);
  png_read_update_info(png, info);
  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  channels = png_get_channels(png, info);
  if (w > 0 && h > 0 && (channels == 1 || channels == 3)) {
    buf.resize(static_cast<std::size_t>(w) * h * channels);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = buf.data() + static_cast<std::size_t>(y) * w * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (w <= 0 || h <= 0) fail_input("zero image dimension in " + path.string());
  if (channels != 1 && channels != 3) fail_input("unsupported PNG channel layout in " + path.string());
  return interleaved_to_planar(buf, w, h, channels);
}

inline void save_png(const PlanarImage& img, const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) fail_input("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail_input("libpng initialisation failed");
  }
  const auto buf = planar_to_interleaved(img);
  const int w = img.width(), h = img.height(), c = img.channels();
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(buf.data() + static_cast<std::size_t>(y) * w * c);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail_input("PNG encode failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

#pragma GCC diagnostic pop

inline std::string lower_ext(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  for (auto& ch : e) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return e;
}

}  // namespace detail

// Reads PNG or binary PGM/PPM, sniffing the magic bytes.
inline PlanarImage load_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) fail_input("cannot open " + path.string());
  unsigned char head[8] = {};
  probe.read(reinterpret_cast<char*>(head), 8);
  const auto got = probe.gcount();
  probe.close();
  if (got >= 8 && png_sig_cmp(head, 0, 8) == 0) return detail::load_png(path);
  if (got >= 2 && head[0] == 'P') return detail::load_pnm(path);
  fail_input("unsupported image format: " + path.string());
}

// Format chosen by extension: .png, .pgm/.ppm/.pnm. Float images are quantized to 8 bits.
inline void save_image(const PlanarImage& img, const std::filesystem::path& path) {
  require(!img.empty(), "cannot save an empty image");
  if (img.depth() == SampleDepth::f32) {
    std::vector<Plane8> planes;
    for (const auto& p : img.planesf()) planes.push_back(to_u8(p));
    save_image(PlanarImage(std::move(planes)), path);
    return;
  }
  const auto ext = detail::lower_ext(path);
  if (ext == ".png") return detail::save_png(img, path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
    if ((ext == ".pgm" && img.channels() != 1) || (ext == ".ppm" && img.channels() != 3))
      fail_input("channel count does not match " + ext);
    return detail::save_pnm(img, path);
  }
  fail_input("unsupported output extension: " + path.string());
}

// Raw little-endian float32 dump: "BGF1" magic, width, height, then samples.
inline void save_float_plane(const PlaneF& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_input("cannot write " + path.string());
  out.write("BGF1", 4);
  const std::int32_t dims[2] = {p.width, p.height};
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  out.write(reinterpret_cast<const char*>(p.data.data()), static_cast<std::streamsize>(p.size() * sizeof(float)));
}

}  // namespace bandgauge
