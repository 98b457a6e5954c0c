#include "png_sheet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "rfgen/errors.hpp"

namespace rfgen::cli {

namespace {

void put(Canvas& c, int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (x < 0 || y < 0 || x >= c.width || y >= c.height) return;
  auto* p = &c.rgb[(static_cast<std::size_t>(y) * c.width + x) * 3];
  p[0] = r;
  p[1] = g;
  p[2] = b;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

template <typename Fn>
void draw(const ImageF& img, int x0, int y0, int zoom, Fn&& color) {
  for (int y = 0; y < img.height * zoom; ++y)
    for (int x = 0; x < img.width * zoom; ++x) color(x0 + x, y0 + y, y / zoom, x / zoom);
}

}  // namespace

void draw_gray(Canvas& canvas, const ImageF& img, int channel, int x0, int y0, int zoom) {
  draw(img, x0, y0, zoom, [&](int cx, int cy, int y, int x) {
    const auto v = to_byte(img(channel, y, x));
    put(canvas, cx, cy, v, v, v);
  });
}

void draw_signed(Canvas& canvas, const ImageF& diff, int channel, int x0, int y0, int zoom, double range) {
  draw(diff, x0, y0, zoom, [&](int cx, int cy, int y, int x) {
    const double v = diff(channel, y, x) / range;
    const auto m = to_byte(std::abs(v));
    if (v > 0) {
      put(canvas, cx, cy, 255, static_cast<std::uint8_t>(255 - m), static_cast<std::uint8_t>(255 - m));
    } else {
      put(canvas, cx, cy, static_cast<std::uint8_t>(255 - m), static_cast<std::uint8_t>(255 - m), 255);
    }
  });
}

void write_png(const std::filesystem::path& path, const Canvas& canvas) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(canvas.width), static_cast<png_uint_32>(canvas.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < canvas.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(&canvas.rgb[static_cast<std::size_t>(y) * canvas.width * 3]));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace rfgen::cli
