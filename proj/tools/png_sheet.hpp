#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rfgen/image.hpp"

namespace rfgen::cli {

/// RGB canvas for contact sheets, 8 bits per channel.
struct Canvas {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Canvas(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}
};

/// Grayscale tile of one channel of `img`, [0, 1] mapped to 0-255.
void draw_gray(Canvas& canvas, const ImageF& img, int channel, int x0, int y0, int zoom);
/// Signed map: red for positive, blue for negative, saturating at `range`.
void draw_signed(Canvas& canvas, const ImageF& diff, int channel, int x0, int y0, int zoom, double range);

void write_png(const std::filesystem::path& path, const Canvas& canvas);

}  // namespace rfgen::cli
