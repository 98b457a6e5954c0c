#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "rfgen/image.hpp"

namespace rfgen {

// Raw tensor format: 16-byte header ("RFC1", u32 width, u32 height,
// u32 channels), then width*height*channels little-endian float32 values,
// channel-major, rows top to bottom.

std::string encode_raw(const ImageF& img);
ImageF decode_raw(std::string_view bytes);

void write_raw(const std::filesystem::path& path, const ImageF& img);
ImageF read_raw(const std::filesystem::path& path);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace rfgen
