#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lesion/image.hpp"

namespace lesion::io {

/// Decodes a PNG or JPEG file (detected by signature) to 8-bit RGB.
/// Throws FormatError naming the path on any decode failure.
ImageRGB read_image(const std::filesystem::path& path);

void write_png(const ImageRGB& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const ImageRGB& image);

/// Masks are 8-bit grayscale PNG, 0 or 255.
void write_mask(const BitMask& mask, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const BitMask& mask);
/// Any nonzero sample reads as foreground.
BitMask read_mask(const std::filesystem::path& path);

}  // namespace lesion::io
