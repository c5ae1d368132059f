#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "lesion/tensor.hpp"

namespace lesion {

/// 8-bit RGB image, interleaved row-major.
struct ImageRGB {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  ImageRGB() = default;
  ImageRGB(std::size_t h, std::size_t w, std::array<std::uint8_t, 3> fill = {0, 0, 0});

  std::size_t pixel_count() const noexcept { return height * width; }
  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) noexcept { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const noexcept { return pixels[(y * width + x) * 3 + c]; }

  friend bool operator==(const ImageRGB&, const ImageRGB&) = default;
};

/// Per-pixel binary map; 1 marks lesion foreground.
struct BitMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  BitMask() = default;
  BitMask(std::size_t h, std::size_t w, bool fill = false);

  std::size_t pixel_count() const noexcept { return height * width; }
  bool get(std::size_t y, std::size_t x) const noexcept { return bits[y * width + x] != 0; }
  void set(std::size_t y, std::size_t x, bool v) noexcept { bits[y * width + x] = v ? 1 : 0; }

  std::size_t count() const noexcept;
  bool all_zero() const noexcept { return count() == 0; }
  bool all_one() const noexcept { return count() == pixel_count(); }
  BitMask inverted() const;

  friend bool operator==(const BitMask&, const BitMask&) = default;
};

/// Inclusive pixel bounds.
struct BoundingBox {
  std::size_t top = 0, left = 0, bottom = 0, right = 0;

  std::size_t height() const noexcept { return bottom - top + 1; }
  std::size_t width() const noexcept { return right - left + 1; }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Tight bounds of the foreground; throws EmptyMaskError for an empty mask.
BoundingBox bounding_box(const BitMask& mask);

void require_same_size(const ImageRGB& image, const BitMask& mask, const char* what);
void require_same_size(const BitMask& a, const BitMask& b, const char* what);

/// [3,H,W] tensor with values scaled to [0,1].
Tensor to_tensor(const ImageRGB& image);

ImageRGB crop(const ImageRGB& image, const BoundingBox& box);

/// Bilinear resampling with half-pixel centres.
ImageRGB resize_bilinear(const ImageRGB& image, std::size_t height, std::size_t width);
/// Nearest-neighbour resampling; binary values survive unchanged.
BitMask resize_nearest(const BitMask& mask, std::size_t height, std::size_t width);

}  // namespace lesion
