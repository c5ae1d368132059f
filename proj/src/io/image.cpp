#include "lesion/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lesion/errors.hpp"

namespace lesion {

ImageRGB::ImageRGB(std::size_t h, std::size_t w, std::array<std::uint8_t, 3> fill) : height(h), width(w) {
  pixels.resize(h * w * 3);
  for (std::size_t i = 0; i < h * w; ++i) std::copy(fill.begin(), fill.end(), pixels.begin() + static_cast<long>(i * 3));
}

BitMask::BitMask(std::size_t h, std::size_t w, bool fill) : height(h), width(w), bits(h * w, fill ? 1 : 0) {}

std::size_t BitMask::count() const noexcept {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

BitMask BitMask::inverted() const {
  BitMask out = *this;
  for (auto& b : out.bits) b = b ? 0 : 1;
  return out;
}

BoundingBox bounding_box(const BitMask& mask) {
  BoundingBox box{mask.height, mask.width, 0, 0};
  bool any = false;
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      if (!mask.get(y, x)) continue;
      any = true;
      box.top = std::min(box.top, y);
      box.left = std::min(box.left, x);
      box.bottom = std::max(box.bottom, y);
      box.right = std::max(box.right, x);
    }
  }
  if (!any) throw EmptyMaskError("mask has no foreground pixels");
  return box;
}

void require_same_size(const ImageRGB& image, const BitMask& mask, const char* what) {
  if (image.height != mask.height || image.width != mask.width) {
    throw DimensionError(std::string(what) + ": image " + std::to_string(image.height) + "x" +
                         std::to_string(image.width) + " vs mask " + std::to_string(mask.height) + "x" +
                         std::to_string(mask.width));
  }
}

void require_same_size(const BitMask& a, const BitMask& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionError(std::string(what) + ": mask " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                         " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

Tensor to_tensor(const ImageRGB& image) {
  Tensor t({3, image.height, image.width});
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) t.at(c, y, x) = image.at(y, x, c) / 255.0;
    }
  }
  return t;
}

ImageRGB crop(const ImageRGB& image, const BoundingBox& box) {
  if (box.bottom >= image.height || box.right >= image.width || box.top > box.bottom || box.left > box.right) {
    throw DimensionError("crop box outside image");
  }
  ImageRGB out(box.height(), box.width());
  for (std::size_t y = 0; y < out.height; ++y) {
    const auto* src = &image.pixels[((box.top + y) * image.width + box.left) * 3];
    std::copy(src, src + out.width * 3, &out.pixels[y * out.width * 3]);
  }
  return out;
}

ImageRGB resize_bilinear(const ImageRGB& image, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || image.height == 0 || image.width == 0) {
    throw DimensionError("resize_bilinear: zero-sized image");
  }
  if (height == image.height && width == image.width) return image;
  ImageRGB out(height, width);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  const double max_y = static_cast<double>(image.height - 1);
  const double max_x = static_cast<double>(image.width - 1);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = (1 - wx) * image.at(y0, x0, c) + wx * image.at(y0, x1, c);
        const double bottom = (1 - wx) * image.at(y1, x0, c) + wx * image.at(y1, x1, c);
        const double v = (1 - wy) * top + wy * bottom;
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

BitMask resize_nearest(const BitMask& mask, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw DimensionError("resize_nearest: zero-sized target");
  if (height == mask.height && width == mask.width) return mask;
  BitMask out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = std::min(mask.height - 1, static_cast<std::size_t>((static_cast<double>(y) + 0.5) *
                                                                               static_cast<double>(mask.height) /
                                                                               static_cast<double>(height)));
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = std::min(mask.width - 1, static_cast<std::size_t>((static_cast<double>(x) + 0.5) *
                                                                                static_cast<double>(mask.width) /
                                                                                static_cast<double>(width)));
      out.set(y, x, mask.get(sy, sx));
    }
  }
  return out;
}

}  // namespace lesion
