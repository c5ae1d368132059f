#include "lesion/errors.hpp"
#include "lesion/pipeline.hpp"

namespace lesion::pipeline {

ImageRGB apply_mask(const ImageRGB& image, const BitMask& mask) {
  require_same_size(image, mask, "apply_mask");
  ImageRGB out = image;
  for (std::size_t p = 0; p < mask.pixel_count(); ++p) {
    if (mask.bits[p]) continue;
    for (std::size_t c = 0; c < 3; ++c) out.pixels[p * 3 + c] = 0;
  }
  return out;
}

ImageRGB masked_region(const ImageRGB& image, const BitMask& mask) {
  require_same_size(image, mask, "mask_and_crop");
  if (mask.all_zero()) throw EmptyMaskError("mask_and_crop: mask has no foreground");
  return crop(apply_mask(image, mask), bounding_box(mask));
}

ImageRGB mask_and_crop(const ImageRGB& image, const BitMask& mask, std::size_t crop_size) {
  if (crop_size == 0) throw ConfigError("crop size must be positive");
  return resize_bilinear(masked_region(image, mask), crop_size, crop_size);
}

}  // namespace lesion::pipeline
