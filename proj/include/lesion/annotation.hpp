#pragma once

// Self-learning annotation: K-means over colour+position features, merge of
// the clusters into a dark (lesion) and a light (skin) group, morphological
// cleanup, and automatic orientation so the lesion is the foreground.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lesion/dataset.hpp"
#include "lesion/image.hpp"
#include "lesion/kmeans.hpp"
#include "lesion/manifest.hpp"

namespace lesion::annotation {

/// (r, g, b) in [0,1] and (x, y) in [0,1] scaled by the spatial weight.
struct PixelFeature {
  double r = 0, g = 0, b = 0, x = 0, y = 0;
  friend bool operator==(const PixelFeature&, const PixelFeature&) = default;
};

inline constexpr std::size_t kMinImagePixels = 64;

std::vector<PixelFeature> extract_features(const ImageRGB& image, double spatial_weight);
FeatureMatrix to_matrix(std::span<const PixelFeature> features);

/// Rec.601 luma of a colour in [0,1].
double luminance(double r, double g, double b) noexcept;

struct MergeResult {
  BitMask mask;
  /// Cluster ids in the dark group.
  std::vector<std::size_t> foreground_clusters;
};

/// Splits centroid luminances into a dark and a light group by exact 1-D
/// 2-means (cuts only between distinct values); dark clusters become 1.
MergeResult centroid_merge_mask(const ClusterModel& model, std::size_t height, std::size_t width);

/// Opening then closing with a 3x3 cross, keep the largest 4-connected
/// component, fill enclosed holes. Throws EmptyMaskError if nothing remains.
BitMask clean_mask(const BitMask& mask);

BitMask erode_cross(const BitMask& mask);
BitMask dilate_cross(const BitMask& mask);
BitMask largest_component(const BitMask& mask);
BitMask fill_holes(const BitMask& mask);

/// Foreground share of the one-pixel image border.
double border_fraction(const BitMask& mask);

struct Oriented {
  BitMask mask;
  bool inverted = false;
  double border_fraction = 0.0;
};

/// Flips the mask when more than half of the border is foreground.
Oriented orient_mask(const BitMask& mask);

struct AnnotationConfig {
  std::size_t k = 5;
  double spatial_weight = 0.1;
  std::size_t restarts = 5;
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
};

struct AnnotationResult {
  BitMask mask;
  double border_fraction = 0.0;
  bool inverted = false;
};

/// Full per-image chain: features, k-means, merge, orient, clean, orient.
AnnotationResult annotate_image(const ImageRGB& image, const AnnotationConfig& config);

using lesion::CorpusImage;
using lesion::list_images;

/// Annotates every image, writing masks to mask_dir/<id>.png and the manifest
/// to manifest_path. Per-image failures are recorded, never fatal.
std::vector<MaskEntry> annotate_corpus(std::span<const CorpusImage> images, const std::filesystem::path& mask_dir,
                                       const std::filesystem::path& manifest_path, const AnnotationConfig& config);

std::vector<MaskEntry> annotate_corpus(const std::filesystem::path& image_dir, const std::filesystem::path& mask_dir,
                                       const std::filesystem::path& manifest_path, const AnnotationConfig& config);

}  // namespace lesion::annotation
