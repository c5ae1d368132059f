#include "lesion/annotation.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "lesion/errors.hpp"
#include "lesion/image_io.hpp"

namespace lesion::annotation {

namespace fs = std::filesystem;

std::vector<PixelFeature> extract_features(const ImageRGB& image, double spatial_weight) {
  if (!(spatial_weight >= 0.0)) throw ConfigError("extract_features: spatial weight must be >= 0");
  if (image.pixels.size() != image.pixel_count() * 3) throw DimensionError("extract_features: malformed image");
  const double sx = image.width > 1 ? spatial_weight / static_cast<double>(image.width - 1) : 0.0;
  const double sy = image.height > 1 ? spatial_weight / static_cast<double>(image.height - 1) : 0.0;
  std::vector<PixelFeature> out;
  out.reserve(image.pixel_count());
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      out.push_back({image.at(y, x, 0) / 255.0, image.at(y, x, 1) / 255.0, image.at(y, x, 2) / 255.0,
                     static_cast<double>(x) * sx, static_cast<double>(y) * sy});
    }
  }
  return out;
}

FeatureMatrix to_matrix(std::span<const PixelFeature> features) {
  FeatureMatrix m(features.size(), 5);
  for (std::size_t i = 0; i < features.size(); ++i) {
    auto row = m.row(i);
    row[0] = features[i].r;
    row[1] = features[i].g;
    row[2] = features[i].b;
    row[3] = features[i].x;
    row[4] = features[i].y;
  }
  return m;
}

double luminance(double r, double g, double b) noexcept { return 0.299 * r + 0.587 * g + 0.114 * b; }

MergeResult centroid_merge_mask(const ClusterModel& model, std::size_t height, std::size_t width) {
  if (model.k < 2) throw ContractError("centroid_merge_mask: need at least two clusters");
  if (model.dims < 3) throw DimensionError("centroid_merge_mask: centroids carry no colour");
  if (model.assignments.size() != height * width) {
    throw DimensionError("centroid_merge_mask: assignment count does not match mask size");
  }
  std::vector<double> lum(model.k);
  for (std::size_t j = 0; j < model.k; ++j) {
    const auto c = model.centroid(j);
    lum[j] = luminance(c[0], c[1], c[2]);
  }
  const auto [lo, hi] = std::minmax_element(lum.begin(), lum.end());
  if (*hi - *lo <= 1e-9) throw DegenerateInputError("centroid_merge_mask: all centroid luminances are equal");

  // Exact 1-D 2-means: the optimum is a threshold on the sorted values.
  std::vector<double> sorted = lum;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  double best_sse = 0.0, threshold = 0.0;
  bool found = false;
  for (std::size_t cut = 1; cut < n; ++cut) {
    if (sorted[cut] == sorted[cut - 1]) continue;
    double sse = 0.0;
    for (const auto& [begin, end] : {std::pair{std::size_t{0}, cut}, std::pair{cut, n}}) {
      const double mean = std::accumulate(sorted.begin() + begin, sorted.begin() + end, 0.0) / (end - begin);
      for (std::size_t i = begin; i < end; ++i) sse += (sorted[i] - mean) * (sorted[i] - mean);
    }
    if (!found || sse < best_sse) {
      found = true;
      best_sse = sse;
      threshold = sorted[cut - 1];
    }
  }

  MergeResult result;
  std::vector<bool> dark(model.k);
  for (std::size_t j = 0; j < model.k; ++j) {
    dark[j] = lum[j] <= threshold;
    if (dark[j]) result.foreground_clusters.push_back(j);
  }
  result.mask = BitMask(height, width);
  for (std::size_t i = 0; i < model.assignments.size(); ++i) {
    result.mask.bits[i] = dark[model.assignments[i]] ? 1 : 0;
  }
  return result;
}

AnnotationResult annotate_image(const ImageRGB& image, const AnnotationConfig& config) {
  if (image.pixel_count() < kMinImagePixels) {
    throw DegenerateInputError("annotate_image: image has fewer than 64 pixels");
  }
  const auto features = extract_features(image, config.spatial_weight);
  KMeansConfig kc;
  kc.k = config.k;
  kc.restarts = config.restarts;
  kc.max_iterations = config.max_iterations;
  kc.tolerance = config.tolerance;
  kc.seed = config.seed;
  const ClusterModel model = kmeans_fit(to_matrix(features), kc);
  const MergeResult merged = centroid_merge_mask(model, image.height, image.width);

  // Orient before cleaning: with skin as foreground, hole filling would
  // swallow the lesion.
  const Oriented first = orient_mask(merged.mask);
  const BitMask cleaned = clean_mask(first.mask);
  AnnotationResult result;
  result.border_fraction = first.border_fraction;
  if (cleaned.all_one()) throw DegenerateInputError("annotate_image: mask covers the whole image");
  const Oriented second = orient_mask(cleaned);
  result.inverted = first.inverted != second.inverted;
  result.mask = second.inverted ? clean_mask(second.mask) : second.mask;
  if (result.mask.all_one()) throw DegenerateInputError("annotate_image: mask covers the whole image");
  return result;
}

std::vector<MaskEntry> annotate_corpus(std::span<const CorpusImage> images, const fs::path& mask_dir,
                                       const fs::path& manifest_path, const AnnotationConfig& config) {
  if (images.empty()) throw NoInputError("annotate_corpus: no images to annotate");
  fs::create_directories(mask_dir);
  std::vector<MaskEntry> entries;
  entries.reserve(images.size());
  for (const auto& item : images) {
    MaskEntry e;
    e.image_id = item.image_id;
    try {
      const AnnotationResult r = annotate_image(io::read_image(item.path), config);
      const fs::path mask_path = mask_dir / (item.image_id + ".png");
      io::write_mask(r.mask, mask_path);
      e.mask_path = mask_path.string();
      e.border_fraction = r.border_fraction;
      e.inverted = r.inverted;
      e.status = MaskStatus::Auto;
    } catch (const Error& ex) {
      e.status = MaskStatus::Failed;
      e.failure_reason = std::string(to_string(ex.kind())) + ": " + ex.what();
    }
    entries.push_back(std::move(e));
  }

  // Records for images outside this run are kept; ours replace theirs.
  std::map<std::string, MaskEntry> merged;
  if (fs::exists(manifest_path)) {
    for (auto& old : read_mask_manifest(manifest_path)) merged[old.image_id] = std::move(old);
  }
  for (const auto& e : entries) merged[e.image_id] = e;
  std::vector<MaskEntry> all;
  all.reserve(merged.size());
  for (auto& [id, e] : merged) all.push_back(std::move(e));
  write_mask_manifest(manifest_path, all);
  return entries;
}

std::vector<MaskEntry> annotate_corpus(const fs::path& image_dir, const fs::path& mask_dir,
                                       const fs::path& manifest_path, const AnnotationConfig& config) {
  const auto images = list_images(image_dir);
  return annotate_corpus(images, mask_dir, manifest_path, config);
}

}  // namespace lesion::annotation
