#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace lesion::annotation {

/// Row-major n x d matrix of feature vectors.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t dims = 0;
  std::vector<double> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t n, std::size_t d) : rows(n), dims(d), values(n * d, 0.0) {}

  std::span<const double> row(std::size_t i) const { return {values.data() + i * dims, dims}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * dims, dims}; }
};

struct KMeansConfig {
  std::size_t k = 5;
  std::size_t restarts = 5;
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
  /// Called after every assignment step with (restart, iteration, sse).
  std::function<void(std::size_t, std::size_t, double)> on_iteration;
};

struct ClusterModel {
  std::size_t k = 0;
  std::size_t dims = 0;
  /// k x dims, row-major.
  std::vector<double> centroids;
  std::vector<std::size_t> assignments;
  double sse = 0.0;
  std::size_t iterations = 0;
  /// SSE after each assignment step of the winning restart.
  std::vector<double> sse_history;

  std::span<const double> centroid(std::size_t j) const { return {centroids.data() + j * dims, dims}; }
};

double squared_distance(std::span<const double> a, std::span<const double> b) noexcept;

std::size_t distinct_rows(const FeatureMatrix& features);

/// Best-SSE Lloyd run over `restarts` k-means++ seedings. Throws
/// DegenerateInputError when fewer than k distinct feature vectors exist.
ClusterModel kmeans_fit(const FeatureMatrix& features, const KMeansConfig& config);

}  // namespace lesion::annotation
