#include "lesion/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lesion/errors.hpp"
#include "lesion/random.hpp"

namespace lesion::annotation {

double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

std::size_t distinct_rows(const FeatureMatrix& features) {
  if (features.rows == 0) return 0;
  std::vector<std::size_t> order(features.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto less = [&](std::size_t a, std::size_t b) {
    auto ra = features.row(a), rb = features.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  };
  std::sort(order.begin(), order.end(), less);
  std::size_t distinct = 1;
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (less(order[i - 1], order[i])) ++distinct;
  }
  return distinct;
}

namespace {

std::vector<double> seed_plus_plus(const FeatureMatrix& f, std::size_t k, Rng& rng) {
  std::vector<double> centroids(k * f.dims);
  auto set_centroid = [&](std::size_t j, std::size_t row) {
    auto src = f.row(row);
    std::copy(src.begin(), src.end(), centroids.begin() + static_cast<long>(j * f.dims));
  };
  set_centroid(0, rng.index(f.rows));

  std::vector<double> nearest(f.rows, std::numeric_limits<double>::infinity());
  for (std::size_t j = 1; j < k; ++j) {
    const std::span<const double> last(centroids.data() + (j - 1) * f.dims, f.dims);
    double total = 0.0;
    for (std::size_t i = 0; i < f.rows; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(f.row(i), last));
      total += nearest[i];
    }
    const double target = rng.uniform() * total;
    double running = 0.0;
    std::size_t pick = f.rows;
    for (std::size_t i = 0; i < f.rows; ++i) {
      if (nearest[i] <= 0.0) continue;
      running += nearest[i];
      pick = i;
      if (running > target) break;
    }
    set_centroid(j, pick);
  }
  return centroids;
}

// Nearest-centroid assignment. An empty cluster takes the point farthest from
// its own centroid (drawn from a cluster that can spare one), which becomes the
// new centroid. Returns the SSE of the resulting assignment.
double assign(const FeatureMatrix& f, std::size_t k, std::vector<double>& centroids,
              std::vector<std::size_t>& assignments) {
  std::vector<double> dist(f.rows);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < f.rows; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const double d = squared_distance(f.row(i), std::span<const double>(centroids.data() + j * f.dims, f.dims));
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    assignments[i] = best_j;
    dist[i] = best;
    ++counts[best_j];
  }

  for (std::size_t j = 0; j < k; ++j) {
    if (counts[j] != 0) continue;
    std::size_t far = f.rows;
    for (std::size_t i = 0; i < f.rows; ++i) {
      if (counts[assignments[i]] < 2 || dist[i] <= 0.0) continue;
      if (far == f.rows || dist[i] > dist[far]) far = i;
    }
    if (far == f.rows) throw DegenerateInputError("kmeans: cannot repair empty cluster");
    --counts[assignments[far]];
    assignments[far] = j;
    counts[j] = 1;
    dist[far] = 0.0;
    auto src = f.row(far);
    std::copy(src.begin(), src.end(), centroids.begin() + static_cast<long>(j * f.dims));
  }
  return std::accumulate(dist.begin(), dist.end(), 0.0);
}

double update(const FeatureMatrix& f, std::size_t k, const std::vector<std::size_t>& assignments,
              std::vector<double>& centroids) {
  std::vector<double> sums(k * f.dims, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < f.rows; ++i) {
    const std::size_t j = assignments[i];
    auto r = f.row(i);
    for (std::size_t d = 0; d < f.dims; ++d) sums[j * f.dims + d] += r[d];
    ++counts[j];
  }
  double shift = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double moved = 0.0;
    for (std::size_t d = 0; d < f.dims; ++d) {
      const double mean = sums[j * f.dims + d] / static_cast<double>(counts[j]);
      const double diff = mean - centroids[j * f.dims + d];
      moved += diff * diff;
      centroids[j * f.dims + d] = mean;
    }
    shift = std::max(shift, std::sqrt(moved));
  }
  return shift;
}

}  // namespace

ClusterModel kmeans_fit(const FeatureMatrix& features, const KMeansConfig& config) {
  if (config.k == 0) throw ConfigError("kmeans: k must be at least 1");
  if (config.restarts == 0) throw ConfigError("kmeans: restarts must be at least 1");
  if (features.values.size() != features.rows * features.dims) throw DimensionError("kmeans: malformed feature matrix");
  const std::size_t distinct = distinct_rows(features);
  if (distinct < config.k) {
    throw DegenerateInputError("kmeans: " + std::to_string(distinct) + " distinct features for k=" +
                               std::to_string(config.k));
  }

  Rng rng(config.seed);
  ClusterModel best;
  bool have_best = false;
  for (std::size_t restart = 0; restart < config.restarts; ++restart) {
    ClusterModel run;
    run.k = config.k;
    run.dims = features.dims;
    run.centroids = seed_plus_plus(features, config.k, rng);
    run.assignments.assign(features.rows, 0);

    auto record = [&](double sse) {
      if (config.on_iteration) config.on_iteration(restart, run.sse_history.size(), sse);
      run.sse_history.push_back(sse);
      run.sse = sse;
    };
    record(assign(features, config.k, run.centroids, run.assignments));
    for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
      const double shift = update(features, config.k, run.assignments, run.centroids);
      record(assign(features, config.k, run.centroids, run.assignments));
      run.iterations = iter + 1;
      if (shift < config.tolerance) break;
    }
    if (!have_best || run.sse < best.sse) {
      best = std::move(run);
      have_best = true;
    }
  }
  return best;
}

}  // namespace lesion::annotation
