#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "lesion/errors.hpp"
#include "lesion/metrics.hpp"

namespace lesion::metrics {

namespace {

struct Point {
  double x, y;
};

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Andrew's monotone chain; collinear points dropped.
std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  if (pts.size() < 3) return pts;
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

// Length of the 0.5 iso-contour traced by marching squares over the mask
// (zero outside). Axis steps count 1, corner cuts sqrt(2)/2.
double contour_length(const BitMask& mask) {
  const auto h = static_cast<long>(mask.height), w = static_cast<long>(mask.width);
  auto on = [&](long y, long x) { return y >= 0 && x >= 0 && y < h && x < w && mask.get(y, x); };
  const double half_diag = std::numbers::sqrt2 / 2;
  double length = 0.0;
  for (long y = -1; y < h; ++y) {
    for (long x = -1; x < w; ++x) {
      const bool a = on(y, x), b = on(y, x + 1), c = on(y + 1, x + 1), d = on(y + 1, x);
      const int n = a + b + c + d;
      if (n == 1 || n == 3) {
        length += half_diag;
      } else if (n == 2) {
        length += (a && c) || (b && d) ? 2 * half_diag : 1.0;
      }
    }
  }
  return length;
}

}  // namespace

AbcdFeatures abcd_features(const ImageRGB& image, const BitMask& mask) {
  require_same_size(image, mask, "abcd_features");
  AbcdFeatures f;
  f.area_px = mask.count();
  if (f.area_px == 0) throw EmptyMaskError("abcd_features: empty mask");
  const double area = static_cast<double>(f.area_px);

  double sx = 0, sy = 0;
  std::array<double, 3> sum{}, sum_sq{};
  std::vector<Point> points;
  points.reserve(f.area_px);
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      if (!mask.get(y, x)) continue;
      sx += static_cast<double>(x);
      sy += static_cast<double>(y);
      points.push_back({static_cast<double>(x), static_cast<double>(y)});
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = image.at(y, x, c) / 255.0;
        sum[c] += v;
        sum_sq[c] += v * v;
      }
      const bool up = y > 0 && mask.get(y - 1, x);
      const bool down = y + 1 < mask.height && mask.get(y + 1, x);
      const bool left = x > 0 && mask.get(y, x - 1);
      const bool right = x + 1 < mask.width && mask.get(y, x + 1);
      f.perimeter_px += !up + !down + !left + !right;
    }
  }
  for (std::size_t c = 0; c < 3; ++c) {
    const double mean = sum[c] / area;
    f.color_variance[c] = std::max(0.0, sum_sq[c] / area - mean * mean);
  }

  const double cx = sx / area, cy = sy / area;
  double mu20 = 0, mu02 = 0, mu11 = 0;
  for (const auto& p : points) {
    mu20 += (p.x - cx) * (p.x - cx);
    mu02 += (p.y - cy) * (p.y - cy);
    mu11 += (p.x - cx) * (p.y - cy);
  }
  mu20 /= area;
  mu02 /= area;
  mu11 /= area;
  const double mid = (mu20 + mu02) / 2;
  const double spread = std::sqrt(std::max(0.0, (mu20 - mu02) * (mu20 - mu02) / 4 + mu11 * mu11));
  f.major_axis_px = 4 * std::sqrt(std::max(0.0, mid + spread));
  f.minor_axis_px = 4 * std::sqrt(std::max(0.0, mid - spread));

  // Reflect across the major axis through the centroid.
  const double theta = 0.5 * std::atan2(2 * mu11, mu20 - mu02);
  const double ux = std::cos(theta), uy = std::sin(theta);
  std::size_t unmatched = 0;
  for (const auto& p : points) {
    const double dx = p.x - cx, dy = p.y - cy;
    const double along = dx * ux + dy * uy;
    const long rx = std::lround(cx + 2 * along * ux - dx);
    const long ry = std::lround(cy + 2 * along * uy - dy);
    const bool inside = rx >= 0 && ry >= 0 && rx < static_cast<long>(mask.width) && ry < static_cast<long>(mask.height);
    if (!inside || !mask.get(static_cast<std::size_t>(ry), static_cast<std::size_t>(rx))) ++unmatched;
  }
  f.asymmetry_index = static_cast<double>(unmatched) / area;

  const double contour = contour_length(mask);
  f.border_irregularity = std::max(1.0, contour * contour / (4 * std::numbers::pi * area));

  const auto hull = convex_hull(std::move(points));
  double best = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    for (std::size_t j = i + 1; j < hull.size(); ++j) {
      best = std::max(best, std::hypot(hull[i].x - hull[j].x, hull[i].y - hull[j].y));
    }
  }
  f.diameter_px = best;
  return f;
}

}  // namespace lesion::metrics
