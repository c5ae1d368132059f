#include <algorithm>
#include <array>
#include <utility>
#include <vector>

#include "lesion/annotation.hpp"
#include "lesion/errors.hpp"

namespace lesion::annotation {

namespace {

constexpr std::array<std::pair<int, int>, 4> kNeighbours{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

// Out-of-image neighbours are ignored: erosion does not eat in from the
// frame and dilation does not grow out of it.
template <bool Erode>
BitMask cross_filter(const BitMask& mask) {
  BitMask out(mask.height, mask.width);
  const auto h = static_cast<int>(mask.height);
  const auto w = static_cast<int>(mask.width);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool v = mask.get(y, x);
      for (const auto& [dy, dx] : kNeighbours) {
        const int ny = y + dy, nx = x + dx;
        if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
        if constexpr (Erode) {
          v = v && mask.get(ny, nx);
        } else {
          v = v || mask.get(ny, nx);
        }
      }
      out.set(y, x, v);
    }
  }
  return out;
}

// 4-connected labels; 0 marks pixels whose value differs from `value`.
std::vector<std::size_t> label_components(const BitMask& mask, bool value, std::size_t& count) {
  std::vector<std::size_t> labels(mask.pixel_count(), 0);
  std::vector<std::size_t> stack;
  count = 0;
  const auto h = static_cast<int>(mask.height);
  const auto w = static_cast<int>(mask.width);
  for (std::size_t start = 0; start < labels.size(); ++start) {
    if ((mask.bits[start] != 0) != value || labels[start] != 0) continue;
    labels[start] = ++count;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const int y = static_cast<int>(p / mask.width), x = static_cast<int>(p % mask.width);
      for (const auto& [dy, dx] : kNeighbours) {
        const int ny = y + dy, nx = x + dx;
        if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
        const std::size_t q = static_cast<std::size_t>(ny) * mask.width + static_cast<std::size_t>(nx);
        if ((mask.bits[q] != 0) == value && labels[q] == 0) {
          labels[q] = count;
          stack.push_back(q);
        }
      }
    }
  }
  return labels;
}

BitMask clean_once(const BitMask& mask) {
  const BitMask opened = dilate_cross(erode_cross(mask));
  const BitMask closed = erode_cross(dilate_cross(opened));
  return fill_holes(largest_component(closed));
}

}  // namespace

BitMask erode_cross(const BitMask& mask) { return cross_filter<true>(mask); }
BitMask dilate_cross(const BitMask& mask) { return cross_filter<false>(mask); }

BitMask largest_component(const BitMask& mask) {
  std::size_t count = 0;
  const auto labels = label_components(mask, true, count);
  if (count <= 1) return mask;
  std::vector<std::size_t> sizes(count + 1, 0);
  for (const auto l : labels) ++sizes[l];
  // Ties go to the component found first in raster order.
  std::size_t best = 1;
  for (std::size_t l = 2; l <= count; ++l) {
    if (sizes[l] > sizes[best]) best = l;
  }
  BitMask out(mask.height, mask.width);
  for (std::size_t i = 0; i < labels.size(); ++i) out.bits[i] = labels[i] == best ? 1 : 0;
  return out;
}

BitMask fill_holes(const BitMask& mask) {
  std::size_t count = 0;
  const auto labels = label_components(mask, false, count);
  std::vector<bool> touches_border(count + 1, false);
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      if (y != 0 && x != 0 && y + 1 != mask.height && x + 1 != mask.width) continue;
      touches_border[labels[y * mask.width + x]] = true;
    }
  }
  BitMask out = mask;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && !touches_border[labels[i]]) out.bits[i] = 1;
  }
  return out;
}

BitMask clean_mask(const BitMask& mask) {
  // One pass is not always a fixed point (closing can merge components that
  // the opening left apart), so iterate; convergence takes two or three passes.
  constexpr int kMaxPasses = 32;
  BitMask current = clean_once(mask);
  for (int pass = 1; pass < kMaxPasses; ++pass) {
    if (current.all_zero()) break;
    BitMask next = clean_once(current);
    if (next == current) break;
    current = std::move(next);
  }
  if (current.all_zero()) throw EmptyMaskError("clean_mask: nothing left after cleaning");
  return current;
}

double border_fraction(const BitMask& mask) {
  if (mask.pixel_count() == 0) throw DimensionError("border_fraction: empty mask");
  std::size_t on = 0, total = 0;
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      if (y != 0 && x != 0 && y + 1 != mask.height && x + 1 != mask.width) continue;
      ++total;
      if (mask.get(y, x)) ++on;
    }
  }
  return static_cast<double>(on) / static_cast<double>(total);
}

Oriented orient_mask(const BitMask& mask) {
  if (mask.all_zero() || mask.all_one()) {
    throw DegenerateInputError("orient_mask: mask is uniform, orientation undefined");
  }
  Oriented out;
  out.border_fraction = border_fraction(mask);
  out.inverted = out.border_fraction > 0.5;
  out.mask = out.inverted ? mask.inverted() : mask;
  return out;
}

}  // namespace lesion::annotation
