#include <algorithm>
#include <cmath>
#include <numbers>

#include "lesion/errors.hpp"
#include "lesion/image_io.hpp"
#include "lesion/pipeline.hpp"
#include "lesion/random.hpp"

namespace lesion::pipeline {

namespace fs = std::filesystem;

namespace {

std::uint64_t image_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + index + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

struct Blob {
  double y, x, radius, weight;
};

// Sum of Gaussian bumps in [0,1], used to variegate lesion colour.
double blob_field(const std::vector<Blob>& blobs, double y, double x) {
  double v = 0.0;
  for (const auto& b : blobs) {
    const double d2 = ((y - b.y) * (y - b.y) + (x - b.x) * (x - b.x)) / (b.radius * b.radius);
    v += b.weight * std::exp(-d2);
  }
  return std::clamp(v, 0.0, 1.0);
}

struct Lesion {
  ImageRGB image;
  BitMask mask;
};

Lesion draw(Label label, std::size_t size, Rng& rng) {
  const double s = static_cast<double>(size);
  const double pi = std::numbers::pi;
  Lesion out{ImageRGB(size, size), BitMask(size, size)};

  const double skin[3] = {222 + rng.uniform(-12, 12), 184 + rng.uniform(-12, 12), 160 + rng.uniform(-12, 12)};
  const double tilt_y = rng.uniform(-8, 8), tilt_x = rng.uniform(-8, 8);

  const bool malignant = label == Label::Malignant;
  const double cy = s / 2 + rng.uniform(-0.08, 0.08) * s;
  const double cx = s / 2 + rng.uniform(-0.08, 0.08) * s;
  const double r0 = (malignant ? rng.uniform(0.18, 0.28) : rng.uniform(0.17, 0.26)) * s;
  const double ratio = malignant ? rng.uniform(0.55, 0.75) : rng.uniform(0.85, 1.0);
  const double angle = rng.uniform(0, pi);
  double harmonic[4] = {}, phase[4] = {};
  if (malignant) {
    for (int k = 0; k < 4; ++k) {
      harmonic[k] = rng.uniform(0.04, 0.10);
      phase[k] = rng.uniform(0, 2 * pi);
    }
  }

  double tone[3];
  std::vector<Blob> blue, red;
  if (malignant) {
    tone[0] = rng.uniform(60, 80);
    tone[1] = rng.uniform(40, 50);
    tone[2] = rng.uniform(35, 45);
    for (int b = 0; b < 3; ++b) {
      blue.push_back({cy + rng.uniform(-0.6, 0.6) * r0, cx + rng.uniform(-0.6, 0.6) * r0, r0 * rng.uniform(0.3, 0.6),
                      rng.uniform(0.6, 1.0)});
      red.push_back({cy + rng.uniform(-0.6, 0.6) * r0, cx + rng.uniform(-0.6, 0.6) * r0, r0 * rng.uniform(0.3, 0.6),
                     rng.uniform(0.6, 1.0)});
    }
  } else {
    tone[0] = rng.uniform(110, 140);
    tone[1] = rng.uniform(70, 90);
    tone[2] = rng.uniform(50, 65);
  }
  const double blue_tone[3] = {95, 90, 120}, red_tone[3] = {125, 50, 50};
  const double noise = malignant ? 9.0 : 4.0;

  // Dermoscope vignetting and a few hairs; neither is part of the lesion.
  const double vignette = rng.uniform(10, 35);
  struct Hair {
    double y0, x0, dy, dx;
  };
  std::vector<Hair> hairs;
  const std::size_t hair_count = rng.index(3);
  for (std::size_t h = 0; h < hair_count; ++h) {
    const double a = rng.uniform(0, pi);
    hairs.push_back({rng.uniform(0, s), rng.uniform(0, s), std::sin(a), std::cos(a)});
  }

  const double ca = std::cos(angle), sa = std::sin(angle);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      const double u = (dx * ca + dy * sa) / r0, v = (-dx * sa + dy * ca) / (r0 * ratio);
      const double d = std::hypot(u, v);
      double boundary = 1.0;
      if (malignant) {
        const double phi = std::atan2(v, u);
        for (int k = 0; k < 4; ++k) boundary += harmonic[k] * std::sin((k + 3) * phi + phase[k]);
      }
      const bool inside = d <= boundary;
      out.mask.set(y, x, inside);
      // Lesion opacity ramps over about a pixel either side of the boundary.
      const double opacity = std::clamp((boundary - d) * r0 * ratio / 1.5 + 0.5, 0.0, 1.0);

      const double corner = std::hypot(static_cast<double>(y) - s / 2, static_cast<double>(x) - s / 2) / (s / 2);
      const double shade = tilt_y * (static_cast<double>(y) / s - 0.5) + tilt_x * (static_cast<double>(x) / s - 0.5) -
                           vignette * std::max(0.0, corner - 0.85) / 0.56;
      double hair = 0.0;
      for (const auto& h : hairs) {
        const double off = std::abs((static_cast<double>(y) - h.y0) * h.dx - (static_cast<double>(x) - h.x0) * h.dy);
        hair = std::max(hair, std::clamp(1.0 - off / 0.8, 0.0, 1.0) * 0.75);
      }
      const double grain = rng.normal(0, 5);
      for (std::size_t c = 0; c < 3; ++c) {
        const double hair_tone[3] = {55, 42, 36};
        double value = skin[c] + shade + grain + rng.normal(0, 2);
        if (opacity > 0.0) {
          double t = tone[c];
          if (malignant) {
            const double fb = blob_field(blue, static_cast<double>(y), static_cast<double>(x));
            const double fr = blob_field(red, static_cast<double>(y), static_cast<double>(x));
            t = (1 - fb) * t + fb * blue_tone[c];
            t = (1 - 0.7 * fr) * t + 0.7 * fr * red_tone[c];
          } else {
            t -= 12.0 * (1.0 - d / boundary);
          }
          value = (1 - opacity) * value + opacity * (t + shade + rng.normal(0, noise));
        }
        value = (1 - hair) * value + hair * hair_tone[c];
        out.image.at(y, x, c) = to_byte(value);
      }
    }
  }
  return out;
}

}  // namespace

SyntheticSummary generate_synthetic_corpus(std::size_t n, std::size_t image_size, std::uint64_t seed,
                                           const fs::path& out_dir) {
  if (n < 2 || n % 2 != 0) throw ConfigError("synthetic corpus size must be even and at least 2");
  if (image_size < 16) throw ConfigError("synthetic image size must be at least 16");
  SyntheticSummary summary;
  summary.ground_truth_dir = out_dir / "ground_truth";
  fs::create_directories(out_dir / "benign");
  fs::create_directories(out_dir / "malignant");
  fs::create_directories(summary.ground_truth_dir);
  for (std::size_t i = 0; i < n; ++i) {
    const Label label = i < n / 2 ? Label::Benign : Label::Malignant;
    const std::size_t index = label == Label::Benign ? i : i - n / 2;
    char id[32];
    std::snprintf(id, sizeof id, "syn_%c%04zu", label == Label::Benign ? 'b' : 'm', index);
    Rng rng(image_seed(seed, i));
    const Lesion lesion = draw(label, image_size, rng);
    io::write_png(lesion.image, out_dir / to_string(label) / (std::string(id) + ".png"));
    io::write_mask(lesion.mask, summary.ground_truth_dir / (std::string(id) + ".png"));
    ++(label == Label::Benign ? summary.benign : summary.malignant);
  }
  return summary;
}

}  // namespace lesion::pipeline
