#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "lesion/annotation.hpp"
#include "lesion/errors.hpp"
#include "lesion/image_io.hpp"
#include "lesion/random.hpp"

using namespace lesion;
using namespace lesion::annotation;
namespace fs = std::filesystem;

namespace {

BitMask from_rows(const std::vector<std::string>& rows) {
  BitMask m(rows.size(), rows.front().size());
  for (std::size_t y = 0; y < rows.size(); ++y) {
    for (std::size_t x = 0; x < rows[y].size(); ++x) m.set(y, x, rows[y][x] == '#');
  }
  return m;
}

BitMask disk(std::size_t h, std::size_t w, double cy, double cx, double r) {
  BitMask m(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) m.set(y, x, std::hypot(y - cy, x - cx) <= r);
  }
  return m;
}

ClusterModel model_with_luminances(const std::vector<double>& lum, std::size_t pixels) {
  ClusterModel m;
  m.k = lum.size();
  m.dims = 5;
  for (const double l : lum) {
    for (int c = 0; c < 3; ++c) m.centroids.push_back(l);
    m.centroids.push_back(0.0);
    m.centroids.push_back(0.0);
  }
  for (std::size_t i = 0; i < pixels; ++i) m.assignments.push_back(i % m.k);
  return m;
}

// Dark brown ellipse on noisy skin; returns the image and its true mask.
std::pair<ImageRGB, BitMask> synthetic_lesion(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = 64;
  ImageRGB image(n, n);
  BitMask truth(n, n);
  const double cy = 30 + rng.uniform(-3, 3), cx = 33 + rng.uniform(-3, 3);
  const double ry = rng.uniform(12, 18), rx = rng.uniform(12, 18);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double dy = (y - cy) / ry, dx = (x - cx) / rx;
      const bool in = dy * dy + dx * dx <= 1.0;
      truth.set(y, x, in);
      const double base[3] = {in ? 95.0 : 225.0, in ? 60.0 : 180.0, in ? 40.0 : 160.0};
      for (std::size_t c = 0; c < 3; ++c) {
        image.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(base[c] + rng.normal(0, 8), 0.0, 255.0));
      }
    }
  }
  return {image, truth};
}

double dice_of(const BitMask& a, const BitMask& b) {
  std::size_t inter = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) inter += a.bits[i] && b.bits[i];
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a.count() + b.count());
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lesion_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("extract_features examples") {
  SUBCASE("single black pixel") {
    const auto f = extract_features(ImageRGB(1, 1), 0.0);
    REQUIRE(f.size() == 1);
    CHECK(f[0] == PixelFeature{0, 0, 0, 0, 0});
  }
  SUBCASE("uniform gray") {
    const auto f = extract_features(ImageRGB(4, 5, {128, 128, 128}), 0.1);
    CHECK(f.size() == 20);
    for (const auto& p : f) {
      CHECK(p.r == doctest::Approx(128.0 / 255.0));
      CHECK(p.g == p.r);
      CHECK(p.b == p.r);
    }
  }
  SUBCASE("spatial span equals the weight") {
    const auto f = extract_features(ImageRGB(3, 3), 0.25);
    double xmin = 1, xmax = 0, ymin = 1, ymax = 0;
    for (const auto& p : f) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
    CHECK(xmin == 0.0);
    CHECK(ymin == 0.0);
    CHECK(xmax == doctest::Approx(0.25));
    CHECK(ymax == doctest::Approx(0.25));
    CHECK(f[1].x == doctest::Approx(0.125));
    CHECK(f[3].y == doctest::Approx(0.125));
  }
  CHECK_THROWS_AS(extract_features(ImageRGB(2, 2), -1.0), ConfigError);
}

TEST_CASE("centroid merge picks the dark group") {
  SUBCASE("five luminances") {
    const auto r = centroid_merge_mask(model_with_luminances({0.04, 0.08, 0.78, 0.82, 0.86}, 10), 2, 5);
    CHECK(r.foreground_clusters == std::vector<std::size_t>{0, 1});
    for (std::size_t i = 0; i < 10; ++i) CHECK(r.mask.bits[i] == (i % 5 < 2 ? 1 : 0));
  }
  SUBCASE("two clusters") {
    const auto r = centroid_merge_mask(model_with_luminances({0.9, 0.1}, 4), 2, 2);
    CHECK(r.foreground_clusters == std::vector<std::size_t>{1});
  }
  SUBCASE("all equal is degenerate") {
    CHECK_THROWS_AS(centroid_merge_mask(model_with_luminances({0.5, 0.5, 0.5}, 3), 1, 3), DegenerateInputError);
  }
  SUBCASE("one cluster is a contract violation") {
    CHECK_THROWS_AS(centroid_merge_mask(model_with_luminances({0.5}, 3), 1, 3), ContractError);
  }
}

TEST_CASE("centroid merge matches exhaustive 2-means and ignores labels") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.index(6);
    std::vector<double> lum(k);
    for (auto& l : lum) l = std::round(rng.uniform() * 20) / 20;  // frequent ties
    if (*std::max_element(lum.begin(), lum.end()) == *std::min_element(lum.begin(), lum.end())) continue;
    // Oracle: every non-trivial subset as the dark group; dark must be the
    // lower-mean side.
    double best = 1e300;
    for (unsigned s = 1; s + 1 < (1u << k); ++s) {
      double sum[2] = {0, 0};
      double cnt[2] = {0, 0};
      for (std::size_t j = 0; j < k; ++j) {
        sum[(s >> j) & 1] += lum[j];
        cnt[(s >> j) & 1] += 1;
      }
      double sse = 0;
      for (std::size_t j = 0; j < k; ++j) {
        const int g = (s >> j) & 1;
        sse += std::pow(lum[j] - sum[g] / cnt[g], 2);
      }
      best = std::min(best, sse);
    }
    const auto r = centroid_merge_mask(model_with_luminances(lum, k), 1, k);
    double sum[2] = {0, 0}, cnt[2] = {0, 0};
    for (std::size_t j = 0; j < k; ++j) {
      sum[r.mask.bits[j]] += lum[j];
      cnt[r.mask.bits[j]] += 1;
    }
    double sse = 0;
    for (std::size_t j = 0; j < k; ++j) sse += std::pow(lum[j] - sum[r.mask.bits[j]] / cnt[r.mask.bits[j]], 2);
    CHECK(sse == doctest::Approx(best).epsilon(1e-12));
    CHECK(sum[1] / cnt[1] < sum[0] / cnt[0]);

    // Relabel clusters and remap assignments; the mask must not change.
    std::vector<std::size_t> perm(k);
    for (std::size_t j = 0; j < k; ++j) perm[j] = j;
    rng.shuffle(perm.begin(), perm.end());
    auto base = model_with_luminances(lum, 3 * k);
    auto relabelled = base;
    for (std::size_t j = 0; j < k; ++j) {
      std::copy(base.centroids.begin() + j * 5, base.centroids.begin() + j * 5 + 5,
                relabelled.centroids.begin() + perm[j] * 5);
    }
    for (auto& a : relabelled.assignments) a = perm[a];
    CHECK(centroid_merge_mask(base, 3, k).mask == centroid_merge_mask(relabelled, 3, k).mask);
  }
}

TEST_CASE("clean_mask examples") {
  SUBCASE("isolated pixel vanishes") {
    BitMask m(9, 9);
    m.set(4, 4, true);
    CHECK_THROWS_AS(clean_mask(m), EmptyMaskError);
  }
  SUBCASE("solid 5x5 block is unchanged") {
    const BitMask full(5, 5, true);
    CHECK(clean_mask(full) == full);
  }
  SUBCASE("embedded square keeps its rounded core") {
    BitMask m(11, 11);
    for (std::size_t y = 3; y < 8; ++y)
      for (std::size_t x = 3; x < 8; ++x) m.set(y, x, true);
    const auto c = clean_mask(m);
    CHECK(c.count() == 21);
    CHECK(!c.get(3, 3));
    CHECK(c.get(3, 4));
    CHECK(clean_mask(c) == c);
  }
  SUBCASE("only the larger component survives") {
    const auto big = from_rows({
        "...#..............",
        "..####............",
        ".######...........",
        ".#######..........",
        ".######.......#...",
        "..####.......###..",
        "...##.........#...",
        "..................",
    });
    std::size_t small_pixels = 0;
    for (std::size_t y = 0; y < big.height; ++y)
      for (std::size_t x = 12; x < big.width; ++x) small_pixels += big.get(y, x);
    REQUIRE(small_pixels == 5);
    REQUIRE(big.count() == 35);
    const auto c = clean_mask(big);
    for (std::size_t y = 0; y < big.height; ++y) {
      for (std::size_t x = 0; x < big.width; ++x) {
        if (x >= 12) CHECK(!c.get(y, x));
        else if (big.get(y, x)) CHECK(c.get(y, x));
      }
    }
    CHECK(largest_component(c) == c);
  }
  SUBCASE("enclosed holes are filled") {
    auto ring = disk(21, 21, 10, 10, 8);
    for (std::size_t y = 8; y <= 12; ++y)
      for (std::size_t x = 8; x <= 12; ++x) ring.set(y, x, false);
    CHECK(clean_mask(ring) == clean_mask(disk(21, 21, 10, 10, 8)));
  }
}

TEST_CASE("clean_mask is idempotent and preserves dimensions on random masks") {
  Rng rng(11);
  int cleaned = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t h = 8 + rng.index(25), w = 8 + rng.index(25);
    BitMask m(h, w);
    const double p = rng.uniform(0.2, 0.8);
    for (auto& b : m.bits) b = rng.uniform() < p;
    // Blur a little so there is structure to keep.
    if (trial % 2 == 0) m = dilate_cross(erode_cross(m));
    try {
      const auto c = clean_mask(m);
      CHECK(c.height == h);
      CHECK(c.width == w);
      CHECK(clean_mask(c) == c);
      ++cleaned;
    } catch (const EmptyMaskError&) {
    }
  }
  CHECK(cleaned > 100);
}

TEST_CASE("orient_mask examples and involution") {
  const auto d = disk(32, 32, 15.5, 15.5, 9);
  const auto a = orient_mask(d);
  CHECK(!a.inverted);
  CHECK(a.border_fraction == 0.0);
  CHECK(a.mask == d);

  const auto b = orient_mask(d.inverted());
  CHECK(b.inverted);
  CHECK(b.border_fraction == 1.0);
  CHECK(b.mask == d);

  // Left half on: exactly half of the border pixels are foreground.
  BitMask half(4, 4);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 2; ++x) half.set(y, x, true);
  const auto c = orient_mask(half);
  CHECK(c.border_fraction == 0.5);
  CHECK(!c.inverted);

  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    BitMask m(10, 12);
    for (auto& bit : m.bits) bit = rng.uniform() < 0.5;
    if (m.all_zero() || m.all_one()) continue;
    const auto once = orient_mask(m);
    const auto twice = orient_mask(once.mask);
    CHECK(!twice.inverted);
    CHECK(twice.mask == once.mask);
  }

  CHECK_THROWS_AS(orient_mask(BitMask(5, 5)), DegenerateInputError);
  CHECK_THROWS_AS(orient_mask(BitMask(5, 5, true)), DegenerateInputError);
}

TEST_CASE("annotate_image recovers a synthetic lesion") {
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto [image, truth] = synthetic_lesion(seed);
    AnnotationConfig cfg;
    cfg.seed = seed;
    const auto r = annotate_image(image, cfg);
    CHECK(r.mask.height == 64);
    CHECK(r.mask.width == 64);
    CHECK(!r.mask.all_zero());
    CHECK(!r.mask.all_one());
    total += dice_of(r.mask, truth);
  }
  CHECK(total / 5 >= 0.9);
  CHECK_THROWS_AS(annotate_image(ImageRGB(7, 9), AnnotationConfig{}), DegenerateInputError);
}

TEST_CASE("annotate_image is deterministic for a seed") {
  const auto [image, truth] = synthetic_lesion(12);
  AnnotationConfig cfg;
  cfg.seed = 99;
  CHECK(annotate_image(image, cfg).mask == annotate_image(image, cfg).mask);
}

TEST_CASE("annotate_corpus isolates failures and merges the manifest") {
  const auto dir = scratch_dir("annotate");
  const auto images = dir / "images";
  fs::create_directories(images);
  for (std::uint64_t i = 0; i < 3; ++i) io::write_png(synthetic_lesion(i).first, images / ("img" + std::to_string(i) + ".png"));
  {
    std::ofstream junk(images / "broken.png");
    junk << "definitely not a png";
  }
  const auto manifest = dir / "manifest.jsonl";
  const auto entries = annotate_corpus(images, dir / "masks", manifest, AnnotationConfig{});
  REQUIRE(entries.size() == 4);
  for (const auto& e : entries) {
    if (e.image_id == "broken") {
      CHECK(e.status == MaskStatus::Failed);
      CHECK(!e.failure_reason.empty());
    } else {
      CHECK(e.status == MaskStatus::Auto);
      CHECK(fs::exists(e.mask_path));
      const auto mask = io::read_mask(e.mask_path);
      CHECK(mask.height == 64);
    }
  }
  CHECK(read_mask_manifest(manifest).size() == 4);

  // A second run over a subset keeps the other records.
  const std::vector<CorpusImage> subset{{"img0", images / "img0.png"}};
  CHECK(annotate_corpus(subset, dir / "masks", manifest, AnnotationConfig{}).size() == 1);
  CHECK(read_mask_manifest(manifest).size() == 4);

  const auto empty = dir / "empty";
  fs::create_directories(empty);
  CHECK_THROWS_AS(annotate_corpus(empty, dir / "m2", dir / "m2.jsonl", AnnotationConfig{}), NoInputError);
  fs::remove_all(dir);
}
