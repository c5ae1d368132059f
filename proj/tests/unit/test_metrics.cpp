#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "lesion/errors.hpp"
#include "lesion/metrics.hpp"
#include "lesion/random.hpp"

using namespace lesion;
using namespace lesion::metrics;

namespace {

constexpr Label B = Label::Benign;
constexpr Label M = Label::Malignant;

std::vector<Label> repeat(Label l, std::size_t n) { return std::vector<Label>(n, l); }

void append(std::vector<Label>& v, Label l, std::size_t n) { v.insert(v.end(), n, l); }

BitMask disk(std::size_t n, double cy, double cx, double r) {
  BitMask m(n, n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) m.set(y, x, std::hypot(y - cy, x - cx) <= r);
  return m;
}

BitMask transpose(const BitMask& m) {
  BitMask t(m.width, m.height);
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x) t.set(x, y, m.get(y, x));
  return t;
}

BitMask rotate90(const BitMask& m) {
  BitMask r(m.width, m.height);
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x) r.set(x, m.height - 1 - y, m.get(y, x));
  return r;
}

BitMask random_blob(Rng& rng, std::size_t h, std::size_t w) {
  BitMask m(h, w);
  for (auto& b : m.bits) b = rng.uniform() < 0.3;
  m.set(h / 2, w / 2, true);
  return m;
}

// Brute-force maximum pairwise distance.
double naive_diameter(const BitMask& m) {
  std::vector<std::pair<double, double>> pts;
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x)
      if (m.get(y, x)) pts.emplace_back(x, y);
  double best = 0;
  for (const auto& a : pts)
    for (const auto& b : pts) best = std::max(best, std::hypot(a.first - b.first, a.second - b.second));
  return best;
}

}  // namespace

TEST_CASE("confusion matrix tallies actual by predicted") {
  const std::vector<Label> all_right{B, M, M, B, B};
  const auto cm = confusion_matrix(all_right, all_right);
  CHECK(cm.at(B, M) == 0);
  CHECK(cm.at(M, B) == 0);
  CHECK(cm.at(B, B) == 3);
  CHECK(cm.at(M, M) == 2);

  // Stream reproducing the published block for the proposed method.
  std::vector<Label> predicted, actual;
  append(actual, B, 301), append(predicted, B, 301);
  append(actual, M, 57), append(predicted, B, 57);
  append(actual, B, 59), append(predicted, M, 59);
  append(actual, M, 243), append(predicted, M, 243);
  const auto proposed = confusion_matrix(predicted, actual);
  CHECK(proposed.total() == 660);
  CHECK(proposed == published_results()[2].matrix);

  CHECK(confusion_matrix(actual, predicted) == proposed.transposed());

  CHECK_THROWS_AS(confusion_matrix(repeat(B, 2), repeat(B, 3)), DimensionError);
  CHECK_THROWS_AS(confusion_matrix({}, {}), NoInputError);
}

TEST_CASE("published matrices reproduce the published metrics") {
  const double expected_acc[] = {80.757575757575, 81.666666666666, 82.424242424242};
  const double expected_f1[] = {0.790774, 0.811820, 0.838440};
  const auto published = published_results();
  REQUIRE(published.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& p = published[i];
    const auto r = summarize(p.matrix);
    CHECK(r.sample_count == 660);
    CHECK(r.testing_accuracy_pct == doctest::Approx(expected_acc[i]).epsilon(1e-10));
    CHECK(r.f1_benign_positive == doctest::Approx(expected_f1[i]).epsilon(1e-6));
    CHECK(std::abs(r.testing_accuracy_pct - p.testing_accuracy_pct) <= 0.01);
    CHECK(std::abs(r.misclassification_rate_pct - p.misclassification_rate_pct) <= 0.01);
    CHECK(std::abs(r.f1_benign_positive - p.f1) <= 2e-4);
    CHECK(r.f1_benign_positive == doctest::Approx(2 * r.precision * r.recall / (r.precision + r.recall)));
  }
}

TEST_CASE("malignant-positive F1 does not reproduce the published column") {
  int matches = 0;
  for (const auto& p : published_results()) {
    const auto r = summarize(p.matrix);
    ConfusionMatrix swapped;
    swapped.at(B, B) = p.matrix.at(M, M);
    swapped.at(M, M) = p.matrix.at(B, B);
    swapped.at(B, M) = p.matrix.at(M, B);
    swapped.at(M, B) = p.matrix.at(B, M);
    const auto s = summarize(swapped);
    matches += std::abs(s.f1_benign_positive - p.f1) <= 2e-4;
    CHECK(std::abs(r.f1_benign_positive - p.f1) <= 2e-4);
  }
  CHECK(matches < 3);
}

TEST_CASE("accuracy and misclassification sum to exactly 100") {
  Rng rng(8);
  for (int i = 0; i < 2000; ++i) {
    ConfusionMatrix cm;
    for (auto& row : cm.counts)
      for (auto& c : row) c = rng.index(1000);
    if (cm.total() == 0) continue;
    const auto r = summarize(cm);
    CHECK(r.testing_accuracy_pct + r.misclassification_rate_pct == 100.0);
  }
  CHECK_THROWS_AS(summarize(ConfusionMatrix{}), NoInputError);
}

TEST_CASE("undefined F1 is flagged and reported as zero") {
  ConfusionMatrix cm;
  cm.at(M, M) = 10;
  const auto r = summarize(cm);
  CHECK(!r.f1_defined);
  CHECK(r.f1_benign_positive == 0.0);
  CHECK(r.testing_accuracy_pct == 100.0);
}

TEST_CASE("key/value record round trips") {
  const auto r = summarize(published_results()[0].matrix);
  const auto back = parse_key_value(to_key_value(r));
  CHECK(back.testing_accuracy_pct == r.testing_accuracy_pct);
  CHECK(back.f1_benign_positive == r.f1_benign_positive);
  CHECK(back.sample_count == 660);
  CHECK(back.f1_defined);
  CHECK_THROWS_AS(parse_key_value("nonsense"), FormatError);
  CHECK_THROWS_AS(parse_key_value("precision=1\n"), FormatError);
}

TEST_CASE("table formatting uses display rounding") {
  std::vector<Table2Row> rows;
  for (const auto& p : published_results()) rows.push_back({p.model, p.training_accuracy_pct, summarize(p.matrix)});
  const auto text = format_table2(rows);
  CHECK(text.find("82.42") != std::string::npos);
  CHECK(text.find("0.8384") != std::string::npos);
  CHECK(text.find("17.58") != std::string::npos);
  CHECK(text.find("93.80") != std::string::npos);
}

TEST_CASE("dice examples and properties") {
  const BitMask a(2, 2, true);
  BitMask left(2, 2);
  left.set(0, 0, true);
  left.set(1, 0, true);
  CHECK(dice(a, a) == 1.0);
  CHECK(dice(a, left) == doctest::Approx(2.0 / 3.0));
  CHECK(dice(left, left.inverted()) == 0.0);
  CHECK(dice(BitMask(3, 3), BitMask(3, 3)) == 1.0);
  CHECK_THROWS_AS(dice(BitMask(2, 2), BitMask(2, 3)), DimensionError);

  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    BitMask x(6, 7), y(6, 7);
    for (auto& b : x.bits) b = rng.uniform() < 0.4;
    for (auto& b : y.bits) b = rng.uniform() < 0.4;
    CHECK(dice(x, y) == dice(y, x));
    CHECK((dice(x, y) == 1.0) == (x == y));
    // Adding a pixel to both masks never lowers the score.
    const std::size_t p = rng.index(42);
    BitMask x2 = x, y2 = y;
    x2.bits[p] = y2.bits[p] = 1;
    CHECK(dice(x2, y2) >= dice(x, y) - 1e-15);
  }
}

TEST_CASE("abcd single pixel and row") {
  const ImageRGB img(5, 9, {10, 20, 30});
  BitMask one(5, 9);
  one.set(2, 4, true);
  const auto f = abcd_features(img, one);
  CHECK(f.area_px == 1);
  CHECK(f.perimeter_px == 4);
  CHECK(f.diameter_px == 0.0);
  CHECK(f.border_irregularity >= 1.0);
  CHECK(f.color_variance[0] == doctest::Approx(0.0));

  BitMask row(5, 9);
  for (std::size_t x = 1; x < 8; ++x) row.set(2, x, true);
  const auto g = abcd_features(img, row);
  CHECK(g.area_px == 7);
  CHECK(g.perimeter_px == 16);
  CHECK(g.diameter_px == doctest::Approx(6.0));
  CHECK(g.minor_axis_px == doctest::Approx(0.0).epsilon(1e-9));
  // Variance of 0..6 is 4, so the major axis is 4 * 2.
  CHECK(g.major_axis_px == doctest::Approx(8.0));
  CHECK(g.asymmetry_index == 0.0);

  CHECK_THROWS_AS(abcd_features(img, BitMask(5, 9)), EmptyMaskError);
  CHECK_THROWS_AS(abcd_features(img, BitMask(4, 9, true)), DimensionError);
}

TEST_CASE("abcd rasterized disk") {
  const auto m = disk(60, 29.5, 30.2, 20);
  const ImageRGB img(60, 60, {100, 100, 100});
  const auto f = abcd_features(img, m);
  CHECK(std::abs(f.area_px - std::numbers::pi * 400) / (std::numbers::pi * 400) < 0.03);
  CHECK(f.asymmetry_index < 0.05);
  CHECK(f.border_irregularity < 1.3);
  CHECK(f.border_irregularity >= 1.0);
  CHECK(f.major_axis_px == doctest::Approx(40).epsilon(0.03));
  CHECK(f.minor_axis_px == doctest::Approx(40).epsilon(0.03));
  CHECK(f.diameter_px == doctest::Approx(40).epsilon(0.03));
}

TEST_CASE("abcd colour variance over the foreground") {
  ImageRGB img(2, 2);
  img.at(0, 0, 0) = 0;
  img.at(0, 1, 0) = 255;
  img.at(1, 0, 0) = 255;  // outside the mask
  BitMask m(2, 2);
  m.set(0, 0, true);
  m.set(0, 1, true);
  const auto f = abcd_features(img, m);
  CHECK(f.color_variance[0] == doctest::Approx(0.25));
  CHECK(f.color_variance[1] == doctest::Approx(0.0));
}

TEST_CASE("abcd invariants") {
  Rng rng(21);
  for (int i = 0; i < 60; ++i) {
    const auto m = random_blob(rng, 12, 15);
    const ImageRGB img(12, 15), img_t(15, 12);
    const auto f = abcd_features(img, m);
    CHECK(f.major_axis_px >= f.minor_axis_px);
    CHECK(f.minor_axis_px >= 0.0);
    CHECK(f.border_irregularity >= 1.0);
    CHECK(f.asymmetry_index >= 0.0);
    CHECK(f.asymmetry_index <= 1.0);
    CHECK(f.diameter_px == doctest::Approx(naive_diameter(m)));

    const auto t = abcd_features(img_t, transpose(m));
    CHECK(t.area_px == f.area_px);
    CHECK(t.diameter_px == doctest::Approx(f.diameter_px));
    const auto r = abcd_features(img_t, rotate90(m));
    CHECK(r.area_px == f.area_px);
    CHECK(r.perimeter_px == f.perimeter_px);

    // Shift inside a larger canvas.
    BitMask big(20, 25);
    for (std::size_t y = 0; y < 12; ++y)
      for (std::size_t x = 0; x < 15; ++x) big.set(y + 5, x + 7, m.get(y, x));
    const auto s = abcd_features(ImageRGB(20, 25), big);
    CHECK(s.area_px == f.area_px);
    CHECK(s.diameter_px == doctest::Approx(f.diameter_px));
  }
}
