#pragma once

// Classification and segmentation scores, plus ABCD shape/colour descriptors.
//
// F1, precision and recall treat benign as the positive class. Recomputing
// from the published confusion matrices shows this is the convention that
// reproduces the published F1 column (0.7908 / 0.8118 / 0.8384); the
// malignant-positive reading gives different values.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lesion/image.hpp"
#include "lesion/label.hpp"

namespace lesion::metrics {

using lesion::Label;

struct ConfusionMatrix {
  /// counts[actual][predicted]
  std::array<std::array<std::uint64_t, 2>, 2> counts{};

  std::uint64_t& at(Label actual, Label predicted) noexcept {
    return counts[static_cast<int>(actual)][static_cast<int>(predicted)];
  }
  std::uint64_t at(Label actual, Label predicted) const noexcept {
    return counts[static_cast<int>(actual)][static_cast<int>(predicted)];
  }
  std::uint64_t total() const noexcept;
  std::uint64_t correct() const noexcept;
  ConfusionMatrix transposed() const noexcept;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Throws DimensionError on length mismatch, NoInputError when empty.
ConfusionMatrix confusion_matrix(std::span<const Label> predictions, std::span<const Label> actuals);

struct MetricsReport {
  double testing_accuracy_pct = 0.0;
  double misclassification_rate_pct = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1_benign_positive = 0.0;
  /// False when precision + recall = 0; f1 is then reported as 0.
  bool f1_defined = true;
  std::uint64_t sample_count = 0;
};

/// Throws NoInputError for an empty matrix.
MetricsReport summarize(const ConfusionMatrix& cm);

/// Flat "key=value" lines; doubles at full round-trip precision.
std::string to_key_value(const MetricsReport& report);
MetricsReport parse_key_value(std::string_view text);

struct Table2Row {
  std::string model;
  std::optional<double> training_accuracy_pct;
  MetricsReport report;
};

/// Fixed-width table: model, training/testing accuracy, F1, misclassification.
/// Percentages to 2 decimals, F1 to 4.
std::string format_table2(std::span<const Table2Row> rows);

/// Published confusion matrices and the metrics reported for them.
struct PublishedResult {
  std::string model;
  ConfusionMatrix matrix;
  double training_accuracy_pct;
  double testing_accuracy_pct;
  double f1;
  double misclassification_rate_pct;
};
std::vector<PublishedResult> published_results();

/// 2|a∩b| / (|a|+|b|); 1 when both are empty. Throws DimensionError on size mismatch.
double dice(const BitMask& a, const BitMask& b);

struct AbcdFeatures {
  std::size_t area_px = 0;
  /// Foreground/background 4-neighbour edges; the frame counts as background.
  std::size_t perimeter_px = 0;
  double major_axis_px = 0.0;
  double minor_axis_px = 0.0;
  double asymmetry_index = 0.0;
  double border_irregularity = 1.0;
  /// Population variance of r, g, b (scaled to [0,1]) over the foreground.
  std::array<double, 3> color_variance{};
  double diameter_px = 0.0;
};

/// Throws EmptyMaskError for an empty mask, DimensionError on size mismatch.
AbcdFeatures abcd_features(const ImageRGB& image, const BitMask& mask);

}  // namespace lesion::metrics
