#include "lesion/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "lesion/errors.hpp"

namespace lesion::metrics {

std::uint64_t ConfusionMatrix::total() const noexcept {
  return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
}

std::uint64_t ConfusionMatrix::correct() const noexcept { return counts[0][0] + counts[1][1]; }

ConfusionMatrix ConfusionMatrix::transposed() const noexcept {
  ConfusionMatrix t;
  for (int a = 0; a < 2; ++a)
    for (int p = 0; p < 2; ++p) t.counts[p][a] = counts[a][p];
  return t;
}

ConfusionMatrix confusion_matrix(std::span<const Label> predictions, std::span<const Label> actuals) {
  if (predictions.size() != actuals.size()) {
    throw DimensionError("confusion_matrix: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(actuals.size()) + " labels");
  }
  if (predictions.empty()) throw NoInputError("confusion_matrix: no samples");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < predictions.size(); ++i) ++cm.at(actuals[i], predictions[i]);
  return cm;
}

MetricsReport summarize(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw NoInputError("summarize: empty confusion matrix");
  MetricsReport r;
  r.sample_count = total;
  r.testing_accuracy_pct = 100.0 * static_cast<double>(cm.correct()) / static_cast<double>(total);
  r.misclassification_rate_pct = 100.0 - r.testing_accuracy_pct;

  const auto tp = static_cast<double>(cm.at(Label::Benign, Label::Benign));
  const auto fp = static_cast<double>(cm.at(Label::Malignant, Label::Benign));
  const auto fn = static_cast<double>(cm.at(Label::Benign, Label::Malignant));
  r.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  r.f1_defined = r.precision + r.recall > 0;
  r.f1_benign_positive = r.f1_defined ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

std::string to_key_value(const MetricsReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "testingAccuracyPct=" << r.testing_accuracy_pct << '\n'
      << "misclassificationRatePct=" << r.misclassification_rate_pct << '\n'
      << "precision=" << r.precision << '\n'
      << "recall=" << r.recall << '\n'
      << "f1BenignPositive=" << r.f1_benign_positive << '\n'
      << "f1Defined=" << (r.f1_defined ? "true" : "false") << '\n'
      << "sampleCount=" << r.sample_count << '\n';
  return out.str();
}

MetricsReport parse_key_value(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("metrics record: missing '=' in: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto number = [&](const char* key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("metrics record: missing key ") + key);
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw FormatError(std::string("metrics record: bad value for ") + key);
    }
  };
  MetricsReport r;
  r.testing_accuracy_pct = number("testingAccuracyPct");
  r.misclassification_rate_pct = number("misclassificationRatePct");
  r.precision = number("precision");
  r.recall = number("recall");
  r.f1_benign_positive = number("f1BenignPositive");
  r.f1_defined = kv["f1Defined"] != "false";
  r.sample_count = static_cast<std::uint64_t>(number("sampleCount"));
  return r;
}

std::string format_table2(std::span<const Table2Row> rows) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-20s %14s %14s %8s %14s\n", "Model", "Train acc (%)", "Test acc (%)", "F1",
                "Misclass (%)");
  out += buf;
  for (const auto& row : rows) {
    char train[32] = "-";
    if (row.training_accuracy_pct) std::snprintf(train, sizeof train, "%.2f", *row.training_accuracy_pct);
    std::snprintf(buf, sizeof buf, "%-20s %14s %14.2f %8.4f %14.2f\n", row.model.c_str(), train,
                  row.report.testing_accuracy_pct, row.report.f1_benign_positive,
                  row.report.misclassification_rate_pct);
    out += buf;
  }
  return out;
}

std::vector<PublishedResult> published_results() {
  auto matrix = [](std::uint64_t bb, std::uint64_t bm, std::uint64_t mb, std::uint64_t mm) {
    // Arguments are (predicted, actual) pairs as laid out in the source table.
    ConfusionMatrix cm;
    cm.at(Label::Benign, Label::Benign) = bb;
    cm.at(Label::Malignant, Label::Benign) = bm;
    cm.at(Label::Benign, Label::Malignant) = mb;
    cm.at(Label::Malignant, Label::Malignant) = mm;
    return cm;
  };
  return {
      {"ResNet-50", matrix(240, 7, 120, 293), 81.00, 80.75, 0.7908, 19.24},
      {"LeNet-5", matrix(261, 22, 99, 278), 88.40, 81.66, 0.8118, 18.33},
      {"Proposed", matrix(301, 57, 59, 243), 93.80, 82.42, 0.8384, 17.57},
  };
}

double dice(const BitMask& a, const BitMask& b) {
  require_same_size(a, b, "dice");
  std::size_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    const bool x = a.bits[i] != 0, y = b.bits[i] != 0;
    na += x;
    nb += y;
    inter += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

}  // namespace lesion::metrics
