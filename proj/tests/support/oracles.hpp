#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lesion/grad_check.hpp"
#include "lesion/kmeans.hpp"
#include "lesion/networks.hpp"
#include "lesion/random.hpp"

namespace lesion::testing {

constexpr double kGradTolerance = 1e-4;
constexpr double kGradStep = 1e-5;

struct GradCase {
  std::string name;
  ad::LossBuilder build;
  std::vector<Shape> shapes;
  std::uint64_t seed = 1;
};

// Random fixed weights turn any tensor-valued output into a scalar whose
// gradient exercises every output element.
inline ad::Var weighted_sum(ad::Var x, std::uint64_t seed) {
  Rng rng(seed);
  return ad::sum(ad::mul(x, x.tape->input(Tensor::uniform(x.shape(), -1, 1, rng))));
}

inline ad::GradCheckResult run(const GradCase& c) {
  return ad::grad_check(c.build, std::span<const Shape>(c.shapes), kGradStep, c.seed);
}

// One case per differentiable primitive of the tensor engine.
inline std::vector<GradCase> primitive_grad_cases() {
  using ad::Tape;
  using ad::Var;
  using In = std::span<const Var>;
  std::vector<GradCase> cases;
  cases.push_back({"conv2d same",
                   [](Tape&, In in) { return weighted_sum(ad::conv2d(in[0], in[1], in[2], ad::Padding::Same), 3); },
                   {{2, 5, 5}, {3, 2, 3, 3}, {3}}});
  cases.push_back({"conv2d valid",
                   [](Tape&, In in) { return weighted_sum(ad::conv2d(in[0], in[1], in[2], ad::Padding::Valid), 4); },
                   {{2, 6, 5}, {2, 2, 3, 2}, {2}}});
  cases.push_back({"maxpool2d", [](Tape&, In in) { return weighted_sum(ad::maxpool2d(in[0]), 5); }, {{2, 4, 6}}});
  cases.push_back({"upsample2x", [](Tape&, In in) { return weighted_sum(ad::upsample2x(in[0]), 6); }, {{2, 3, 3}}});
  cases.push_back({"relu", [](Tape&, In in) { return weighted_sum(ad::relu(in[0]), 7); }, {{3, 4, 4}}});
  cases.push_back({"sigmoid", [](Tape&, In in) { return weighted_sum(ad::sigmoid(in[0]), 8); }, {{3, 4, 4}}});
  cases.push_back({"activation dispatch",
                   [](Tape&, In in) { return weighted_sum(ad::activation(in[0], ad::Activation::Sigmoid), 15); },
                   {{2, 3, 3}}});
  cases.push_back({"concat_channels",
                   [](Tape&, In in) { return weighted_sum(ad::concat_channels(in[0], in[1]), 9); },
                   {{1, 3, 3}, {2, 3, 3}}});
  cases.push_back({"slice_channels",
                   [](Tape&, In in) { return weighted_sum(ad::slice_channels(in[0], 1, 3), 16); }, {{4, 2, 3}}});
  cases.push_back({"dense", [](Tape&, In in) { return weighted_sum(ad::dense(in[0], in[1], in[2]), 10); },
                   {{3}, {2, 3}, {2}}});
  cases.push_back({"flatten and reshape",
                   [](Tape&, In in) { return weighted_sum(ad::reshape(ad::flatten(in[0]), {4, 3}), 13); },
                   {{2, 2, 3}}});
  cases.push_back({"add", [](Tape&, In in) { return weighted_sum(ad::add(in[0], in[1]), 17); }, {{2, 3}, {2, 3}}});
  cases.push_back({"mul", [](Tape&, In in) { return weighted_sum(ad::mul(in[0], in[1]), 18); }, {{2, 3}, {2, 3}}});
  cases.push_back({"scale", [](Tape&, In in) { return weighted_sum(ad::scale(in[0], -2.5), 19); }, {{5}}});
  cases.push_back({"square", [](Tape&, In in) { return weighted_sum(ad::square(in[0]), 20); }, {{5}}});
  cases.push_back({"sum", [](Tape&, In in) { return ad::square(ad::sum(in[0])); }, {{2, 2, 2}}});
  cases.push_back({"mean", [](Tape&, In in) { return ad::square(ad::mean(in[0])); }, {{2, 2, 2}}});
  {
    Rng rng(12);
    Tensor target({12});
    for (auto& v : target.values()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    cases.push_back({"loss_bce", [target](Tape&, In in) { return ad::loss_bce(ad::sigmoid(in[0]), target); }, {{12}}});
  }
  cases.push_back({"loss_softmax_ce", [](Tape&, In in) { return ad::loss_softmax_ce(in[0], 1); }, {{4}}});
  return cases;
}

// Every parameter of a depth-2 U-Net on a 16x16 image under BCE.
inline ad::GradCheckResult tiny_unet_grad_check() {
  auto net = nets::build_unet(nets::unet_spec(16, 2, 2), 11);
  Rng rng(2);
  const Tensor image = Tensor::uniform({3, 16, 16}, 0, 1, rng);
  Tensor target({1, 16, 16}, 0.0);
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
  return ad::grad_check_parameters(
      net.params,
      [&](ad::Tape& tape) { return ad::loss_bce(nets::forward(net, tape, tape.constant_ref(image)), target); },
      kGradStep);
}

// 25 evenly strided scalars of each LeNet-5 parameter under softmax CE.
inline ad::GradCheckResult lenet_grad_check() {
  auto net = nets::build_lenet5(nets::lenet5_spec(), 5);
  Rng rng(4);
  const Tensor image = Tensor::uniform({3, 32, 32}, 0, 1, rng);
  return ad::grad_check_parameters(
      net.params,
      [&](ad::Tape& tape) { return ad::loss_softmax_ce(nets::forward(net, tape, tape.constant_ref(image)), 1); },
      kGradStep, 25);
}

// Dark disk on a light background with its mask.
inline nets::SegmentationSample disk_sample(std::size_t n, double cy, double cx, double r) {
  Tensor image({3, n, n}, 0.0), mask({1, n, n}, 0.0);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const bool in = std::hypot(y - cy, x - cx) <= r;
      mask[y * n + x] = in ? 1.0 : 0.0;
      for (std::size_t c = 0; c < 3; ++c) image[(c * n + y) * n + x] = in ? 0.25 + 0.05 * c : 0.85 - 0.05 * c;
    }
  }
  return {image, mask};
}

// Flat-colour 32x32 crops: reddish = benign, bluish = malignant, with jitter.
inline std::vector<nets::ClassificationSample> toy_crops(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<nets::ClassificationSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Label label = i % 2 == 0 ? Label::Benign : Label::Malignant;
    Tensor t({3, 32, 32}, 0.0);
    const double base[3] = {label == Label::Benign ? 0.8 : 0.2, 0.4, label == Label::Benign ? 0.2 : 0.8};
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < 1024; ++p) t[c * 1024 + p] = base[c] + rng.uniform(-0.1, 0.1);
    out.push_back({t, label});
  }
  return out;
}

// Minimum SSE over every labelling of the points into exactly k non-empty groups.
inline double exhaustive_min_sse(const annotation::FeatureMatrix& f, std::size_t k) {
  std::vector<std::size_t> label(f.rows, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<double> sum(k * f.dims, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < f.rows; ++i) {
      ++count[label[i]];
      for (std::size_t d = 0; d < f.dims; ++d) sum[label[i] * f.dims + d] += f.row(i)[d];
    }
    if (std::all_of(count.begin(), count.end(), [](std::size_t c) { return c > 0; })) {
      double sse = 0.0;
      for (std::size_t i = 0; i < f.rows; ++i) {
        for (std::size_t d = 0; d < f.dims; ++d) {
          const double mean = sum[label[i] * f.dims + d] / static_cast<double>(count[label[i]]);
          sse += (f.row(i)[d] - mean) * (f.row(i)[d] - mean);
        }
      }
      best = std::min(best, sse);
    }
    std::size_t pos = 0;
    while (pos < f.rows && ++label[pos] == k) label[pos++] = 0;
    if (pos == f.rows) break;
  }
  return best;
}

// Thresholds a [1,H,W] target at 0.5.
inline BitMask to_mask(const Tensor& t) {
  BitMask m(t.dim(1), t.dim(2));
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = t[i] > 0.5;
  return m;
}

// Pixel-count Dice, independent of the metrics module.
inline double dice_of(const BitMask& a, const BitMask& b) {
  std::size_t inter = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) inter += a.bits[i] && b.bits[i];
  const std::size_t total = a.count() + b.count();
  return total == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

}  // namespace lesion::testing
