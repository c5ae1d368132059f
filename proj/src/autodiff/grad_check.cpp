#include "lesion/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "lesion/random.hpp"

namespace lesion::ad {

double relative_error(double analytic, double numeric) noexcept {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

struct Evaluation {
  double loss;
  std::uint64_t signature;
};

Evaluation evaluate_inputs(const LossBuilder& build, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.constant_ref(t));
  const Var loss = build(tape, leaves);
  return {loss.value().item(), tape.branch_signature()};
}

Evaluation evaluate_parameters(ParameterSet& params, const ParameterLossBuilder& build) {
  Tape tape;
  const Var loss = build(tape);
  (void)params;
  return {loss.value().item(), tape.branch_signature()};
}

template <typename Eval>
void compare(double* coordinate, double analytic, double h, std::uint64_t signature, Eval&& eval,
             GradCheckResult& result) {
  const double saved = *coordinate;
  *coordinate = saved + h;
  const Evaluation plus = eval();
  *coordinate = saved - h;
  const Evaluation minus = eval();
  *coordinate = saved;
  ++result.coordinates;
  if (plus.signature != signature || minus.signature != signature) {
    ++result.skipped_kinks;
    return;
  }
  const double numeric = (plus.loss - minus.loss) / (2.0 * h);
  result.max_relative_error = std::max(result.max_relative_error, relative_error(analytic, numeric));
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& build, const std::vector<Tensor>& inputs, double h) {
  std::vector<Tensor> analytic;
  std::uint64_t signature = 0;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.input(t, true));
    const Var loss = build(tape, leaves);
    signature = tape.branch_signature();
    tape.backward(loss);
    for (const auto& leaf : leaves) analytic.push_back(leaf.grad());
  }

  GradCheckResult result;
  std::vector<Tensor> work = inputs;
  for (std::size_t k = 0; k < work.size(); ++k) {
    for (std::size_t i = 0; i < work[k].size(); ++i) {
      compare(&work[k][i], analytic[k][i], h, signature, [&] { return evaluate_inputs(build, work); }, result);
    }
  }
  return result;
}

GradCheckResult grad_check(const LossBuilder& build, std::span<const Shape> input_shapes, double h,
                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> inputs;
  for (const auto& shape : input_shapes) inputs.push_back(Tensor::uniform(shape, -1.0, 1.0, rng));
  return grad_check(build, inputs, h);
}

GradCheckResult grad_check_parameters(ParameterSet& params, const ParameterLossBuilder& build, double h,
                                      std::size_t max_per_parameter) {
  params.zero_grad();
  std::uint64_t signature = 0;
  {
    Tape tape;
    const Var loss = build(tape);
    signature = tape.branch_signature();
    tape.backward(loss);
  }
  std::vector<Tensor> analytic;
  for (const auto& p : params) analytic.push_back(p.grad);

  GradCheckResult result;
  std::size_t k = 0;
  for (auto& p : params) {
    const std::size_t n = p.value.size();
    const std::size_t stride = max_per_parameter == 0 || n <= max_per_parameter ? 1 : n / max_per_parameter;
    for (std::size_t i = 0; i < n; i += stride) {
      compare(&p.value[i], analytic[k][i], h, signature, [&] { return evaluate_parameters(params, build); }, result);
    }
    ++k;
  }
  params.zero_grad();
  return result;
}

}  // namespace lesion::ad
