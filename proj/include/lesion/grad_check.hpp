#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lesion/autodiff.hpp"

namespace lesion::ad {

/// Builds a scalar loss on `tape` from the given input leaves.
using LossBuilder = std::function<Var(Tape& tape, std::span<const Var> inputs)>;
/// Builds a scalar loss on `tape`, binding parameters itself.
using ParameterLossBuilder = std::function<Var(Tape& tape)>;

struct GradCheckResult {
  /// max over checked coordinates of |analytic-numeric| / max(|analytic|,|numeric|,1e-8)
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  /// Coordinates whose central-difference stencil crosses a non-differentiable
  /// point (branch signature differs at x+h or x-h). They are excluded from the max.
  std::size_t skipped_kinks = 0;
};

double relative_error(double analytic, double numeric) noexcept;

/// Compares analytic input gradients against central differences.
GradCheckResult grad_check(const LossBuilder& build, const std::vector<Tensor>& inputs, double h = 1e-5);

/// Same, with inputs drawn uniformly from [-1,1] using `seed`.
GradCheckResult grad_check(const LossBuilder& build, std::span<const Shape> input_shapes, double h = 1e-5,
                           std::uint64_t seed = 1);

/// Checks parameter gradients by perturbing values in place (restored after).
/// With max_per_parameter > 0, only that many evenly strided scalars of each
/// parameter are checked.
GradCheckResult grad_check_parameters(ParameterSet& params, const ParameterLossBuilder& build, double h = 1e-5,
                                      std::size_t max_per_parameter = 0);

}  // namespace lesion::ad
