#pragma once

#include <cstdint>
#include <vector>

#include "lesion/autodiff.hpp"

namespace lesion::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are allocated to match the parameter
/// set given at construction; step() refuses a set whose shapes have changed.
class Adam {
 public:
  Adam(const ParameterSet& params, AdamConfig config);

  void step(ParameterSet& params);

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t step_count() const noexcept { return step_count_; }
  const std::vector<Tensor>& first_moment() const noexcept { return first_; }
  const std::vector<Tensor>& second_moment() const noexcept { return second_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  std::uint64_t step_count_ = 0;
};

}  // namespace lesion::ad
