#pragma once

// Reverse-mode automatic differentiation over lesion::Tensor.
//
// A Tape records every executed operation in execution order, so node ids are
// a topological order by construction. Gradients flow back from a scalar loss
// in reverse id order. Trainable tensors live in a ParameterSet; binding one to
// a tape references it without copying, and backward() accumulates into the
// parameter's grad (callers zero grads between optimizer steps).

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lesion/tensor.hpp"

namespace lesion::ad {

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Named trainable tensors. Element addresses are stable for the lifetime of
/// the set, so tapes may hold pointers into it.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Parameter& add(std::string name, Tensor initial);

  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  Parameter* find(std::string_view name) noexcept;
  const Parameter* find(std::string_view name) const noexcept;

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const noexcept;

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

  void zero_grad() noexcept;

  /// Same names, order, shapes and values.
  bool same_values(const ParameterSet& other) const noexcept;

 private:
  std::deque<Parameter> params_;
};

/// Context handed to a node's backward function. Entries of input_grads are
/// null for inputs that do not require a gradient.
struct BackwardContext {
  const Tensor& output;
  const Tensor& output_grad;
  std::span<const Tensor* const> input_values;
  std::span<Tensor* const> input_grads;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf holding its own copy of `value`.
  Var input(Tensor value, bool requires_grad = false);
  /// Leaf referencing `value` without copying; it must outlive the tape.
  Var constant_ref(const Tensor& value);
  /// Leaf bound to a trainable parameter; backward() accumulates into param.grad.
  Var parameter(Parameter& param);
  /// Leaf bound read-only to a parameter (inference).
  Var frozen(const Parameter& param) { return constant_ref(param.value); }

  /// Appends an operation node. `backward` may be empty for non-differentiable
  /// outputs.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;

  /// Reverse accumulation from a single-element loss node.
  void backward(Var loss);

  std::size_t node_count() const noexcept { return nodes_.size(); }

  /// Hash of every branch taken at non-differentiable points (relu sign,
  /// pooling argmax, loss clipping). Two evaluations with equal signatures lie
  /// on the same smooth piece of the function.
  std::uint64_t branch_signature() const noexcept { return branch_signature_; }
  void mix_branch(std::uint64_t bits) noexcept;

 private:
  struct Node {
    Tensor owned;
    const Tensor* value = nullptr;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Node& node(Var v);
  const Node& node(Var v) const;

  std::deque<Node> nodes_;
  std::uint64_t branch_signature_ = 0;
  bool backward_done_ = false;
};

enum class Padding { Same, Valid };
enum class Activation { Relu, Sigmoid };

// Layer primitives. Spatial tensors are [C,H,W].

/// Cross-correlation (no kernel flip), stride 1. kernels [C_out,C_in,kh,kw], bias [C_out].
Var conv2d(Var input, Var kernels, Var bias, Padding padding);
/// Non-overlapping max pooling. Ties route the gradient to the first maximum in row-major order.
Var maxpool2d(Var input, std::size_t window = 2);
/// Nearest-neighbour 2x up-sampling.
Var upsample2x(Var input);
Var relu(Var input);
Var sigmoid(Var input);
Var activation(Var input, Activation kind);
Var concat_channels(Var a, Var b);
Var slice_channels(Var input, std::size_t begin, std::size_t end);
/// weights [M,N] times input [N] plus bias [M].
Var dense(Var input, Var weights, Var bias);
Var reshape(Var input, Shape shape);
Var flatten(Var input);

// Elementwise and reductions.
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var input, double factor);
Var square(Var input);
Var sum(Var input);
Var mean(Var input);

inline constexpr double kBceClip = 1e-7;

/// Mean binary cross-entropy; predictions are clamped to [kBceClip, 1-kBceClip].
Var loss_bce(Var predicted, const Tensor& target);
/// -log softmax(logits)[class_index] with max-subtraction.
Var loss_softmax_ce(Var logits, std::size_t class_index);

/// Numerically stable softmax of a flat tensor.
Tensor softmax(const Tensor& logits);

}  // namespace lesion::ad
