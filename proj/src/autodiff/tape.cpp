#include <algorithm>

#include "lesion/autodiff.hpp"
#include "lesion/errors.hpp"
#include "lesion/random.hpp"

namespace lesion::ad {

const Tensor& Var::value() const { return tape->value(*this); }
const Tensor& Var::grad() const { return tape->grad(*this); }

// ---------------------------------------------------------------------------
// ParameterSet

ParameterSet::ParameterSet(const ParameterSet& other) : params_(other.params_) {}

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this != &other) params_ = other.params_;
  return *this;
}

Parameter& ParameterSet::add(std::string name, Tensor initial) {
  if (find(name)) throw ContractError("duplicate parameter name '" + name + "'");
  Tensor grad(initial.shape(), 0.0);
  params_.push_back(Parameter{std::move(name), std::move(initial), std::move(grad)});
  return params_.back();
}

Parameter* ParameterSet::find(std::string_view name) noexcept {
  auto it = std::find_if(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

const Parameter* ParameterSet::find(std::string_view name) const noexcept {
  auto it = std::find_if(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

Parameter& ParameterSet::at(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw NotFoundError("no parameter named '" + std::string(name) + "'");
}

const Parameter& ParameterSet::at(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw NotFoundError("no parameter named '" + std::string(name) + "'");
}

std::size_t ParameterSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() noexcept {
  for (auto& p : params_) p.grad.fill(0.0);
}

bool ParameterSet::same_values(const ParameterSet& other) const noexcept {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name || !(params_[i].value == other.params_[i].value)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Tape

Tape::Node& Tape::node(Var v) {
  if (v.tape != this || v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
  return nodes_[v.id];
}

Var Tape::input(Tensor value, bool requires_grad) {
  auto& n = nodes_.emplace_back();
  n.owned = std::move(value);
  n.value = &n.owned;
  n.requires_grad = requires_grad;
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant_ref(const Tensor& value) {
  auto& n = nodes_.emplace_back();
  n.value = &value;
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& param) {
  auto& n = nodes_.emplace_back();
  n.value = &param.value;
  n.param = &param;
  n.requires_grad = true;
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  bool needs = false;
  for (const auto& in : inputs) {
    needs = needs || node(in).requires_grad;
    ids.push_back(in.id);
  }
  auto& n = nodes_.emplace_back();
  n.owned = std::move(value);
  n.value = &n.owned;
  n.inputs = std::move(ids);
  n.requires_grad = needs && static_cast<bool>(backward);
  if (n.requires_grad) n.backward = std::move(backward);
  return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const { return *node(v).value; }

const Tensor& Tape::grad(Var v) const {
  const auto& n = node(v);
  if (n.grad.empty()) throw ContractError("no gradient recorded for node " + std::to_string(v.id));
  return n.grad;
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

void Tape::mix_branch(std::uint64_t bits) noexcept { branch_signature_ = mix64(branch_signature_ ^ bits); }

void Tape::backward(Var loss) {
  auto& root = node(loss);
  if (root.value->size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(root.value->shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  root.grad = Tensor(root.value->shape(), 1.0);

  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    auto& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    in_values.clear();
    in_grads.clear();
    for (auto input_id : n.inputs) {
      auto& in = nodes_[input_id];
      in_values.push_back(in.value);
      if (in.requires_grad) {
        if (in.grad.empty()) in.grad = Tensor(in.value->shape(), 0.0);
        in_grads.push_back(&in.grad);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    n.backward(BackwardContext{*n.value, n.grad, in_values, in_grads});
  }

  for (auto& n : nodes_) {
    if (!n.requires_grad) continue;
    if (n.grad.empty()) n.grad = Tensor(n.value->shape(), 0.0);
    if (n.param) {
      auto& g = n.param->grad;
      if (g.shape() != n.grad.shape()) g = Tensor(n.grad.shape(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  }
}

}  // namespace lesion::ad
