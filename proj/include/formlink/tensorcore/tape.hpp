#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "formlink/error.hpp"
#include "formlink/tensorcore/tensor.hpp"

namespace formlink::tc {

/// A named trainable tensor together with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() {
    if (grad.shape() != value.shape()) grad = Tensor(value.shape());
    grad.fill(0.0);
  }
};

/// Ordered registry of parameters by name. Iteration order is the name order,
/// which is what checkpoints and the optimizer rely on.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor init) {
    auto [it, inserted] = params_.try_emplace(name, name, std::move(init));
    if (!inserted) throw ContractError("ParamStore: duplicate parameter " + name);
    return it->second;
  }

  Parameter& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("ParamStore: unknown parameter " + name);
    return it->second;
  }
  const Parameter& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("ParamStore: unknown parameter " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  void zero_grad() {
    for (auto& [_, p] : params_) p.zero_grad();
  }

  std::size_t size() const noexcept { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Parameter> params_;
};

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

/// Records operations in execution order and replays their backward rules in
/// exact reverse. Single-threaded; consumed by at most one backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A constant input (no gradient).
  Var constant(Tensor value) { return push("constant", std::move(value), false, nullptr); }

  /// A free leaf whose gradient can be read back with grad().
  Var leaf(Tensor value) { return push("leaf", std::move(value), true, nullptr); }

  /// A leaf bound to a parameter; backward accumulates into param.grad.
  /// Repeated calls for the same parameter return the same node.
  Var param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var{this, it->second};
    Var v = push("param:" + p.name, p.value, true, nullptr);
    nodes_[v.id].param = &p;
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  /// Records an operation result. `backward` is invoked during the backward pass
  /// with the node's upstream gradient available via grad(self).
  Var record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (const Var& in : inputs) {
      if (in.tape != this) throw ContractError(std::string(op) + ": input from a different tape");
      needs = needs || nodes_[in.id].requires_grad;
    }
    return push(op, std::move(value), needs, needs ? std::move(backward) : BackwardFn{});
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }

  /// Positive/non-positive flag of every output of `op` nodes, in recording
  /// order. Two evaluations with different patterns lie on different sides of
  /// a relu kink.
  std::vector<bool> activation_pattern(const std::string& op = "relu") const {
    std::vector<bool> out;
    for (const Node& n : nodes_)
      if (n.op == op)
        for (double v : n.value.storage()) out.push_back(v > 0.0);
    return out;
  }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Upstream gradient of a node; zeros if nothing flowed into it.
  const Tensor& grad(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
  }
  const Tensor& grad(Var v) { return grad(v.id); }

  /// Mutable gradient buffer for accumulation inside backward rules.
  Tensor& grad_buffer(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

  bool has_grad(std::size_t id) const { return !nodes_.at(id).grad.empty(); }

  void backward(Var loss) {
    if (loss.tape != this) throw ContractError("backward: loss from a different tape");
    if (consumed_) throw ContractError("backward: tape already consumed by a previous backward pass");
    const Tensor& lv = value(loss.id);
    if (lv.size() != 1) throw ContractError("backward: loss must be scalar, got shape " + shape_str(lv.shape()));
    consumed_ = true;
    grad_buffer(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
    }
    for (auto& [p, id] : param_nodes_) {
      const Node& n = nodes_[id];
      if (n.grad.empty()) continue;
      if (p->grad.shape() != p->value.shape()) p->zero_grad();
      auto dst = p->grad.values();
      auto src = n.grad.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }

  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  Var push(std::string op, Tensor value, bool requires_grad, BackwardFn backward) {
    if (consumed_) throw ContractError(op + ": recording on a consumed tape");
    if (!value.all_finite()) throw NumericError(op + ": non-finite value in output of shape " + shape_str(value.shape()));
    nodes_.push_back(Node{std::move(op), std::move(value), Tensor{}, requires_grad, std::move(backward), nullptr});
    return Var{this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;  // stable addresses: Var::value() references survive later pushes
  std::unordered_map<Parameter*, std::size_t> param_nodes_;
  bool consumed_ = false;
};

inline const Tensor& Var::value() const { return tape->value(id); }
inline bool Var::requires_grad() const { return tape->requires_grad(id); }

}  // namespace formlink::tc
