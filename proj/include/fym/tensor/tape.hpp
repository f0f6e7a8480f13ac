#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fym/tensor/array.hpp"

namespace fym::tensor {

/// Named, ordered collection of trainable arrays. A parameter's identity is its index.
class ParamStore {
 public:
  std::size_t add(std::string name, Array value) {
    if (find(name)) throw std::invalid_argument("param store: duplicate parameter '" + name + "'");
    if (!value.all_finite()) throw std::invalid_argument("param store: non-finite init for '" + name + "'");
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return values_.size() - 1;
  }

  std::size_t size() const noexcept { return values_.size(); }
  Array& value(std::size_t id) { return values_.at(id); }
  const Array& value(std::size_t id) const { return values_.at(id); }
  const std::string& name(std::size_t id) const { return names_.at(id); }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i] == name) return i;
    }
    return std::nullopt;
  }

  std::size_t id(std::string_view name) const {
    auto found = find(name);
    if (!found) throw std::out_of_range("param store: no parameter '" + std::string(name) + "'");
    return *found;
  }

  std::size_t scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Array> values_;
};

/// Gradients indexed by parameter id; unreachable parameters hold zeros.
using GradMap = std::vector<Array>;

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Array& value() const;
};

/// Reverse-mode tape. Nodes are appended in execution order and replayed in exact reverse.
/// With recording disabled, ops still compute values but register no backward closures.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  Var constant(Array value) {
    if (!value.all_finite()) {
      throw std::invalid_argument("tape: non-finite constant of shape " + shape_string(value.shape()));
    }
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  /// Leaf referencing a stored parameter. The store must outlive the tape and stay unmodified
  /// until backward() completes.
  Var param(const ParamStore& store, std::size_t id) {
    if (store_ && store_ != &store) throw std::invalid_argument("tape: parameters from two stores");
    store_ = &store;
    if (auto it = param_nodes_.find(id); it != param_nodes_.end()) return {this, it->second};
    const Array& ref = store.value(id);
    if (!ref.all_finite()) throw std::invalid_argument("tape: non-finite parameter '" + store.name(id) + "'");
    Node n;
    n.ref = &ref;
    n.param_id = id;
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    param_nodes_.emplace(id, nodes_.size() - 1);
    return {this, nodes_.size() - 1};
  }

  Var param(const ParamStore& store, std::string_view name) { return param(store, store.id(name)); }

  const Array& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.ref ? *n.ref : n.value;
  }
  const Array& value(Var v) const { return value(v.id); }

  /// Appends an op result. `inputs` are the operand node ids; `fn` propagates grad(self) into them.
  /// Results that depend on no parameter record no backward closure.
  Var push(Array value, std::string_view op, std::initializer_list<std::size_t> inputs, BackwardFn fn) {
    if (!value.all_finite()) {
      throw std::invalid_argument("tape: op '" + std::string(op) + "' produced non-finite values");
    }
    Node n;
    n.value = std::move(value);
    for (std::size_t in : inputs) n.requires_grad = n.requires_grad || nodes_.at(in).requires_grad;
    if (recording_ && n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  /// Gradient buffer of a node, allocated as zeros on first access.
  Array& grad(std::size_t id) {
    Node& n = nodes_.at(id);
    if (!n.grad) n.grad = Array::zeros_like(n.ref ? *n.ref : n.value);
    return *n.grad;
  }
  bool has_grad(std::size_t id) const { return nodes_.at(id).grad.has_value(); }
  bool needs_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Backpropagates from a scalar loss and returns one gradient per parameter in `store`.
  GradMap backward(Var loss, const ParamStore& store) {
    if (loss.tape != this || loss.id >= nodes_.size()) {
      throw std::invalid_argument("tape: loss was not recorded on this tape");
    }
    if (!recording_) throw std::invalid_argument("tape: backward on a non-recording tape");
    if (value(loss).size() != 1) {
      throw std::invalid_argument("tape: loss must be scalar, got shape " + shape_string(value(loss).shape()));
    }
    if (store_ && store_ != &store) throw std::invalid_argument("tape: backward against a foreign store");
    for (auto& n : nodes_) n.grad.reset();
    grad(loss.id).fill(1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad) n.backward(*this, i);
    }
    GradMap out;
    out.reserve(store.size());
    for (std::size_t p = 0; p < store.size(); ++p) out.push_back(Array::zeros_like(store.value(p)));
    for (const auto& [pid, node] : param_nodes_) {
      if (nodes_[node].grad) out[pid] = std::move(*nodes_[node].grad);
    }
    return out;
  }

 private:
  struct Node {
    Array value;
    const Array* ref = nullptr;
    std::optional<std::size_t> param_id;
    bool requires_grad = false;
    BackwardFn backward;
    std::optional<Array> grad;
  };

  bool recording_;
  std::vector<Node> nodes_;
  std::unordered_map<std::size_t, std::size_t> param_nodes_;
  const ParamStore* store_ = nullptr;
};

inline const Array& Var::value() const { return tape->value(*this); }

}  // namespace fym::tensor
