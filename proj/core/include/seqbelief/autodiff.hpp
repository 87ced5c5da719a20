#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "seqbelief/tensor.hpp"

namespace seqbelief {

/// Ordered collection of named learnable tensors. Indices are stable once a
/// tensor is added, so networks refer to their weights by index.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value);

  std::size_t size() const noexcept { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }

  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  std::size_t total_size() const noexcept;

  /// Same names and shapes in the same order.
  bool same_layout(const ParameterSet& other) const noexcept;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.names_ == b.names_ && a.tensors_ == b.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// One gradient tensor per parameter tensor, aligned by index.
class GradientSet {
 public:
  GradientSet() = default;
  static GradientSet zeros_like(const ParameterSet& params);

  std::size_t size() const noexcept { return grads_.size(); }
  Tensor& operator[](std::size_t i) { return grads_[i]; }
  const Tensor& operator[](std::size_t i) const { return grads_[i]; }

  void set_zero();
  void add_scaled(const GradientSet& other, double scale);
  void scale(double factor);
  bool all_finite() const noexcept;

 private:
  std::vector<Tensor> grads_;
};

namespace ad {

/// Handle to a node on a Tape.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const noexcept { return id != UINT32_MAX; }
};

/// Reverse-mode automatic differentiation over vector-valued nodes.
///
/// Nodes are appended in evaluation order, so creation order is a topological
/// order and backward() is a single reverse sweep. Parameter leaves borrow the
/// caller's tensors (no copy) and flush their gradients into a caller-owned
/// sink; a null sink marks the parameter frozen, and any subtree that depends
/// only on frozen leaves and constants is skipped during backward.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var constant(std::span<const double> values);
  Var scalar(double value);
  /// Leaf bound to `value`, which must outlive the tape. Repeated calls with
  /// the same tensor return the same node.
  Var param(const Tensor& value, Tensor* grad_sink);

  const Tensor& value(Var v) const;
  double item(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  Var matvec(Var w, Var x);  // [m,n] x [n] -> [m]
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var concat(std::span<const Var> parts);
  Var gelu(Var a);
  Var sigmoid(Var a);
  Var log(Var a);
  Var clamp(Var a, double lo, double hi);
  Var mask(Var a, std::vector<double> multipliers);
  Var sum(Var a);
  Var dot(Var a, Var b);
  Var sq_norm(Var a);
  /// Pack scalar nodes into one vector node.
  Var stack(std::span<const Var> scalars);
  Var softmax(Var a);
  /// sum_i weights[i] * values[i]
  Var weighted_sum(Var weights, std::span<const Var> values);

  /// Backpropagate from a scalar node; throws InvalidInput otherwise.
  void backward(Var loss, double seed = 1.0);

 private:
  enum class Op : std::uint8_t {
    Leaf, Param, MatVec, Add, Sub, Mul, Scale, AddScalar, Concat, Gelu, Sigmoid, Log,
    Clamp, Mask, Sum, Dot, SqNorm, Stack, Softmax, WeightedSum
  };

  struct Node {
    Op op = Op::Leaf;
    std::uint32_t a = UINT32_MAX;
    std::uint32_t b = UINT32_MAX;
    double c0 = 0.0;
    double c1 = 0.0;
    bool requires_grad = false;
    std::vector<std::uint32_t> inputs;
    std::vector<double> aux;
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor* sink = nullptr;
    std::vector<double> grad;
  };

  Var push(Node node);
  const Tensor& val(std::uint32_t id) const;
  std::vector<double>& grad_of(std::uint32_t id);
  bool rg(std::uint32_t id) const { return nodes_[id].requires_grad; }
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, std::uint32_t> param_cache_;
};

}  // namespace ad

/// Bundles a parameter set with the gradient sink used while recording.
struct Binding {
  const ParameterSet& params;
  GradientSet* grads = nullptr;

  ad::Var operator()(ad::Tape& tape, std::size_t index) const {
    return tape.param(params[index], grads ? &(*grads)[index] : nullptr);
  }
};

}  // namespace seqbelief
