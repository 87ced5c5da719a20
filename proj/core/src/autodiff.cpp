#include "seqbelief/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "seqbelief/error.hpp"

namespace seqbelief {

// ---------------------------------------------------------------------------
// ParameterSet / GradientSet

std::size_t ParameterSet::add(std::string name, Tensor value) {
  if (index_.count(name)) throw InvalidInput("duplicate parameter name '" + name + "'");
  const std::size_t idx = tensors_.size();
  index_.emplace(name, idx);
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
  return idx;
}

std::optional<std::size_t> ParameterSet::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParameterSet::index_of(std::string_view name) const {
  auto idx = find(name);
  if (!idx) throw InvalidInput("unknown parameter '" + std::string(name) + "'");
  return *idx;
}

std::size_t ParameterSet::total_size() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool ParameterSet::same_layout(const ParameterSet& other) const noexcept {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (!tensors_[i].same_shape(other.tensors_[i])) return false;
  }
  return true;
}

GradientSet GradientSet::zeros_like(const ParameterSet& params) {
  GradientSet g;
  g.grads_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) g.grads_.emplace_back(params[i].shape());
  return g;
}

void GradientSet::set_zero() {
  for (auto& t : grads_) t.fill(0.0);
}

void GradientSet::add_scaled(const GradientSet& other, double scale) {
  if (other.size() != size()) throw InvalidInput("gradient sets differ in length");
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    auto dst = grads_[i].data();
    auto src = other.grads_[i].data();
    if (dst.size() != src.size()) throw InvalidInput("gradient shapes differ at index " + std::to_string(i));
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
  }
}

void GradientSet::scale(double factor) {
  for (auto& t : grads_)
    for (double& v : t.data()) v *= factor;
}

bool GradientSet::all_finite() const noexcept {
  return std::all_of(grads_.begin(), grads_.end(), [](const Tensor& t) { return t.all_finite(); });
}

namespace ad {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_deriv(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_same_size(const Tensor& a, const Tensor& b, const char* op) {
  if (a.size() != b.size()) {
    throw InvalidInput(std::string(op) + ": operand sizes differ (" + std::to_string(a.size()) +
                       " vs " + std::to_string(b.size()) + ")");
  }
}

}  // namespace

void Tape::check(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw InvalidInput("variable does not belong to this tape");
}

const Tensor& Tape::val(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.borrowed ? *n.borrowed : n.owned;
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return val(v.id);
}

double Tape::item(Var v) const {
  const Tensor& t = value(v);
  if (t.size() != 1) throw InvalidInput("item() requires a scalar node");
  return t[0];
}

std::vector<double>& Tape::grad_of(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(val(id).size(), 0.0);
  return n.grad;
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Op::Leaf;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(std::span<const double> values) {
  return constant(Tensor::vector(std::vector<double>(values.begin(), values.end())));
}

Var Tape::scalar(double value) { return constant(Tensor::scalar(value)); }

Var Tape::param(const Tensor& value, Tensor* grad_sink) {
  if (auto it = param_cache_.find(&value); it != param_cache_.end()) return Var{it->second};
  if (grad_sink && !grad_sink->same_shape(value)) {
    throw InvalidInput("gradient sink shape " + shape_string(grad_sink->shape()) +
                       " does not match parameter shape " + shape_string(value.shape()));
  }
  Node n;
  n.op = Op::Param;
  n.borrowed = &value;
  n.sink = grad_sink;
  n.requires_grad = grad_sink != nullptr;
  Var v = push(std::move(n));
  param_cache_.emplace(&value, v.id);
  return v;
}

Var Tape::matvec(Var w, Var x) {
  check(w);
  check(x);
  const Tensor& W = val(w.id);
  const Tensor& X = val(x.id);
  if (W.rank() != 2 || W.cols() != X.size()) {
    throw InvalidInput("matvec: matrix " + shape_string(W.shape()) + " incompatible with vector of length " +
                       std::to_string(X.size()));
  }
  const std::size_t m = W.rows(), k = W.cols();
  std::vector<double> out(m, 0.0);
  const double* wp = W.data().data();
  const double* xp = X.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* row = wp + i * k;
    for (std::size_t j = 0; j < k; ++j) acc += row[j] * xp[j];
    out[i] = acc;
  }
  Node n;
  n.op = Op::MatVec;
  n.a = w.id;
  n.b = x.id;
  n.requires_grad = rg(w.id) || rg(x.id);
  n.owned = Tensor::vector(std::move(out));
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  require_same_size(A, B, "add");
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
  Node n;
  n.op = Op::Add;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = rg(a.id) || rg(b.id);
  n.owned = Tensor::vector(std::move(out));
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  require_same_size(A, B, "sub");
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] - B[i];
  Node n;
  n.op = Op::Sub;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = rg(a.id) || rg(b.id);
  n.owned = Tensor::vector(std::move(out));
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  require_same_size(A, B, "mul");
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  Node n;
  n.op = Op::Mul;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = rg(a.id) || rg(b.id);
  n.owned = Tensor::vector(std::move(out));
  return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
  check(a);
  const Tensor& A = val(a.id);
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * A[i];
  Node n;
  n.op = Op::Scale;
  n.a = a.id;
  n.c0 = c;
  n.requires_grad = rg(a.id);
  n.owned = Tensor::vector(std::move(out));
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double c) {
  check(a);
  const Tensor& A = val(a.id);
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + c;
  Node n;
  n.op = Op::AddScalar;
  n.a = a.id;
  n.requires_grad = rg(a.id);
  n.owned = Tensor::vector(std::move(out));
  return push(std::move(n));
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidInput("concat: no operands");
  Node n;
  n.op = Op::Concat;
  std::vector<double> out;
  for (Var p : parts) {
    check(p);
    const Tensor& T = val(p.id);
    out.insert(out.end(), T.data().begin(), T.data().end());
    n.inputs.push_back(p.id);
    n.requires_grad = n.requires_grad || rg(p.id);
  }
  n.owned = Tensor::vector(std::move(out));
  return push(std::move(n));
}

Var Tape::gelu(Var a) {
  check(a);
  const Tensor& A = val(a.id);
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_value(A[i]);
  Node n;
  n.op = Op::Gelu;
  n.a = a.id;
  n.requires_grad = rg(a.id);
  n.owned = Tensor::vector(std::move(out));
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  check(a);
  const Tensor& A = val(a.id);
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_value(A[i]);
  Node n;
  n.op = Op::Sigmoid;
  n.a = a.id;
  n.requires_grad = rg(a.id);
  n.owned = Tensor::vector(std::move(out));
  return push(std::move(n));
}

Var Tape::log(Var a) {
  check(a);
  const Tensor& A = val(a.id);
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(A[i] > 0.0)) throw NumericError("log of non-positive value " + std::to_string(A[i]));
    out[i] = std::log(A[i]);
  }
  Node n;
  n.op = Op::Log;
  n.a = a.id;
  n.requires_grad = rg(a.id);
  n.owned = Tensor::vector(std::move(out));
  return push(std::move(n));
}

Var Tape::clamp(Var a, double lo, double hi) {
  check(a);
  const Tensor& A = val(a.id);
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(A[i], lo, hi);
  Node n;
  n.op = Op::Clamp;
  n.a = a.id;
  n.c0 = lo;
  n.c1 = hi;
  n.requires_grad = rg(a.id);
  n.owned = Tensor::vector(std::move(out));
  return push(std::move(n));
}

Var Tape::mask(Var a, std::vector<double> multipliers) {
  check(a);
  const Tensor& A = val(a.id);
  if (multipliers.size() != A.size()) throw InvalidInput("mask: length mismatch");
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * multipliers[i];
  Node n;
  n.op = Op::Mask;
  n.a = a.id;
  n.requires_grad = rg(a.id);
  n.aux = std::move(multipliers);
  n.owned = Tensor::vector(std::move(out));
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  check(a);
  const Tensor& A = val(a.id);
  double s = 0.0;
  for (double v : A.data()) s += v;
  Node n;
  n.op = Op::Sum;
  n.a = a.id;
  n.requires_grad = rg(a.id);
  n.owned = Tensor::scalar(s);
  return push(std::move(n));
}

Var Tape::dot(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  require_same_size(A, B, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A[i] * B[i];
  Node n;
  n.op = Op::Dot;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = rg(a.id) || rg(b.id);
  n.owned = Tensor::scalar(s);
  return push(std::move(n));
}

Var Tape::sq_norm(Var a) {
  check(a);
  const Tensor& A = val(a.id);
  double s = 0.0;
  for (double v : A.data()) s += v * v;
  Node n;
  n.op = Op::SqNorm;
  n.a = a.id;
  n.requires_grad = rg(a.id);
  n.owned = Tensor::scalar(s);
  return push(std::move(n));
}

Var Tape::stack(std::span<const Var> scalars) {
  if (scalars.empty()) throw InvalidInput("stack: no operands");
  Node n;
  n.op = Op::Stack;
  std::vector<double> out;
  out.reserve(scalars.size());
  for (Var s : scalars) {
    check(s);
    const Tensor& T = val(s.id);
    if (T.size() != 1) throw InvalidInput("stack: operands must be scalars");
    out.push_back(T[0]);
    n.inputs.push_back(s.id);
    n.requires_grad = n.requires_grad || rg(s.id);
  }
  n.owned = Tensor::vector(std::move(out));
  return push(std::move(n));
}

Var Tape::softmax(Var a) {
  check(a);
  const Tensor& A = val(a.id);
  if (A.empty()) throw InvalidInput("softmax of empty vector");
  const double mx = *std::max_element(A.data().begin(), A.data().end());
  std::vector<double> out(A.size());
  double z = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(A[i] - mx);
    z += out[i];
  }
  for (double& v : out) v /= z;
  Node n;
  n.op = Op::Softmax;
  n.a = a.id;
  n.requires_grad = rg(a.id);
  n.owned = Tensor::vector(std::move(out));
  return push(std::move(n));
}

Var Tape::weighted_sum(Var weights, std::span<const Var> values) {
  check(weights);
  const Tensor& Wt = val(weights.id);
  if (Wt.size() != values.size() || values.empty()) {
    throw InvalidInput("weighted_sum: need one weight per value");
  }
  Node n;
  n.op = Op::WeightedSum;
  n.a = weights.id;
  n.requires_grad = rg(weights.id);
  const std::size_t d = val(values[0].id).size();
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    check(values[i]);
    const Tensor& V = val(values[i].id);
    if (V.size() != d) throw InvalidInput("weighted_sum: values differ in length");
    for (std::size_t j = 0; j < d; ++j) out[j] += Wt[i] * V[j];
    n.inputs.push_back(values[i].id);
    n.requires_grad = n.requires_grad || rg(values[i].id);
  }
  n.owned = Tensor::vector(std::move(out));
  return push(std::move(n));
}

void Tape::backward(Var loss, double seed) {
  check(loss);
  if (val(loss.id).size() != 1) throw InvalidInput("backward requires a scalar loss node");
  for (auto& n : nodes_) n.grad.clear();
  if (!nodes_[loss.id].requires_grad) return;
  grad_of(loss.id)[0] = seed;

  for (std::int64_t idx = loss.id; idx >= 0; --idx) {
    const auto id = static_cast<std::uint32_t>(idx);
    if (nodes_[id].grad.empty() || !nodes_[id].requires_grad) continue;
    // Inputs always have smaller ids, so writing their grads never touches g.
    Node& n = nodes_[id];
    const std::vector<double>& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Param: {
        auto dst = n.sink->data();
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
        break;
      }
      case Op::MatVec: {
        const Tensor& W = val(n.a);
        const Tensor& X = val(n.b);
        const std::size_t m = W.rows(), k = W.cols();
        if (rg(n.a)) {
          auto& gw = grad_of(n.a);
          for (std::size_t i = 0; i < m; ++i) {
            const double gi = g[i];
            if (gi == 0.0) continue;
            double* row = gw.data() + i * k;
            for (std::size_t j = 0; j < k; ++j) row[j] += gi * X[j];
          }
        }
        if (rg(n.b)) {
          auto& gx = grad_of(n.b);
          const double* wp = W.data().data();
          for (std::size_t i = 0; i < m; ++i) {
            const double gi = g[i];
            if (gi == 0.0) continue;
            const double* row = wp + i * k;
            for (std::size_t j = 0; j < k; ++j) gx[j] += gi * row[j];
          }
        }
        break;
      }
      case Op::Add: {
        if (rg(n.a)) {
          auto& ga = grad_of(n.a);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (rg(n.b)) {
          auto& gb = grad_of(n.b);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
        break;
      }
      case Op::Sub: {
        if (rg(n.a)) {
          auto& ga = grad_of(n.a);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (rg(n.b)) {
          auto& gb = grad_of(n.b);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
        break;
      }
      case Op::Mul: {
        const Tensor& A = val(n.a);
        const Tensor& B = val(n.b);
        if (rg(n.a)) {
          auto& ga = grad_of(n.a);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
        }
        if (rg(n.b)) {
          auto& gb = grad_of(n.b);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
        }
        break;
      }
      case Op::Scale: {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.c0 * g[i];
        break;
      }
      case Op::AddScalar: {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        break;
      }
      case Op::Concat: {
        std::size_t offset = 0;
        for (std::uint32_t in : n.inputs) {
          const std::size_t len = val(in).size();
          if (rg(in)) {
            auto& gi = grad_of(in);
            for (std::size_t j = 0; j < len; ++j) gi[j] += g[offset + j];
          }
          offset += len;
        }
        break;
      }
      case Op::Gelu: {
        const Tensor& A = val(n.a);
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * gelu_deriv(A[i]);
        break;
      }
      case Op::Sigmoid: {
        const Tensor& Y = n.owned;
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * Y[i] * (1.0 - Y[i]);
        break;
      }
      case Op::Log: {
        const Tensor& A = val(n.a);
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / A[i];
        break;
      }
      case Op::Clamp: {
        const Tensor& A = val(n.a);
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (A[i] >= n.c0 && A[i] <= n.c1) ga[i] += g[i];
        }
        break;
      }
      case Op::Mask: {
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.aux[i];
        break;
      }
      case Op::Sum: {
        auto& ga = grad_of(n.a);
        for (double& v : ga) v += g[0];
        break;
      }
      case Op::Dot: {
        const Tensor& A = val(n.a);
        const Tensor& B = val(n.b);
        if (rg(n.a)) {
          auto& ga = grad_of(n.a);
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * B[i];
        }
        if (rg(n.b)) {
          auto& gb = grad_of(n.b);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[0] * A[i];
        }
        break;
      }
      case Op::SqNorm: {
        const Tensor& A = val(n.a);
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * g[0] * A[i];
        break;
      }
      case Op::Stack: {
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          if (rg(n.inputs[i])) grad_of(n.inputs[i])[0] += g[i];
        }
        break;
      }
      case Op::Softmax: {
        const Tensor& Y = n.owned;
        double inner = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) inner += g[i] * Y[i];
        auto& ga = grad_of(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += Y[i] * (g[i] - inner);
        break;
      }
      case Op::WeightedSum: {
        const Tensor& Wt = val(n.a);
        const bool weights_rg = rg(n.a);
        std::vector<double>* gw = weights_rg ? &grad_of(n.a) : nullptr;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          const std::uint32_t in = n.inputs[i];
          const Tensor& V = val(in);
          if (gw) {
            double s = 0.0;
            for (std::size_t j = 0; j < g.size(); ++j) s += g[j] * V[j];
            (*gw)[i] += s;
          }
          if (rg(in)) {
            auto& gv = grad_of(in);
            for (std::size_t j = 0; j < g.size(); ++j) gv[j] += Wt[i] * g[j];
          }
        }
        break;
      }
    }
  }
}

}  // namespace ad
}  // namespace seqbelief
