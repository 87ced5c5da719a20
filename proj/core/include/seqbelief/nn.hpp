#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqbelief/autodiff.hpp"
#include "seqbelief/rng.hpp"
#include "seqbelief/tensor.hpp"

namespace seqbelief {

enum class Squash { none, unit_interval };

struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 1;
  Squash output_squash = Squash::none;
  double dropout_rate = 0.0;

  void validate() const;
};

/// Per-call forward options. Dropout is active only when `training` is set
/// and an RNG is supplied.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

/// Weight initialisation: N(0, std^2) with std = gain / sqrt(fan_in), or a
/// fixed std when given. Biases start at zero.
struct InitOptions {
  double gain = 1.0;
  std::optional<double> fixed_std;
};

/// Fully connected network: hidden layers use GELU, dropout sits between
/// consecutive hidden layers, and the output layer is affine with an optional
/// sigmoid squash.
class Mlp {
 public:
  Mlp() = default;
  /// Registers zero-filled weights under `prefix` in `params`.
  Mlp(ParameterSet& params, std::string_view prefix, MlpSpec spec);

  const MlpSpec& spec() const noexcept { return spec_; }
  std::size_t layer_count() const noexcept { return weights_.size(); }
  std::size_t weight_index(std::size_t layer) const { return weights_.at(layer); }
  std::size_t bias_index(std::size_t layer) const { return biases_.at(layer); }

  ad::Var forward(ad::Tape& tape, const Binding& bind, ad::Var input, const ForwardContext& ctx) const;
  void initialize(ParameterSet& params, Rng& rng, const InitOptions& opts = {}) const;

 private:
  MlpSpec spec_;
  std::vector<std::size_t> weights_;
  std::vector<std::size_t> biases_;
};

/// Evaluate an MLP on a plain tensor.
Tensor mlp_forward(const Mlp& mlp, const ParameterSet& params, const Tensor& input,
                   const ForwardContext& ctx = {});

/// Scaled dot-product pooling with one learned query:
///   score_i = q . (Wk t_i) / sqrt(d_k),  w = softmax(score),  ctx = sum_i w_i (Wv t_i)
class AttentionPool {
 public:
  struct Graph {
    ad::Var context;
    ad::Var weights;
  };

  AttentionPool() = default;
  AttentionPool(ParameterSet& params, std::string_view prefix, std::size_t token_dim, std::size_t key_dim,
                std::size_t value_dim);

  std::size_t token_dim() const noexcept { return token_dim_; }
  std::size_t key_dim() const noexcept { return key_dim_; }
  std::size_t value_dim() const noexcept { return value_dim_; }
  std::size_t query_index() const noexcept { return query_; }
  std::size_t key_index() const noexcept { return key_; }
  std::size_t value_index() const noexcept { return value_; }

  Graph forward(ad::Tape& tape, const Binding& bind, std::span<const ad::Var> tokens) const;
  void initialize(ParameterSet& params, Rng& rng, const InitOptions& opts = {}) const;

 private:
  std::size_t token_dim_ = 0;
  std::size_t key_dim_ = 0;
  std::size_t value_dim_ = 0;
  std::size_t query_ = 0;
  std::size_t key_ = 0;
  std::size_t value_ = 0;
};

struct PoolResult {
  Tensor context;
  std::vector<double> weights;
};

PoolResult attention_pool(const AttentionPool& pool, const ParameterSet& params, std::span<const Tensor> tokens);

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> scores);

/// Set every tensor in the set to zero.
void zero_parameters(ParameterSet& params);

}  // namespace seqbelief
