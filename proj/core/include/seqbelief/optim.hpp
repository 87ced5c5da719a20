#pragma once

#include <cstdint>

#include "seqbelief/autodiff.hpp"

namespace seqbelief {

struct AdamState {
  std::uint64_t step_count = 0;
  GradientSet first_moment;
  GradientSet second_moment;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const ParameterSet& params, double learning_rate, double beta1 = 0.9,
                              double beta2 = 0.999, double epsilon = 1e-8);
};

/// One bias-corrected Adam update, in place. Descends along `grads`.
void adam_step(AdamState& state, ParameterSet& params, const GradientSet& grads);

}  // namespace seqbelief
