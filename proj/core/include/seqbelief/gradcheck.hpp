#pragma once

#include <functional>
#include <string>

#include "seqbelief/autodiff.hpp"

namespace seqbelief {

/// Loss callback for gradient checking. Returns the loss at `params`; when
/// `grads` is non-null it must also accumulate the analytic gradient into it.
using LossFn = std::function<double(const ParameterSet& params, GradientSet* grads)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_offset = 0;
};

/// Compare analytic gradients against central differences on every
/// coordinate. The error per coordinate is |analytic - numeric| / max(1, |numeric|).
GradCheckResult finite_diff_check_detailed(const LossFn& loss, ParameterSet params, double step);

inline double finite_diff_check(const LossFn& loss, ParameterSet params, double step) {
  return finite_diff_check_detailed(loss, std::move(params), step).max_relative_error;
}

}  // namespace seqbelief
