#include "seqbelief/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "seqbelief/error.hpp"

namespace seqbelief {

GradCheckResult finite_diff_check_detailed(const LossFn& loss, ParameterSet params, double step) {
  if (!(step > 0.0)) throw InvalidInput("finite-difference step must be positive");

  GradientSet analytic = GradientSet::zeros_like(params);
  const double base = loss(params, &analytic);
  if (!std::isfinite(base)) throw NumericError("loss is not finite at the base point");

  GradCheckResult result;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double orig = p[j];
      p[j] = orig + step;
      const double up = loss(params, nullptr);
      p[j] = orig - step;
      const double down = loss(params, nullptr);
      p[j] = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("non-finite loss while probing parameter '" + params.name(i) + "'[" +
                           std::to_string(j) + "]");
      }
      const double numeric = (up - down) / (2.0 * step);
      const double err = std::abs(analytic[i][j] - numeric) / std::max(1.0, std::abs(numeric));
      if (result.worst_parameter.empty() || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = params.name(i);
        result.worst_offset = j;
      }
    }
  }
  return result;
}

}  // namespace seqbelief
