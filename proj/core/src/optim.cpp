#include "seqbelief/optim.hpp"

#include <cmath>

#include "seqbelief/error.hpp"

namespace seqbelief {

AdamState AdamState::for_params(const ParameterSet& params, double learning_rate, double beta1, double beta2,
                                double epsilon) {
  if (!(learning_rate > 0 && beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1 && epsilon > 0)) {
    throw InvalidInput("Adam hyperparameters out of range");
  }
  AdamState s;
  s.first_moment = GradientSet::zeros_like(params);
  s.second_moment = GradientSet::zeros_like(params);
  s.learning_rate = learning_rate;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  return s;
}

void adam_step(AdamState& state, ParameterSet& params, const GradientSet& grads) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.first_moment.size() != n || state.second_moment.size() != n) {
    throw InvalidInput("adam_step: parameter, gradient and moment sets differ in length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!grads[i].same_shape(params[i]) || !state.first_moment[i].same_shape(params[i]) ||
        !state.second_moment[i].same_shape(params[i])) {
      throw InvalidInput("adam_step: shape mismatch for parameter '" + params.name(i) + "'");
    }
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    auto p = params[i].data();
    auto g = grads[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

}  // namespace seqbelief
