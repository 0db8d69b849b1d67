#include "collafuse/optim.hpp"

#include <cmath>

namespace collafuse {

void optimizer_step(std::span<Tensor* const> params, AdamState& state) {
  const size_t n = params.size();
  if (state.m.empty()) {
    state.m.resize(n);
    state.v.resize(n);
    for (size_t i = 0; i < n; ++i) {
      state.m[i] = ArrayX::Zero(params[i]->size());
      state.v[i] = ArrayX::Zero(params[i]->size());
    }
  }
  if (state.m.size() != n) throw MissingGrad("optimizer state does not match parameter list");

  for (size_t i = 0; i < n; ++i) {
    if (!params[i]->grad()) throw MissingGrad("parameter " + std::to_string(i) + " has no gradient");
    if (state.m[i].size() != params[i]->size())
      throw MissingGrad("moment buffer " + std::to_string(i) + " is not shape-congruent");
  }

  state.step_count += 1;
  const Scalar c1 = 1.0 - std::pow(state.beta1, static_cast<Scalar>(state.step_count));
  const Scalar c2 = 1.0 - std::pow(state.beta2, static_cast<Scalar>(state.step_count));

  for (size_t i = 0; i < n; ++i) {
    const ArrayX& g = *params[i]->grad();
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g.square();
    ArrayX mhat = state.m[i] / c1;
    ArrayX vhat = state.v[i] / c2;
    params[i]->data() -= state.learning_rate * mhat / (vhat.sqrt() + state.epsilon);
    params[i]->clear_grad();
  }
}

}  // namespace collafuse
