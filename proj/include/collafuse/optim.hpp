#pragma once

#include <span>
#include <vector>

#include "collafuse/tensor.hpp"

namespace collafuse {

// Adam with bias correction. Moment buffers are lazily sized to the parameter
// list on the first step and must stay congruent afterwards.
struct AdamState {
  Scalar learning_rate = 1e-3;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar epsilon = 1e-8;
  int64_t step_count = 0;
  std::vector<ArrayX> m;
  std::vector<ArrayX> v;
};

// Applies one update in place and clears the gradients.
// Throws MissingGrad unless every parameter has a populated gradient.
void optimizer_step(std::span<Tensor* const> params, AdamState& state);

}  // namespace collafuse
