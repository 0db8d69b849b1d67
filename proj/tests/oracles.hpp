#pragma once

// Test-only oracles, independent of the library's autodiff path.

#include <functional>
#include <vector>

#include "collafuse/types.hpp"

namespace collafuse::testing {

// Central finite differences of a scalar function of several flat arrays.
// `f` must be a pure function; it is re-evaluated 2N times.
inline std::vector<ArrayX> finite_diff_grad(
    const std::function<Scalar(const std::vector<ArrayX>&)>& f, std::vector<ArrayX> leaves,
    Scalar h = 1e-4) {
  std::vector<ArrayX> grads;
  grads.reserve(leaves.size());
  for (size_t li = 0; li < leaves.size(); ++li) {
    ArrayX g(leaves[li].size());
    for (Index i = 0; i < leaves[li].size(); ++i) {
      const Scalar keep = leaves[li][i];
      leaves[li][i] = keep + h;
      const Scalar up = f(leaves);
      leaves[li][i] = keep - h;
      const Scalar down = f(leaves);
      leaves[li][i] = keep;
      g[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// |a - b| / max(1, |b|): relative error with an absolute floor so that
// near-zero reference gradients do not blow up the ratio.
inline Scalar rel_err(Scalar a, Scalar b) {
  const Scalar denom = std::max<Scalar>(1.0, std::abs(b));
  return std::abs(a - b) / denom;
}

inline Scalar max_rel_err(const ArrayX& a, const ArrayX& b) {
  Scalar worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i]));
  return worst;
}

struct Moments {
  Scalar mean = 0.0;
  Scalar var = 0.0;   // unbiased
  Index n = 0;
  Scalar se_mean() const { return std::sqrt(var / static_cast<Scalar>(n)); }
  Scalar se_var() const { return var * std::sqrt(2.0 / static_cast<Scalar>(n - 1)); }
};

inline Moments moments(const ArrayX& samples) {
  Moments m;
  m.n = samples.size();
  m.mean = samples.mean();
  m.var = (samples - m.mean).square().sum() / static_cast<Scalar>(m.n - 1);
  return m;
}

}  // namespace collafuse::testing
