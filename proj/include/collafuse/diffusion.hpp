#pragma once

#include <span>
#include <vector>

#include "collafuse/tensor.hpp"

namespace collafuse {

// Variance schedule over T timesteps. Public timestep arguments are 1-based;
// alpha_bar(0) == 1 is the noise-free convention.
class Schedule {
 public:
  static Schedule linear(int T, Scalar beta_start, Scalar beta_end);

  int T() const { return T_; }
  Scalar beta(int t) const { return beta_[check(t) - 1]; }
  Scalar alpha(int t) const { return alpha_[check(t) - 1]; }
  Scalar alpha_bar(int t) const;  // t in [0, T]

  const ArrayX& beta_array() const { return beta_; }
  const ArrayX& alpha_bar_array() const { return alpha_bar_; }

 private:
  int check(int t) const;
  int T_ = 0;
  ArrayX beta_, alpha_, alpha_bar_;  // index 0 holds t = 1
};

struct CutPoint {
  int t_zeta = 0;
};

// Throws CutOutOfRange unless 0 <= t_zeta <= T.
CutPoint make_cut(int t_zeta, int T);

// Stretched client-side timestep table for split inference: the client walks
// chain positions t_zeta..1 but reads schedule coefficients at at(t), which
// ranges over 1..M.
struct RemapTable {
  int M = 0;
  std::vector<int> client_steps;  // length t_zeta

  int at(int t) const { return client_steps[static_cast<size_t>(t) - 1]; }
};

// M = floor(t_zeta + (t_zeta/T)*(T - t_zeta)); client_steps is the integer
// rounding (ties up) of t_zeta points linearly spaced over [1, M].
RemapTable compute_remap(int T, int t_zeta);

// closed-form q(x_t | x_0): sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps, const Schedule& s);
// per-row timesteps for batched training draws
Tensor forward_diffuse_rows(const Tensor& x0, std::span<const int> t, const Tensor& eps,
                            const Schedule& s);

// Re-noise a sample already at level t_zeta up to t_s > t_zeta. The default
// uses the conditional coefficients sqrt(abar_ts/abar_tz), which keeps the
// marginal of the forward process intact; literal_renoise applies the
// unconditional coefficients sqrt(abar_ts) / sqrt(1-abar_ts) instead.
Tensor conditional_diffuse(const Tensor& x_tz, int t_zeta, int t_s, const Tensor& eps_s,
                           const Schedule& s, bool literal_renoise = false);
Tensor conditional_diffuse_rows(const Tensor& x_tz, int t_zeta, std::span<const int> t_s,
                                const Tensor& eps_s, const Schedule& s,
                                bool literal_renoise = false);

// One ancestral sampling step: posterior mean plus sqrt(beta_t) z for t > 1.
// z may be null at t = 1 and is ignored there.
Tensor reverse_step(const Tensor& x_t, int t, const Tensor& eps_hat, const Tensor* z,
                    const Schedule& s);

// Exact E[eps | x_t] when x0 ~ N(mu, var I); verification oracle for the
// reverse chain.
Tensor gaussian_oracle_eps(const Tensor& x_t, int t, const Tensor& mu, Scalar var,
                           const Schedule& s);

}  // namespace collafuse
