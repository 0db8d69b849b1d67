#include "collafuse/diffusion.hpp"

#include <cmath>

namespace collafuse {

Schedule Schedule::linear(int T, Scalar beta_start, Scalar beta_end) {
  if (T < 1) throw BadRange("schedule needs T >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw BadRange("schedule needs 0 < beta_start <= beta_end < 1");
  Schedule s;
  s.T_ = T;
  s.beta_.resize(T);
  s.alpha_.resize(T);
  s.alpha_bar_.resize(T);
  Scalar abar = 1.0;
  for (int t = 0; t < T; ++t) {
    const Scalar frac = T == 1 ? 0.0 : static_cast<Scalar>(t) / static_cast<Scalar>(T - 1);
    s.beta_[t] = beta_start + frac * (beta_end - beta_start);
    s.alpha_[t] = 1.0 - s.beta_[t];
    abar *= s.alpha_[t];
    s.alpha_bar_[t] = abar;
  }
  return s;
}

int Schedule::check(int t) const {
  if (t < 1 || t > T_)
    throw TimestepOutOfRange("t = " + std::to_string(t) + " outside [1," + std::to_string(T_) + "]");
  return t;
}

Scalar Schedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  return alpha_bar_[check(t) - 1];
}

CutPoint make_cut(int t_zeta, int T) {
  if (t_zeta < 0 || t_zeta > T)
    throw CutOutOfRange("cut " + std::to_string(t_zeta) + " outside [0," + std::to_string(T) + "]");
  return CutPoint{t_zeta};
}

RemapTable compute_remap(int T, int t_zeta) {
  if (T < 1) throw BadRange("compute_remap needs T >= 1");
  if (t_zeta < 0 || t_zeta > T)
    throw CutOutOfRange("cut " + std::to_string(t_zeta) + " outside [0," + std::to_string(T) + "]");
  RemapTable r;
  const Scalar tz = static_cast<Scalar>(t_zeta);
  r.M = static_cast<int>(std::floor(tz + tz / static_cast<Scalar>(T) * (static_cast<Scalar>(T) - tz)));
  r.client_steps.resize(static_cast<size_t>(t_zeta));
  if (t_zeta == 1) {
    r.client_steps[0] = r.M;  // single point; M == 1 for every valid (T, 1)
  } else if (t_zeta >= 2) {
    const Scalar step = static_cast<Scalar>(r.M - 1) / static_cast<Scalar>(t_zeta - 1);
    for (int i = 0; i < t_zeta; ++i)
      r.client_steps[static_cast<size_t>(i)] =
          static_cast<int>(std::floor(1.0 + step * static_cast<Scalar>(i) + 0.5));
  }
  return r;
}

namespace {

void check_shapes(const Tensor& a, const Tensor& b, const char* what) {
  if (!same_shape(a.shape(), b.shape()))
    throw ShapeMismatch(std::string(what) + ": operand shapes differ");
}

// number of leading-dimension rows and elements per row
std::pair<Index, Index> row_layout(const Tensor& x) {
  if (x.ndim() < 1) throw ShapeMismatch("batched op needs at least one dimension");
  const Index rows = x.shape()[0];
  return {rows, rows == 0 ? 0 : x.size() / rows};
}

}  // namespace

Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps, const Schedule& s) {
  check_shapes(x0, eps, "forward_diffuse");
  if (t < 1 || t > s.T()) throw TimestepOutOfRange("forward_diffuse: t = " + std::to_string(t));
  const Scalar ab = s.alpha_bar(t);
  return Tensor(x0.shape(), std::sqrt(ab) * x0.data() + std::sqrt(1.0 - ab) * eps.data());
}

Tensor forward_diffuse_rows(const Tensor& x0, std::span<const int> t, const Tensor& eps,
                            const Schedule& s) {
  check_shapes(x0, eps, "forward_diffuse_rows");
  auto [rows, per_row] = row_layout(x0);
  if (static_cast<Index>(t.size()) != rows)
    throw ShapeMismatch("forward_diffuse_rows: one timestep per row required");
  ArrayX out(x0.size());
  for (Index r = 0; r < rows; ++r) {
    if (t[static_cast<size_t>(r)] < 1 || t[static_cast<size_t>(r)] > s.T())
      throw TimestepOutOfRange("forward_diffuse_rows: t = " + std::to_string(t[static_cast<size_t>(r)]));
    const Scalar ab = s.alpha_bar(t[static_cast<size_t>(r)]);
    out.segment(r * per_row, per_row) = std::sqrt(ab) * x0.data().segment(r * per_row, per_row) +
                                        std::sqrt(1.0 - ab) * eps.data().segment(r * per_row, per_row);
  }
  return Tensor(x0.shape(), std::move(out));
}

namespace {

std::pair<Scalar, Scalar> renoise_coeffs(int t_zeta, int t_s, const Schedule& s,
                                         bool literal_renoise) {
  if (t_zeta < 0) throw CutOutOfRange("conditional_diffuse: negative cut");
  if (t_s <= t_zeta)
    throw TimestepOrder("conditional_diffuse: t_s = " + std::to_string(t_s) +
                        " must exceed t_zeta = " + std::to_string(t_zeta));
  if (t_s > s.T()) throw TimestepOutOfRange("conditional_diffuse: t_s = " + std::to_string(t_s));
  if (literal_renoise) {
    const Scalar ab = s.alpha_bar(t_s);
    return {std::sqrt(ab), std::sqrt(1.0 - ab)};
  }
  const Scalar ratio = s.alpha_bar(t_s) / s.alpha_bar(t_zeta);
  return {std::sqrt(ratio), std::sqrt(1.0 - ratio)};
}

}  // namespace

Tensor conditional_diffuse(const Tensor& x_tz, int t_zeta, int t_s, const Tensor& eps_s,
                           const Schedule& s, bool literal_renoise) {
  check_shapes(x_tz, eps_s, "conditional_diffuse");
  auto [cx, ce] = renoise_coeffs(t_zeta, t_s, s, literal_renoise);
  return Tensor(x_tz.shape(), cx * x_tz.data() + ce * eps_s.data());
}

Tensor conditional_diffuse_rows(const Tensor& x_tz, int t_zeta, std::span<const int> t_s,
                                const Tensor& eps_s, const Schedule& s, bool literal_renoise) {
  check_shapes(x_tz, eps_s, "conditional_diffuse_rows");
  auto [rows, per_row] = row_layout(x_tz);
  if (static_cast<Index>(t_s.size()) != rows)
    throw ShapeMismatch("conditional_diffuse_rows: one timestep per row required");
  ArrayX out(x_tz.size());
  for (Index r = 0; r < rows; ++r) {
    auto [cx, ce] = renoise_coeffs(t_zeta, t_s[static_cast<size_t>(r)], s, literal_renoise);
    out.segment(r * per_row, per_row) = cx * x_tz.data().segment(r * per_row, per_row) +
                                        ce * eps_s.data().segment(r * per_row, per_row);
  }
  return Tensor(x_tz.shape(), std::move(out));
}

Tensor reverse_step(const Tensor& x_t, int t, const Tensor& eps_hat, const Tensor* z,
                    const Schedule& s) {
  check_shapes(x_t, eps_hat, "reverse_step");
  if (t < 1 || t > s.T()) throw TimestepOutOfRange("reverse_step: t = " + std::to_string(t));
  const Scalar at = s.alpha(t);
  const Scalar ab = s.alpha_bar(t);
  ArrayX mean = (x_t.data() - (1.0 - at) / std::sqrt(1.0 - ab) * eps_hat.data()) / std::sqrt(at);
  if (t > 1) {
    if (z == nullptr) throw Error("reverse_step: noise tensor required for t > 1");
    check_shapes(x_t, *z, "reverse_step noise");
    mean += std::sqrt(s.beta(t)) * z->data();
  }
  return Tensor(x_t.shape(), std::move(mean));
}

Tensor gaussian_oracle_eps(const Tensor& x_t, int t, const Tensor& mu, Scalar var,
                           const Schedule& s) {
  check_shapes(x_t, mu, "gaussian_oracle_eps");
  if (t < 1 || t > s.T())
    throw TimestepOutOfRange("gaussian_oracle_eps: t = " + std::to_string(t));
  const Scalar ab = s.alpha_bar(t);
  const Scalar denom = ab * var + 1.0 - ab;
  return Tensor(x_t.shape(),
                std::sqrt(1.0 - ab) * (x_t.data() - std::sqrt(ab) * mu.data()) / denom);
}

}  // namespace collafuse
