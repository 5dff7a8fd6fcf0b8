#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "chmc/potential.hpp"

namespace chmc {

/// Generalised Gaussian with scale 1 and shape 4: U(q) = sum_i q_i^4.
class QuarticGeneralizedGaussian final : public Potential {
 public:
  explicit QuarticGeneralizedGaussian(std::size_t dimension);

  std::size_t dimension() const override { return dim_; }
  double value(std::span<const double> q) const override;

  bool has_gradient() const override { return true; }
  void gradient(std::span<const double> q, std::span<double> out) const override;

  bool has_closed_form_force() const override { return true; }
  void closed_form_force(std::span<const double> big_q, std::span<const double> q,
                         std::span<double> out) const override;

  bool has_force_jacobian() const override { return true; }
  void force_jacobian_diag(std::span<const double> big_q, std::span<const double> q,
                           std::span<double> d_q, std::span<double> d_big_q) const override;
  void force_jacobian(std::span<const double> big_q, std::span<const double> q, Matrix& d_q,
                      Matrix& d_big_q) const override;

 private:
  std::size_t dim_;
};

/// U(q) = 1/2 (q - mu)^T Sigma^{-1} (q - mu). The DMM map is volume preserving
/// on this target, which makes it the reference case for the Jacobian code.
class MultivariateGaussian final : public Potential {
 public:
  MultivariateGaussian(Vector mean, const Matrix& covariance);

  std::size_t dimension() const override { return static_cast<std::size_t>(mean_.size()); }
  double value(std::span<const double> q) const override;

  bool has_gradient() const override { return true; }
  void gradient(std::span<const double> q, std::span<double> out) const override;

  bool has_closed_form_force() const override { return true; }
  void closed_form_force(std::span<const double> big_q, std::span<const double> q,
                         std::span<double> out) const override;

  bool has_force_jacobian() const override { return true; }
  void force_jacobian_diag(std::span<const double> big_q, std::span<const double> q,
                           std::span<double> d_q, std::span<double> d_big_q) const override;
  void force_jacobian(std::span<const double> big_q, std::span<const double> q, Matrix& d_q,
                      Matrix& d_big_q) const override;

  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return covariance_; }
  const Matrix& precision() const { return precision_; }

 private:
  Vector mean_;
  Matrix covariance_;
  Matrix precision_;
};

/// Black-box potential built from callables. Without a gradient it can only
/// be sampled by gradient-free CHMC.
class FunctionPotential final : public Potential {
 public:
  using ValueFn = std::function<double(std::span<const double>)>;
  using GradientFn = std::function<void(std::span<const double>, std::span<double>)>;

  FunctionPotential(std::size_t dimension, ValueFn value, GradientFn gradient = {});

  std::size_t dimension() const override { return dim_; }
  double value(std::span<const double> q) const override { return value_(q); }
  bool has_gradient() const override { return static_cast<bool>(gradient_); }
  void gradient(std::span<const double> q, std::span<double> out) const override;

 private:
  std::size_t dim_;
  ValueFn value_;
  GradientFn gradient_;
};

/// F_i = 2 (Q_i^2 + q_i^2)(Q_i + q_i), the divided-difference force of the
/// quartic potential without the removable singularity at Q_i = q_i.
Vector quartic_closed_form_force(const Vector& big_q, const Vector& q);

/// F = Sigma^{-1} (Q + q - 2 mu).
Vector gaussian_closed_form_force(const Vector& big_q, const Vector& q, const Vector& mean,
                                  const Matrix& covariance);

/// Per-component variance of the density proportional to exp(-q^4):
/// Gamma(3/4) / Gamma(1/4).
double quartic_target_variance();

}  // namespace chmc
