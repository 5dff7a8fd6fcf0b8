#include "chmc/targets.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "chmc/simd/kernels.hpp"

namespace chmc {

void Potential::gradient(std::span<const double>, std::span<double>) const {
  throw std::logic_error("potential does not provide a gradient");
}

void Potential::closed_form_force(std::span<const double>, std::span<const double>,
                                  std::span<double>) const {
  throw std::logic_error("potential does not provide a closed-form force");
}

void Potential::force_jacobian_diag(std::span<const double>, std::span<const double>,
                                    std::span<double>, std::span<double>) const {
  throw std::logic_error("potential does not provide analytic force Jacobians");
}

void Potential::force_jacobian(std::span<const double>, std::span<const double>, Matrix&,
                               Matrix&) const {
  throw std::logic_error("potential does not provide analytic force Jacobians");
}

namespace {

Eigen::Map<const Vector> view(std::span<const double> s) {
  return {s.data(), static_cast<Eigen::Index>(s.size())};
}
Eigen::Map<Vector> view(std::span<double> s) {
  return {s.data(), static_cast<Eigen::Index>(s.size())};
}

}  // namespace

QuarticGeneralizedGaussian::QuarticGeneralizedGaussian(std::size_t dimension) : dim_(dimension) {
  if (dimension == 0) throw std::invalid_argument("quartic target: dimension must be at least 1");
}

double QuarticGeneralizedGaussian::value(std::span<const double> q) const {
  return simd::sum_pow4(q);
}

void QuarticGeneralizedGaussian::gradient(std::span<const double> q,
                                          std::span<double> out) const {
  simd::active().quartic_gradient(q.data(), out.data(), q.size());
}

void QuarticGeneralizedGaussian::closed_form_force(std::span<const double> big_q,
                                                   std::span<const double> q,
                                                   std::span<double> out) const {
  simd::active().quartic_force(big_q.data(), q.data(), out.data(), q.size());
}

void QuarticGeneralizedGaussian::force_jacobian_diag(std::span<const double> big_q,
                                                     std::span<const double> q,
                                                     std::span<double> d_q,
                                                     std::span<double> d_big_q) const {
  simd::active().quartic_force_jacobian_diag(big_q.data(), q.data(), d_q.data(), d_big_q.data(),
                                             q.size());
}

void QuarticGeneralizedGaussian::force_jacobian(std::span<const double> big_q,
                                                std::span<const double> q, Matrix& d_q,
                                                Matrix& d_big_q) const {
  const auto n = static_cast<Eigen::Index>(dim_);
  Vector dq(n), dbq(n);
  force_jacobian_diag(big_q, q, as_span(dq), as_span(dbq));
  d_q = dq.asDiagonal();
  d_big_q = dbq.asDiagonal();
}

MultivariateGaussian::MultivariateGaussian(Vector mean, const Matrix& covariance)
    : mean_(std::move(mean)), covariance_(covariance) {
  if (mean_.size() == 0) throw std::invalid_argument("gaussian target: empty mean");
  if (covariance.rows() != mean_.size() || covariance.cols() != mean_.size()) {
    throw std::invalid_argument("gaussian target: covariance must be " +
                                std::to_string(mean_.size()) + "x" +
                                std::to_string(mean_.size()));
  }
  if (!covariance.isApprox(covariance.transpose(), 1e-12)) {
    throw std::invalid_argument("gaussian target: covariance is not symmetric");
  }
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("gaussian target: covariance is not positive definite");
  }
  precision_ = llt.solve(Matrix::Identity(mean_.size(), mean_.size()));
  precision_ = 0.5 * (precision_ + precision_.transpose()).eval();
}

double MultivariateGaussian::value(std::span<const double> q) const {
  const Vector r = view(q) - mean_;
  return 0.5 * r.dot(precision_ * r);
}

void MultivariateGaussian::gradient(std::span<const double> q, std::span<double> out) const {
  view(out) = precision_ * (view(q) - mean_);
}

void MultivariateGaussian::closed_form_force(std::span<const double> big_q,
                                             std::span<const double> q,
                                             std::span<double> out) const {
  view(out) = precision_ * (view(big_q) + view(q) - 2.0 * mean_);
}

void MultivariateGaussian::force_jacobian_diag(std::span<const double>, std::span<const double>,
                                               std::span<double> d_q,
                                               std::span<double> d_big_q) const {
  view(d_q) = precision_.diagonal();
  view(d_big_q) = precision_.diagonal();
}

void MultivariateGaussian::force_jacobian(std::span<const double>, std::span<const double>,
                                          Matrix& d_q, Matrix& d_big_q) const {
  d_q = precision_;
  d_big_q = precision_;
}

FunctionPotential::FunctionPotential(std::size_t dimension, ValueFn value, GradientFn gradient)
    : dim_(dimension), value_(std::move(value)), gradient_(std::move(gradient)) {
  if (dimension == 0) throw std::invalid_argument("function potential: dimension must be at least 1");
  if (!value_) throw std::invalid_argument("function potential: value callable is empty");
}

void FunctionPotential::gradient(std::span<const double> q, std::span<double> out) const {
  if (!gradient_) Potential::gradient(q, out);
  gradient_(q, out);
}

Vector quartic_closed_form_force(const Vector& big_q, const Vector& q) {
  if (big_q.size() != q.size()) throw std::invalid_argument("quartic force: length mismatch");
  Vector out(q.size());
  simd::active().quartic_force(big_q.data(), q.data(), out.data(),
                               static_cast<std::size_t>(q.size()));
  return out;
}

Vector gaussian_closed_form_force(const Vector& big_q, const Vector& q, const Vector& mean,
                                  const Matrix& covariance) {
  if (big_q.size() != q.size() || mean.size() != q.size() || covariance.rows() != q.size()) {
    throw std::invalid_argument("gaussian force: dimension mismatch");
  }
  return covariance.llt().solve(big_q + q - 2.0 * mean);
}

double quartic_target_variance() { return std::tgamma(0.75) / std::tgamma(0.25); }

}  // namespace chmc
