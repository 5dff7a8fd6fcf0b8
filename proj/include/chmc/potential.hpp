#pragma once

#include <cstddef>
#include <span>

#include <Eigen/Dense>

namespace chmc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Target distribution expressed through its potential U(q) = -log pi(q), up to
/// an additive constant.
///
/// Only value() is mandatory. A potential that also provides a gradient can be
/// used with leapfrog; one that provides a closed-form divided-difference
/// force skips the generic hat-vector sweep in the DMM integrator; one that
/// provides force Jacobians can feed the analytic J1/JFull determinant modes.
/// Implementations must be immutable after construction so a single instance
/// can be shared by concurrent chains.
class Potential {
 public:
  virtual ~Potential() = default;

  virtual std::size_t dimension() const = 0;
  virtual double value(std::span<const double> q) const = 0;

  virtual bool has_gradient() const { return false; }
  virtual void gradient(std::span<const double> q, std::span<double> out) const;

  /// F_i(Q, q) of the symmetrised DMM scheme in closed form.
  virtual bool has_closed_form_force() const { return false; }
  virtual void closed_form_force(std::span<const double> big_q, std::span<const double> q,
                                 std::span<double> out) const;

  /// Analytic dF/dq and dF/dQ. The diagonal variant must be available whenever
  /// the dense one is.
  virtual bool has_force_jacobian() const { return false; }
  virtual void force_jacobian_diag(std::span<const double> big_q, std::span<const double> q,
                                   std::span<double> d_q, std::span<double> d_big_q) const;
  virtual void force_jacobian(std::span<const double> big_q, std::span<const double> q,
                              Matrix& d_q, Matrix& d_big_q) const;
};

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
inline std::span<double> as_span(Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace chmc
