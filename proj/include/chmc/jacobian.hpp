#pragma once

#include <cstddef>
#include <memory>
#include <string_view>

#include "chmc/integrators.hpp"
#include "chmc/phase.hpp"
#include "chmc/potential.hpp"

namespace chmc {

enum class JacobianOrder { j0, j1, full };
enum class DerivativeSource { analytic, finite_difference };

std::string_view to_string(JacobianOrder order);
JacobianOrder parse_jacobian_order(std::string_view text);

/// Which truncation of the one-step determinant enters the acceptance ratio.
/// J0 = 1 is the gradient-free variant; J1 keeps the first-order trace term;
/// full is the exact det-ratio.
struct JacobianMode {
  JacobianOrder order = JacobianOrder::j0;
  DerivativeSource source = DerivativeSource::analytic;
  /// Relative forward-difference step; the default is sqrt(machine epsilon).
  double h_fd = 1.4901161193847656e-08;

  void validate() const;
};

struct ForceJacobians {
  bool diagonal_only = false;
  Matrix d_q;        // dF/dq (empty when diagonal_only)
  Matrix d_big_q;    // dF/dQ
  Vector diag_q;     // diagonal of dF/dq (always filled)
  Vector diag_big_q;
  int extra_force_evaluations = 0;
};

/// dF/dq and dF/dQ at (Q, q), either from the target or by forward
/// differences of the force used by the DMM step (`force_cfg` picks closed
/// form or generic). Throws std::logic_error when the analytic source is
/// requested on a target without Jacobians.
ForceJacobians force_jacobians(const Vector& big_q, const Vector& q, const Potential& potential,
                               DerivativeSource source, double h_fd, bool diagonal_only,
                               const DmmSolverConfig& force_cfg = {});

struct StepJacobian {
  double value = 1.0;
  JacobianMode mode;
  int extra_force_evaluations = 0;
};

/// Signed determinant in log-magnitude form.
struct LogDet {
  double log_abs = 0.0;
  int sign = 1;  // 0 for a singular matrix
};

/// Pivoted LU log-determinant.
LogDet log_determinant(const Matrix& a);

/// One-step determinant factor at the converged pair (Q, q).
StepJacobian step_jacobian(const Vector& big_q, const Vector& q, double tau,
                           const MassMatrix& mass, const JacobianMode& mode,
                           const Potential& potential, const DmmSolverConfig& force_cfg = {});

/// Running product of per-step factors kept as log-magnitude plus sign.
class JacobianProduct {
 public:
  void multiply(double factor);
  /// 0 if any factor was 0, otherwise the signed product.
  double value() const;
  double log_abs() const { return log_abs_; }
  int sign() const { return sign_; }
  bool is_zero() const { return sign_ == 0; }

 private:
  double log_abs_ = 0.0;
  int sign_ = 1;
};

/// Product of a sequence of step factors.
template <typename Range>
double trajectory_jacobian(const Range& factors) {
  JacobianProduct prod;
  for (const StepJacobian& f : factors) prod.multiply(f.value);
  return prod.value();
}

/// Stateful evaluator for the sampler: owns its scratch matrices and logs the
/// dense-mass J1 cost warning once.
class JacobianEvaluator {
 public:
  JacobianEvaluator(const Potential& potential, const MassMatrix& mass, JacobianMode mode,
                    double tau, DmmSolverConfig force_cfg);

  StepJacobian evaluate(const Vector& big_q, const Vector& q);

 private:
  const Potential& potential_;
  const MassMatrix& mass_;
  JacobianMode mode_;
  double tau_;
  MassMatrix unit_mass_;
  std::unique_ptr<DmmIntegrator> fd_integrator_;
  Matrix a_, b_;
};

}  // namespace chmc
