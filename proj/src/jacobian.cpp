#include "chmc/jacobian.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

namespace chmc {

std::string_view to_string(JacobianOrder order) {
  switch (order) {
    case JacobianOrder::j0:
      return "J0";
    case JacobianOrder::j1:
      return "J1";
    case JacobianOrder::full:
      return "JFull";
  }
  return "J0";
}

JacobianOrder parse_jacobian_order(std::string_view text) {
  if (text == "J0" || text == "j0") return JacobianOrder::j0;
  if (text == "J1" || text == "j1") return JacobianOrder::j1;
  if (text == "JFull" || text == "jfull" || text == "Jinf" || text == "full") {
    return JacobianOrder::full;
  }
  throw std::invalid_argument("unknown jacobian mode '" + std::string(text) + "'");
}

void JacobianMode::validate() const {
  if (source == DerivativeSource::finite_difference && !(h_fd > 0.0)) {
    throw std::invalid_argument("h_fd must be positive for finite-difference Jacobians");
  }
}

namespace {

// Forward differences of the DMM force, one column per perturbed coordinate.
void finite_difference_jacobians(DmmIntegrator& integ, const Vector& big_q, const Vector& q,
                                 double h_fd, bool diagonal_only, ForceJacobians& out) {
  const Eigen::Index d = q.size();
  Vector base(d), bumped(d), x(d);
  integ.force(big_q, q, base);
  int evals = 1;

  out.diag_q.resize(d);
  out.diag_big_q.resize(d);
  if (!diagonal_only) {
    out.d_q.resize(d, d);
    out.d_big_q.resize(d, d);
  }

  for (int which = 0; which < 2; ++which) {
    const Vector& moving = which == 0 ? q : big_q;
    x = moving;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double h = h_fd * std::max(1.0, std::abs(moving[j]));
      x[j] = moving[j] + h;
      const double step = x[j] - moving[j];
      if (which == 0) {
        integ.force(big_q, x, bumped);
      } else {
        integ.force(x, q, bumped);
      }
      ++evals;
      x[j] = moving[j];
      if (diagonal_only) {
        (which == 0 ? out.diag_q : out.diag_big_q)[j] = (bumped[j] - base[j]) / step;
      } else {
        (which == 0 ? out.d_q : out.d_big_q).col(j) = (bumped - base) / step;
      }
    }
  }
  if (!diagonal_only) {
    out.diag_q = out.d_q.diagonal();
    out.diag_big_q = out.d_big_q.diagonal();
  }
  out.extra_force_evaluations = evals;
}

void analytic_jacobians(const Potential& potential, const Vector& big_q, const Vector& q,
                        bool diagonal_only, ForceJacobians& out) {
  if (!potential.has_force_jacobian()) {
    throw std::logic_error("analytic force Jacobians requested but the target does not provide them");
  }
  const Eigen::Index d = q.size();
  if (diagonal_only) {
    out.diag_q.resize(d);
    out.diag_big_q.resize(d);
    potential.force_jacobian_diag(as_span(big_q), as_span(q), as_span(out.diag_q),
                                  as_span(out.diag_big_q));
  } else {
    potential.force_jacobian(as_span(big_q), as_span(q), out.d_q, out.d_big_q);
    out.diag_q = out.d_q.diagonal();
    out.diag_big_q = out.d_big_q.diagonal();
  }
  out.extra_force_evaluations = 0;
}

std::atomic<bool> g_dense_j1_warned{false};

void warn_dense_j1_once() {
  if (!g_dense_j1_warned.exchange(true)) {
    std::cerr << "chmc: J1 with a dense mass matrix needs full force Jacobians; "
                 "cost per step is O(d^2) force components\n";
  }
}

double ratio_from_logdets(const LogDet& num, const LogDet& den) {
  if (den.sign == 0) return 0.0;
  if (num.sign == 0) return 0.0;
  return static_cast<double>(num.sign * den.sign) * std::exp(num.log_abs - den.log_abs);
}

}  // namespace

ForceJacobians force_jacobians(const Vector& big_q, const Vector& q, const Potential& potential,
                               DerivativeSource source, double h_fd, bool diagonal_only,
                               const DmmSolverConfig& force_cfg) {
  if (big_q.size() != q.size() || static_cast<std::size_t>(q.size()) != potential.dimension()) {
    throw std::invalid_argument("force_jacobians: dimension mismatch");
  }
  ForceJacobians out;
  out.diagonal_only = diagonal_only;
  if (source == DerivativeSource::analytic) {
    analytic_jacobians(potential, big_q, q, diagonal_only, out);
  } else {
    const MassMatrix unit = MassMatrix::identity(potential.dimension());
    DmmSolverConfig cfg = force_cfg;
    cfg.init_mode = InitMode::position_euler;
    DmmIntegrator integ(potential, unit, cfg);
    finite_difference_jacobians(integ, big_q, q, h_fd, diagonal_only, out);
  }
  return out;
}

LogDet log_determinant(const Matrix& a) {
  LogDet r;
  if (a.rows() == 0) return r;
  const Eigen::PartialPivLU<Matrix> lu(a);
  const Matrix& packed = lu.matrixLU();
  int sign = lu.permutationP().determinant();
  double log_abs = 0.0;
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    const double u = packed(i, i);
    if (u == 0.0 || !std::isfinite(u)) {
      r.sign = 0;
      r.log_abs = -std::numeric_limits<double>::infinity();
      return r;
    }
    if (u < 0.0) sign = -sign;
    log_abs += std::log(std::abs(u));
  }
  r.sign = sign;
  r.log_abs = log_abs;
  return r;
}

JacobianEvaluator::JacobianEvaluator(const Potential& potential, const MassMatrix& mass,
                                     JacobianMode mode, double tau, DmmSolverConfig force_cfg)
    : potential_(potential),
      mass_(mass),
      mode_(mode),
      tau_(tau),
      unit_mass_(MassMatrix::identity(potential.dimension())) {
  mode_.validate();
  if (mode_.order != JacobianOrder::j0 && mode_.source == DerivativeSource::analytic &&
      !potential.has_force_jacobian()) {
    throw std::logic_error("analytic Jacobian mode requires a target with force Jacobians");
  }
  force_cfg.init_mode = InitMode::position_euler;
  if (mode_.order != JacobianOrder::j0 && mode_.source == DerivativeSource::finite_difference) {
    fd_integrator_ = std::make_unique<DmmIntegrator>(potential_, unit_mass_, force_cfg);
  }
}

StepJacobian JacobianEvaluator::evaluate(const Vector& big_q, const Vector& q) {
  StepJacobian out;
  out.mode = mode_;
  if (mode_.order == JacobianOrder::j0) {
    out.value = 1.0;
    return out;
  }

  const double c = 0.25 * tau_ * tau_;
  const bool diag = mode_.order == JacobianOrder::j1 && mass_.is_diagonal();
  if (mode_.order == JacobianOrder::j1 && !mass_.is_diagonal()) warn_dense_j1_once();

  ForceJacobians jac;
  jac.diagonal_only = diag;
  if (mode_.source == DerivativeSource::analytic) {
    analytic_jacobians(potential_, big_q, q, diag, jac);
  } else {
    finite_difference_jacobians(*fd_integrator_, big_q, q, mode_.h_fd, diag, jac);
  }
  out.extra_force_evaluations = jac.extra_force_evaluations;

  if (mode_.order == JacobianOrder::j1) {
    double trace = 0.0;
    if (diag) {
      const Vector& inv = mass_.inverse_diagonal();
      trace = inv.dot(jac.diag_q - jac.diag_big_q);
    } else {
      const Matrix minv = mass_.inverse_matrix();
      trace = (minv * (jac.d_q - jac.d_big_q)).trace();
    }
    out.value = 1.0 + c * trace;
    return out;
  }

  if (mass_.kind() == MassMatrix::Kind::dense) {
    const Matrix minv = mass_.inverse_matrix();
    a_.noalias() = c * (minv * jac.d_q);
    b_.noalias() = c * (minv * jac.d_big_q);
  } else {
    const Vector& inv = mass_.inverse_diagonal();
    a_ = c * (inv.asDiagonal() * jac.d_q);
    b_ = c * (inv.asDiagonal() * jac.d_big_q);
  }
  a_.diagonal().array() += 1.0;
  b_.diagonal().array() += 1.0;
  out.value = ratio_from_logdets(log_determinant(a_), log_determinant(b_));
  return out;
}

StepJacobian step_jacobian(const Vector& big_q, const Vector& q, double tau,
                           const MassMatrix& mass, const JacobianMode& mode,
                           const Potential& potential, const DmmSolverConfig& force_cfg) {
  if (big_q.size() != q.size() || static_cast<std::size_t>(q.size()) != mass.dimension()) {
    throw std::invalid_argument("step_jacobian: dimension mismatch");
  }
  JacobianEvaluator eval(potential, mass, mode, tau, force_cfg);
  return eval.evaluate(big_q, q);
}

void JacobianProduct::multiply(double factor) {
  if (sign_ == 0) return;
  if (factor == 0.0 || !std::isfinite(factor)) {
    sign_ = 0;
    return;
  }
  if (factor < 0.0) sign_ = -sign_;
  log_abs_ += std::log(std::abs(factor));
}

double JacobianProduct::value() const {
  if (sign_ == 0) return 0.0;
  return static_cast<double>(sign_) * std::exp(log_abs_);
}

}  // namespace chmc
