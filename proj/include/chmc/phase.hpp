#pragma once

#include <cstddef>
#include <random>

#include "chmc/potential.hpp"

namespace chmc {

using Rng = std::mt19937_64;

/// Position/momentum pair. The checked constructor rejects mismatched sizes,
/// d = 0 and non-finite entries; integrators mutate states in place through
/// the non-const accessors.
class PhaseState {
 public:
  PhaseState() = default;
  PhaseState(Vector q, Vector p);

  std::size_t dimension() const { return static_cast<std::size_t>(q_.size()); }
  const Vector& q() const { return q_; }
  const Vector& p() const { return p_; }
  Vector& q() { return q_; }
  Vector& p() { return p_; }

  bool is_finite() const;

 private:
  Vector q_;
  Vector p_;
};

/// R(q, p) = (q, -p).
PhaseState negate_momentum(const PhaseState& state);

/// Constant symmetric positive-definite mass matrix, factored once.
class MassMatrix {
 public:
  enum class Kind { identity, diagonal, dense };

  static MassMatrix identity(std::size_t d);
  static MassMatrix diagonal(Vector entries);
  static MassMatrix dense(const Matrix& m);

  Kind kind() const { return kind_; }
  std::size_t dimension() const { return dim_; }
  bool is_diagonal() const { return kind_ != Kind::dense; }

  /// Dense copy of M.
  Matrix matrix() const;
  /// Diagonal of M^{-1}; for the dense kind this is the diagonal of the explicit inverse.
  const Vector& inverse_diagonal() const { return inv_diag_; }
  /// Explicit M^{-1} (dense kind precomputes it; others build it on demand).
  Matrix inverse_matrix() const;

  Vector apply(const Vector& v) const;
  /// M^{-1} v through the triangular factor.
  Vector inverse_apply(const Vector& v) const;
  void inverse_apply(const Vector& v, Vector& out) const;

  /// 1/2 p^T M^{-1} p through the triangular factor.
  double kinetic(const Vector& p) const;
  /// Same quantity through the explicit inverse. Only useful as a cross-check.
  double kinetic_via_inverse(const Vector& p) const;

  /// out = base + a M^{-1} (x + y)
  void offset_sum(const Vector& base, double a, const Vector& x, const Vector& y,
                  Vector& out) const;
  /// y += a M^{-1} x
  void add_scaled_inverse(double a, const Vector& x, Vector& y) const;

  /// Draws L xi with L L^T = M.
  void sample(Rng& rng, Vector& out) const;

 private:
  MassMatrix() = default;

  Kind kind_ = Kind::identity;
  std::size_t dim_ = 0;
  Vector diag_;      // diagonal kind: M entries
  Vector sqrt_diag_; // diagonal kind: sqrt(M)
  Vector inv_diag_;
  Matrix lower_;     // dense kind: Cholesky factor
  Matrix inverse_;   // dense kind
  Eigen::LLT<Matrix> llt_;
};

struct HamiltonianValue {
  double potential = 0.0;
  double kinetic = 0.0;
  double total = 0.0;
};

/// Throws std::invalid_argument on a dimension mismatch and std::domain_error
/// when U(q) is not finite.
HamiltonianValue hamiltonian(const PhaseState& state, const Potential& potential,
                             const MassMatrix& mass);

/// Sampling-path variant: non-finite U is reported as +infinity.
double total_energy(const Vector& q, const Vector& p, const Potential& potential,
                    const MassMatrix& mass);

Vector sample_momentum(const MassMatrix& mass, Rng& rng);

}  // namespace chmc
