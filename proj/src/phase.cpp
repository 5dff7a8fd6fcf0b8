#include "chmc/phase.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "chmc/simd/kernels.hpp"

namespace chmc {

PhaseState::PhaseState(Vector q, Vector p) : q_(std::move(q)), p_(std::move(p)) {
  if (q_.size() == 0) throw std::invalid_argument("PhaseState: dimension must be at least 1");
  if (q_.size() != p_.size()) {
    throw std::invalid_argument("PhaseState: position has length " + std::to_string(q_.size()) +
                                " but momentum has length " + std::to_string(p_.size()));
  }
  if (!is_finite()) throw std::invalid_argument("PhaseState: non-finite component");
}

bool PhaseState::is_finite() const { return q_.allFinite() && p_.allFinite(); }

PhaseState negate_momentum(const PhaseState& state) {
  PhaseState out = state;
  out.p() = -state.p();
  return out;
}

MassMatrix MassMatrix::identity(std::size_t d) {
  if (d == 0) throw std::invalid_argument("MassMatrix: dimension must be at least 1");
  MassMatrix m;
  m.kind_ = Kind::identity;
  m.dim_ = d;
  m.inv_diag_ = Vector::Ones(static_cast<Eigen::Index>(d));
  return m;
}

MassMatrix MassMatrix::diagonal(Vector entries) {
  if (entries.size() == 0) throw std::invalid_argument("MassMatrix: dimension must be at least 1");
  for (Eigen::Index i = 0; i < entries.size(); ++i) {
    if (!(entries[i] > 0.0) || !std::isfinite(entries[i])) {
      throw std::invalid_argument("MassMatrix: diagonal entry " + std::to_string(i) +
                                  " is not strictly positive");
    }
  }
  MassMatrix m;
  m.kind_ = Kind::diagonal;
  m.dim_ = static_cast<std::size_t>(entries.size());
  m.sqrt_diag_ = entries.cwiseSqrt();
  m.inv_diag_ = entries.cwiseInverse();
  m.diag_ = std::move(entries);
  return m;
}

MassMatrix MassMatrix::dense(const Matrix& mat) {
  if (mat.rows() == 0 || mat.rows() != mat.cols()) {
    throw std::invalid_argument("MassMatrix: dense mass must be square and non-empty");
  }
  if (!mat.allFinite() || !mat.isApprox(mat.transpose(), 1e-12)) {
    throw std::invalid_argument("MassMatrix: dense mass must be finite and symmetric");
  }
  MassMatrix m;
  m.kind_ = Kind::dense;
  m.dim_ = static_cast<std::size_t>(mat.rows());
  m.llt_.compute(mat);
  if (m.llt_.info() != Eigen::Success) {
    throw std::invalid_argument("MassMatrix: dense mass is not positive definite");
  }
  m.lower_ = m.llt_.matrixL();
  m.inverse_ = m.llt_.solve(Matrix::Identity(mat.rows(), mat.cols()));
  m.inv_diag_ = m.inverse_.diagonal();
  m.diag_ = mat.diagonal();
  return m;
}

Matrix MassMatrix::matrix() const {
  switch (kind_) {
    case Kind::identity:
      return Matrix::Identity(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(dim_));
    case Kind::diagonal:
      return diag_.asDiagonal();
    case Kind::dense:
      return lower_ * lower_.transpose();
  }
  return {};
}

Matrix MassMatrix::inverse_matrix() const {
  if (kind_ == Kind::dense) return inverse_;
  return inv_diag_.asDiagonal();
}

Vector MassMatrix::apply(const Vector& v) const {
  switch (kind_) {
    case Kind::identity:
      return v;
    case Kind::diagonal:
      return diag_.cwiseProduct(v);
    case Kind::dense:
      return lower_ * (lower_.transpose() * v);
  }
  return v;
}

Vector MassMatrix::inverse_apply(const Vector& v) const {
  Vector out(v.size());
  inverse_apply(v, out);
  return out;
}

void MassMatrix::inverse_apply(const Vector& v, Vector& out) const {
  switch (kind_) {
    case Kind::identity:
      out = v;
      return;
    case Kind::diagonal:
      out = inv_diag_.cwiseProduct(v);
      return;
    case Kind::dense:
      out = llt_.solve(v);
      return;
  }
}

double MassMatrix::kinetic(const Vector& p) const {
  switch (kind_) {
    case Kind::identity:
      return 0.5 * simd::dot(as_span(p), as_span(p));
    case Kind::diagonal:
      return 0.5 * simd::weighted_sum_sq(as_span(inv_diag_), as_span(p));
    case Kind::dense: {
      const Vector y = lower_.triangularView<Eigen::Lower>().solve(p);
      return 0.5 * y.squaredNorm();
    }
  }
  return 0.0;
}

double MassMatrix::kinetic_via_inverse(const Vector& p) const {
  return 0.5 * p.dot(inverse_matrix() * p);
}

void MassMatrix::offset_sum(const Vector& base, double a, const Vector& x, const Vector& y,
                            Vector& out) const {
  const auto& k = simd::active();
  const auto n = static_cast<std::size_t>(base.size());
  out.resize(base.size());
  switch (kind_) {
    case Kind::identity:
      k.offset_sum(base.data(), a, x.data(), y.data(), out.data(), n);
      return;
    case Kind::diagonal:
      k.offset_sum_weighted(base.data(), a, inv_diag_.data(), x.data(), y.data(), out.data(), n);
      return;
    case Kind::dense:
      out = base + a * llt_.solve(x + y);
      return;
  }
}

void MassMatrix::add_scaled_inverse(double a, const Vector& x, Vector& y) const {
  const auto& k = simd::active();
  const auto n = static_cast<std::size_t>(x.size());
  switch (kind_) {
    case Kind::identity:
      k.axpy(a, x.data(), y.data(), n);
      return;
    case Kind::diagonal:
      k.axpy_weighted(a, inv_diag_.data(), x.data(), y.data(), n);
      return;
    case Kind::dense:
      y += a * llt_.solve(x);
      return;
  }
}

void MassMatrix::sample(Rng& rng, Vector& out) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  out.resize(static_cast<Eigen::Index>(dim_));
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = normal(rng);
  switch (kind_) {
    case Kind::identity:
      return;
    case Kind::diagonal:
      out = sqrt_diag_.cwiseProduct(out);
      return;
    case Kind::dense:
      out = lower_ * out;
      return;
  }
}

HamiltonianValue hamiltonian(const PhaseState& state, const Potential& potential,
                             const MassMatrix& mass) {
  if (state.dimension() != potential.dimension() || state.dimension() != mass.dimension()) {
    throw std::invalid_argument("hamiltonian: dimension mismatch (state " +
                                std::to_string(state.dimension()) + ", potential " +
                                std::to_string(potential.dimension()) + ", mass " +
                                std::to_string(mass.dimension()) + ")");
  }
  HamiltonianValue h;
  h.potential = potential.value(as_span(state.q()));
  if (!std::isfinite(h.potential)) throw std::domain_error("hamiltonian: U(q) is not finite");
  h.kinetic = mass.kinetic(state.p());
  h.total = h.potential + h.kinetic;
  return h;
}

double total_energy(const Vector& q, const Vector& p, const Potential& potential,
                    const MassMatrix& mass) {
  const double u = potential.value(as_span(q));
  const double h = u + mass.kinetic(p);
  return std::isfinite(h) ? h : std::numeric_limits<double>::infinity();
}

Vector sample_momentum(const MassMatrix& mass, Rng& rng) {
  Vector p;
  mass.sample(rng, p);
  return p;
}

}  // namespace chmc
