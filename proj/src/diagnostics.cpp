#include "chmc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "chmc/simd/kernels.hpp"

namespace chmc {

std::string_view to_string(CovarianceMode mode) {
  return mode == CovarianceMode::full ? "full" : "diagonal";
}

StreamingCovariance::StreamingCovariance(std::size_t dimension, CovarianceMode mode)
    : dim_(dimension), mode_(mode) {
  if (dimension == 0) throw std::invalid_argument("StreamingCovariance: dimension must be positive");
  const auto d = static_cast<Eigen::Index>(dimension);
  mean_ = Vector::Zero(d);
  delta_.resize(d);
  if (mode_ == CovarianceMode::full) {
    scatter_ = Matrix::Zero(d, d);
  } else {
    m2_ = Vector::Zero(d);
  }
}

void StreamingCovariance::update(std::span<const double> x) {
  if (x.size() != dim_) throw std::invalid_argument("StreamingCovariance: dimension mismatch");
  ++count_;
  const double n = static_cast<double>(count_);
  if (mode_ == CovarianceMode::diagonal) {
    simd::active().welford_diag(x.data(), mean_.data(), m2_.data(), n, dim_);
    return;
  }
  const Eigen::Map<const Vector> xv(x.data(), static_cast<Eigen::Index>(dim_));
  delta_ = xv - mean_;
  mean_ += delta_ / n;
  // scatter += (x - mean_old)(x - mean_new)^T, kept symmetric by updating the
  // lower triangle and mirroring on read.
  const Vector after = xv - mean_;
  scatter_.selfadjointView<Eigen::Lower>().rankUpdate(delta_, after, 0.5);
}

void StreamingCovariance::merge(const StreamingCovariance& other) {
  if (other.dim_ != dim_ || other.mode_ != mode_) {
    throw std::invalid_argument("StreamingCovariance: cannot merge streams of different shape");
  }
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count_);
  const double nb = static_cast<double>(other.count_);
  const double n = na + nb;
  const Vector d = other.mean_ - mean_;
  if (mode_ == CovarianceMode::diagonal) {
    m2_ += other.m2_ + d.cwiseProduct(d) * (na * nb / n);
  } else {
    scatter_.triangularView<Eigen::Lower>() += other.scatter_;
    scatter_.selfadjointView<Eigen::Lower>().rankUpdate(d, na * nb / n);
  }
  mean_ += d * (nb / n);
  count_ += other.count_;
}

Matrix StreamingCovariance::covariance() const {
  if (mode_ != CovarianceMode::full) {
    throw std::logic_error("StreamingCovariance: full covariance not tracked in diagonal mode");
  }
  if (count_ < 2) throw std::invalid_argument("StreamingCovariance: need at least two samples");
  Matrix c = scatter_.selfadjointView<Eigen::Lower>();
  return c / static_cast<double>(count_ - 1);
}

Vector StreamingCovariance::variances() const {
  if (count_ < 2) throw std::invalid_argument("StreamingCovariance: need at least two samples");
  const double denom = static_cast<double>(count_ - 1);
  if (mode_ == CovarianceMode::diagonal) return m2_ / denom;
  return scatter_.diagonal() / denom;
}

TargetCovariance TargetCovariance::scaled_identity(double variance) {
  TargetCovariance t;
  t.isotropic = true;
  t.variance = variance;
  return t;
}

TargetCovariance TargetCovariance::dense(Matrix m) {
  TargetCovariance t;
  t.isotropic = false;
  t.matrix = std::move(m);
  return t;
}

double TargetCovariance::entry(std::size_t i, std::size_t j) const {
  if (isotropic) return i == j ? variance : 0.0;
  return matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
}

double covariance_error(const StreamingCovariance& stream, const TargetCovariance& target) {
  if (stream.count() < 2) {
    throw std::invalid_argument("covariance_error: need at least two samples, have " +
                                std::to_string(stream.count()));
  }
  const std::size_t d = stream.dimension();
  if (!target.isotropic && static_cast<std::size_t>(target.matrix.rows()) != d) {
    throw std::invalid_argument("covariance_error: target covariance has the wrong size");
  }
  double worst = 0.0;
  if (stream.mode() == CovarianceMode::diagonal) {
    const Vector v = stream.variances();
    for (std::size_t i = 0; i < d; ++i) {
      worst = std::max(worst, std::abs(v[static_cast<Eigen::Index>(i)] - target.entry(i, i)));
    }
    return worst;
  }
  const Matrix c = stream.covariance();
  if (target.isotropic) {
    Matrix diff = c;
    diff.diagonal().array() -= target.variance;
    return diff.cwiseAbs().maxCoeff();
  }
  return (c - target.matrix).cwiseAbs().maxCoeff();
}

SummaryAccumulator::SummaryAccumulator(int n_steps) : n_steps_(n_steps) {
  if (n_steps < 1) throw std::invalid_argument("SummaryAccumulator: n_steps must be positive");
}

void SummaryAccumulator::add(const OutcomeRecord& outcome) {
  ++count_;
  if (outcome.accepted) ++accepted_;
  alpha_sum_ += outcome.alpha;
  abs_dh_sum_ += std::abs(outcome.delta_h);
  force_evals_ += outcome.force_evaluations;
}

ChainSummary SummaryAccumulator::finalize(double wall_time_seconds) const {
  if (count_ == 0) throw std::invalid_argument("finalize_summary: no iterations recorded");
  ChainSummary s;
  const double n = static_cast<double>(count_);
  s.iterations = count_;
  s.accepted = accepted_;
  s.n_steps = n_steps_;
  s.mean_acceptance = 100.0 * static_cast<double>(accepted_) / n;
  s.mean_alpha = alpha_sum_ / n;
  s.mean_energy_error = abs_dh_sum_ / n;
  s.total_force_evaluations = force_evals_;
  s.mean_force_evals = static_cast<double>(force_evals_) / (n * n_steps_);
  s.wall_time_seconds = wall_time_seconds;
  return s;
}

ChainSummary finalize_summary(std::span<const OutcomeRecord> outcomes, int n_steps,
                              double wall_time_seconds) {
  SummaryAccumulator acc(n_steps);
  for (const auto& o : outcomes) acc.add(o);
  return acc.finalize(wall_time_seconds);
}

double log_log_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("log_log_slope: need two or more paired points");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace chmc
