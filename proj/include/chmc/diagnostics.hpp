#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "chmc/potential.hpp"

namespace chmc {

enum class CovarianceMode { full, diagonal };

std::string_view to_string(CovarianceMode mode);

/// Above this dimension only the diagonal of the covariance is tracked.
inline constexpr std::size_t kFullCovarianceLimit = 2048;

/// Welford-style running mean and co-moment. Full mode keeps the whole d x d
/// scatter matrix, diagonal mode only its diagonal.
class StreamingCovariance {
 public:
  StreamingCovariance(std::size_t dimension, CovarianceMode mode);

  void update(std::span<const double> x);
  void update(const Vector& x) { update(as_span(x)); }
  /// Pairwise combination; afterwards *this describes the union of both streams.
  void merge(const StreamingCovariance& other);

  std::size_t count() const { return count_; }
  std::size_t dimension() const { return dim_; }
  CovarianceMode mode() const { return mode_; }
  const Vector& mean() const { return mean_; }

  /// Unbiased (n - 1) estimates. covariance() requires full mode.
  Matrix covariance() const;
  Vector variances() const;

 private:
  std::size_t dim_;
  CovarianceMode mode_;
  std::size_t count_ = 0;
  Vector mean_;
  Vector m2_;       // diagonal mode
  Matrix scatter_;  // full mode
  Vector delta_;
};

/// Covariance the chain should converge to.
struct TargetCovariance {
  /// Isotropic targets store only the shared variance.
  bool isotropic = true;
  double variance = 1.0;
  Matrix matrix;

  static TargetCovariance scaled_identity(double variance);
  static TargetCovariance dense(Matrix m);
  double entry(std::size_t i, std::size_t j) const;
};

/// Max absolute entrywise deviation of the sample covariance from the target
/// (diagonal entries only in diagonal mode). Throws std::invalid_argument when
/// fewer than two samples were seen.
double covariance_error(const StreamingCovariance& stream, const TargetCovariance& target);

/// The per-iteration quantities the summary is reduced from.
struct OutcomeRecord {
  bool accepted = false;
  double alpha = 0.0;
  double delta_h = 0.0;
  long force_evaluations = 0;
};

struct ChainSummary {
  std::size_t iterations = 0;
  std::size_t accepted = 0;
  int n_steps = 0;
  double mean_acceptance = 0.0;  // percent
  double mean_alpha = 0.0;
  double mean_energy_error = 0.0;
  double mean_force_evals = 0.0;  // per integrator step
  long total_force_evaluations = 0;
  double wall_time_seconds = 0.0;
  /// (iteration, l-infinity covariance error) pairs.
  std::vector<std::pair<std::size_t, double>> covariance_error_trace;
  double final_covariance_error = 0.0;
  std::size_t retained = 0;
  std::size_t lower_bound_violations = 0;
  std::size_t failed_iterations = 0;
};

/// Incremental form of finalize_summary used inside chains.
class SummaryAccumulator {
 public:
  explicit SummaryAccumulator(int n_steps);

  void add(const OutcomeRecord& outcome);
  ChainSummary finalize(double wall_time_seconds) const;

 private:
  int n_steps_;
  std::size_t count_ = 0;
  std::size_t accepted_ = 0;
  double alpha_sum_ = 0.0;
  double abs_dh_sum_ = 0.0;
  long force_evals_ = 0;
};

/// Acceptance percent, mean |Delta H| over all proposals and force
/// evaluations per step. Throws std::invalid_argument on an empty sequence.
ChainSummary finalize_summary(std::span<const OutcomeRecord> outcomes, int n_steps,
                              double wall_time_seconds);

/// Least-squares slope of log(y) against log(x).
double log_log_slope(std::span<const double> x, std::span<const double> y);

}  // namespace chmc
