#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string_view>

#include "chmc/diagnostics.hpp"
#include "chmc/integrators.hpp"
#include "chmc/jacobian.hpp"
#include "chmc/phase.hpp"
#include "chmc/potential.hpp"

namespace chmc {

enum class Method { hmc_leapfrog, chmc };
enum class InitialStateMode { zeros, standard_normal, explicit_vector };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);
std::string_view to_string(InitialStateMode mode);
InitialStateMode parse_initial_state_mode(std::string_view text);

/// N = round(T / tau). Throws std::invalid_argument if T / tau is more than
/// 1e-9 away from a positive integer.
int steps_for(double total_time, double tau);

struct SamplerConfig {
  Method method = Method::chmc;
  JacobianMode jacobian;
  double tau = 0.1;
  double total_time = 4.0;
  /// Fixed-point settings; its tau is overwritten by the sampler's tau.
  DmmSolverConfig solver;
  std::size_t iterations = 10000;
  std::size_t burn_in = 0;
  std::uint64_t seed = 1;
  InitialStateMode initial_state = InitialStateMode::standard_normal;
  Vector initial_values;
  /// Covariance-error trace stride in iterations.
  std::size_t record_stride = 10;

  int n_steps() const { return steps_for(total_time, tau); }
  void validate() const;
};

struct IterationOutcome {
  bool accepted = false;
  double alpha = 0.0;
  double delta_h = 0.0;
  double jacobian_product = 1.0;
  long force_evaluations = 0;
  long fpi_iterations = 0;
  /// Every DMM step met the energy tolerance (always true for leapfrog).
  bool all_converged = true;
  bool failed = false;
  double uniform = 0.0;
};

/// min(1, exp(-delta_h) * jacobian) evaluated in log space. Non-positive
/// Jacobian products, NaN and +infinite energy changes give 0.
double acceptance_probability(double delta_h, double jacobian_product);

/// Lower bound min(1, exp(-N delta) J) that a fully converged CHMC proposal
/// must respect.
double acceptance_lower_bound(int n_steps, double delta, double jacobian_product);

/// splitmix64 finaliser.
std::uint64_t mix_seed(std::uint64_t x);
/// Independent stream for chain `index` of a run seeded with `seed`.
Rng chain_rng(std::uint64_t seed, std::size_t index);

/// One Markov chain: owns its RNG, integrator scratch and current position.
class Chain {
 public:
  Chain(const SamplerConfig& cfg, const Potential& target, const MassMatrix& mass,
        std::size_t chain_index);
  ~Chain();
  Chain(const Chain&) = delete;
  Chain& operator=(const Chain&) = delete;

  /// One proposal plus Metropolis test; updates position() on acceptance.
  IterationOutcome step();

  const Vector& position() const { return theta_; }
  void set_position(const Vector& theta);
  Rng& rng() { return rng_; }

 private:
  IterationOutcome chmc_step();
  IterationOutcome hmc_step();

  SamplerConfig cfg_;
  const Potential& target_;
  const MassMatrix& mass_;
  int n_steps_;
  Rng rng_;
  Vector theta_;
  PhaseState cur_, next_;
  std::unique_ptr<DmmIntegrator> dmm_;
  std::unique_ptr<JacobianEvaluator> jacobian_;
  std::unique_ptr<LeapfrogIntegrator> leapfrog_;
};

/// One CHMC iteration from `theta` (updated in place on acceptance).
IterationOutcome chmc_iteration(Vector& theta, const Potential& target, const MassMatrix& mass,
                                const SamplerConfig& cfg, Rng& rng);
/// One HMC-leapfrog iteration from `theta`.
IterationOutcome hmc_iteration(Vector& theta, const Potential& target, const MassMatrix& mass,
                               const SamplerConfig& cfg, Rng& rng);

/// Receives every iteration of a chain. `retained` is false during burn-in.
/// cov_error is NaN on iterations where the trace was not sampled.
struct ChainEvent {
  std::size_t iteration = 0;  // 1-based
  const IterationOutcome* outcome = nullptr;
  const Vector* theta = nullptr;
  bool retained = false;
  double cov_error = 0.0;
};
using ChainSink = std::function<void(const ChainEvent&)>;

struct ChainOptions {
  std::size_t chain_index = 0;
  CovarianceMode covariance_mode = CovarianceMode::full;
  TargetCovariance target_covariance = TargetCovariance::scaled_identity(1.0);
  bool track_covariance = true;
};

struct ChainResult {
  ChainSummary summary;
  StreamingCovariance covariance;
};

/// Runs `cfg.iterations` proposals and reduces them into a summary. Same
/// (seed, config, target, chain index) gives bit-identical results.
ChainResult run_chain(const SamplerConfig& cfg, const Potential& target, const MassMatrix& mass,
                      const ChainOptions& options, const ChainSink& sink = {});

}  // namespace chmc
