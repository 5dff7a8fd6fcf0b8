#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string_view>

#include "chmc/phase.hpp"
#include "chmc/potential.hpp"

namespace chmc {

enum class InitMode { position_euler, gradient_euler, random_perturb };
enum class ForceSource { automatic, generic };

std::string_view to_string(InitMode mode);
InitMode parse_init_mode(std::string_view text);

/// sequential: Q(j+1) from P(j), then P(j+1) from F(Q(j+1), q).
/// simultaneous: both halves from iterate j (slower, roughly half the rate).
enum class FpiScheme { sequential, simultaneous };
std::string_view to_string(FpiScheme scheme);
FpiScheme parse_fpi_scheme(std::string_view text);

/// Settings of the implicit symmetrised DMM step.
struct DmmSolverConfig {
  double tau = 0.1;
  /// Absolute per-step energy tolerance of the fixed-point solve.
  double delta = 1e-8;
  int max_fpi = 10;
  /// Relative separation below which a divided difference switches to the
  /// midpoint central-difference limit. The threshold for component i is
  /// dd_guard * max(1, |q_i|).
  double dd_guard = 1e-8;
  InitMode init_mode = InitMode::position_euler;
  FpiScheme scheme = FpiScheme::sequential;
  /// automatic uses the target's closed-form force when it has one.
  ForceSource force_source = ForceSource::automatic;
  /// Seed of the perturbation stream used by InitMode::random_perturb.
  std::uint64_t perturb_seed = 0x9e3779b97f4a7c15ULL;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Per-step counters. force_evaluations counts whole F vectors (or whole
/// gradients for leapfrog); potential_evaluations counts scalar U calls made
/// by the generic hat-vector sweeps.
struct StepStats {
  int fpi_iterations = 0;
  double energy_error = 0.0;
  int force_evaluations = 0;
  std::size_t potential_evaluations = 0;
  bool converged = true;
  bool failed = false;
};

struct StepRecord {
  PhaseState state_out;
  int fpi_iterations = 0;
  double energy_error = 0.0;
  int force_evaluations = 0;
  bool converged = false;
  bool failed = false;
};

struct ForceResult {
  Vector force;
  std::size_t evaluations = 0;
};

/// Kick-drift-kick with two gradient evaluations. Throws std::logic_error
/// when the potential has no gradient.
PhaseState leapfrog_step(const PhaseState& state, const Potential& potential,
                         const MassMatrix& mass, double tau);

/// Generic divided-difference force from hat-vector sweeps of U. Components
/// with |Q_i - q_i| below the guard use the central-difference limit at the
/// midpoint, summed over the Q-hat and q-hat paths.
ForceResult divided_difference_force(const Vector& big_q, const Vector& q,
                                     const Potential& potential, double guard);

/// The force the integrator actually uses for this config: closed form when
/// available and allowed, generic otherwise.
ForceResult dmm_force(const Vector& big_q, const Vector& q, const Potential& potential,
                      const DmmSolverConfig& cfg);

/// Initial iterate (Q0, P0) of the fixed-point solve.
PhaseState dmm_fixed_point_init(const PhaseState& state, const DmmSolverConfig& cfg,
                                const MassMatrix& mass, const Potential& potential);

/// One step of the symmetrised DMM scheme solved by fixed-point iteration.
/// The last iterate is returned whether or not it met the tolerance.
StepRecord dmm_step(const PhaseState& state, const Potential& potential, const MassMatrix& mass,
                    const DmmSolverConfig& cfg);
/// Same, starting the iteration from a caller-supplied (Q0, P0).
StepRecord dmm_step(const PhaseState& state, const Potential& potential, const MassMatrix& mass,
                    const DmmSolverConfig& cfg, const PhaseState& warm_start);

/// Reusable DMM stepper holding its own scratch vectors. Not thread-safe; use
/// one per chain.
class DmmIntegrator {
 public:
  DmmIntegrator(const Potential& potential, const MassMatrix& mass, DmmSolverConfig cfg);

  const DmmSolverConfig& config() const { return cfg_; }

  /// Advances `in` into `out`. `energy_in` may carry a known H(in); pass NaN
  /// to have it recomputed.
  StepStats step(const PhaseState& in, PhaseState& out, double energy_in,
                 const PhaseState* warm_start = nullptr);

  /// Energy of the state most recently written by step().
  double last_energy() const { return last_energy_; }

  /// F(Q, q) into out; returns scalar U evaluations spent.
  std::size_t force(const Vector& big_q, const Vector& q, Vector& out);

  /// Initial iterate (Q0, P0); returns scalar U evaluations spent.
  std::size_t initial_guess(const PhaseState& in, Vector& big_q, Vector& big_p);

 private:
  std::size_t generic_force(const Vector& big_q, const Vector& q, Vector& out);

  const Potential& potential_;
  const MassMatrix& mass_;
  DmmSolverConfig cfg_;
  bool closed_form_;
  Rng perturb_rng_;
  Vector q_next_, p_next_, force_, scratch_a_, scratch_b_;
  double last_energy_ = 0.0;
};

struct TrajectoryStats {
  int steps = 0;
  int force_evaluations = 0;
  int fpi_iterations = 0;
  std::size_t potential_evaluations = 0;
  /// Sum over steps of the per-step |Delta H|.
  double step_energy_error_sum = 0.0;
  double max_step_energy_error = 0.0;
  /// H(end) - H(start).
  double energy_change = 0.0;
  bool all_converged = true;
  bool failed = false;
};

/// Called after every step with the pre-step and post-step positions.
using StepHook = std::function<void(const Vector& q_in, const Vector& q_out, const StepStats&)>;

/// N DMM steps. Stops early and flags failure if a step produces a
/// non-finite iterate.
PhaseState trajectory(const PhaseState& state, const Potential& potential, const MassMatrix& mass,
                      const DmmSolverConfig& cfg, int n_steps, const StepHook& hook,
                      TrajectoryStats* stats = nullptr);

/// N leapfrog steps; force_evaluations is exactly 2 N.
PhaseState leapfrog_trajectory(const PhaseState& state, const Potential& potential,
                               const MassMatrix& mass, double tau, int n_steps,
                               TrajectoryStats* stats = nullptr);

/// Leapfrog stepper with its own gradient scratch, for the sampler hot loop.
class LeapfrogIntegrator {
 public:
  LeapfrogIntegrator(const Potential& potential, const MassMatrix& mass, double tau);

  /// In-place step of (q, p).
  void step(Vector& q, Vector& p);

 private:
  const Potential& potential_;
  const MassMatrix& mass_;
  double tau_;
  Vector grad_;
};

}  // namespace chmc
