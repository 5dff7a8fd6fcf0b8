#include "chmc/integrators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "chmc/simd/kernels.hpp"

namespace chmc {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double guard_width(double guard, double q_i) { return guard * std::max(1.0, std::abs(q_i)); }

}  // namespace

std::string_view to_string(InitMode mode) {
  switch (mode) {
    case InitMode::position_euler:
      return "position-euler";
    case InitMode::gradient_euler:
      return "gradient-euler";
    case InitMode::random_perturb:
      return "random-perturb";
  }
  return "position-euler";
}

InitMode parse_init_mode(std::string_view text) {
  if (text == "position-euler") return InitMode::position_euler;
  if (text == "gradient-euler") return InitMode::gradient_euler;
  if (text == "random-perturb") return InitMode::random_perturb;
  throw std::invalid_argument("unknown init_mode '" + std::string(text) + "'");
}

std::string_view to_string(FpiScheme scheme) {
  return scheme == FpiScheme::sequential ? "sequential" : "simultaneous";
}

FpiScheme parse_fpi_scheme(std::string_view text) {
  if (text == "sequential") return FpiScheme::sequential;
  if (text == "simultaneous") return FpiScheme::simultaneous;
  throw std::invalid_argument("unknown fixed-point scheme '" + std::string(text) + "'");
}

void DmmSolverConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be positive");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("delta must be positive");
  if (max_fpi < 1) throw std::invalid_argument("max_fpi must be at least 1");
  if (!(dd_guard > 0.0) || !std::isfinite(dd_guard)) {
    throw std::invalid_argument("dd_guard must be positive");
  }
}

// ---------------------------------------------------------------------------
// Leapfrog

LeapfrogIntegrator::LeapfrogIntegrator(const Potential& potential, const MassMatrix& mass,
                                       double tau)
    : potential_(potential), mass_(mass), tau_(tau), grad_(potential.dimension()) {
  if (!potential.has_gradient()) {
    throw std::logic_error("leapfrog requires a potential with a gradient");
  }
}

void LeapfrogIntegrator::step(Vector& q, Vector& p) {
  potential_.gradient(as_span(q), as_span(grad_));
  simd::axpy(-0.5 * tau_, as_span(grad_), as_span(p));
  mass_.add_scaled_inverse(tau_, p, q);
  potential_.gradient(as_span(q), as_span(grad_));
  simd::axpy(-0.5 * tau_, as_span(grad_), as_span(p));
}

PhaseState leapfrog_step(const PhaseState& state, const Potential& potential,
                         const MassMatrix& mass, double tau) {
  LeapfrogIntegrator lf(potential, mass, tau);
  PhaseState out = state;
  lf.step(out.q(), out.p());
  return out;
}

PhaseState leapfrog_trajectory(const PhaseState& state, const Potential& potential,
                               const MassMatrix& mass, double tau, int n_steps,
                               TrajectoryStats* stats) {
  if (n_steps < 1) throw std::invalid_argument("trajectory: n_steps must be at least 1");
  LeapfrogIntegrator lf(potential, mass, tau);
  PhaseState out = state;
  const double h0 = total_energy(state.q(), state.p(), potential, mass);
  for (int s = 0; s < n_steps; ++s) lf.step(out.q(), out.p());
  if (stats != nullptr) {
    *stats = TrajectoryStats{};
    stats->steps = n_steps;
    stats->force_evaluations = 2 * n_steps;
    stats->energy_change = total_energy(out.q(), out.p(), potential, mass) - h0;
    stats->failed = !out.is_finite() || !std::isfinite(stats->energy_change);
  }
  return out;
}

// ---------------------------------------------------------------------------
// DMM

DmmIntegrator::DmmIntegrator(const Potential& potential, const MassMatrix& mass,
                             DmmSolverConfig cfg)
    : potential_(potential),
      mass_(mass),
      cfg_(cfg),
      closed_form_(cfg.force_source == ForceSource::automatic && potential.has_closed_form_force()),
      perturb_rng_(cfg.perturb_seed) {
  if (potential.dimension() != mass.dimension()) {
    throw std::invalid_argument("DMM integrator: potential and mass dimensions differ");
  }
  if (cfg_.init_mode == InitMode::gradient_euler && !potential.has_gradient()) {
    throw std::logic_error("gradient-euler initialisation requires a gradient");
  }
  const auto d = static_cast<Eigen::Index>(potential.dimension());
  q_next_.resize(d);
  p_next_.resize(d);
  force_.resize(d);
  scratch_a_.resize(d);
  scratch_b_.resize(d);
}

std::size_t DmmIntegrator::force(const Vector& big_q, const Vector& q, Vector& out) {
  out.resize(q.size());
  if (closed_form_) {
    potential_.closed_form_force(as_span(big_q), as_span(q), as_span(out));
    return 0;
  }
  return generic_force(big_q, q, out);
}

// Both hat-vector sweeps reuse one scratch vector each: the Q-hat sweep walks
// from q to Q replacing one component at a time, the q-hat sweep walks back
// from Q to q. Consecutive U values telescope, so sum_i F_i (Q_i - q_i)
// reproduces 2 (U(Q) - U(q)) up to rounding.
std::size_t DmmIntegrator::generic_force(const Vector& big_q, const Vector& q, Vector& out) {
  const Eigen::Index d = q.size();
  Vector& x = scratch_a_;
  Vector& y = scratch_b_;
  std::size_t evals = 0;
  auto u = [&](const Vector& v) {
    ++evals;
    return potential_.value(as_span(v));
  };

  x = q;
  double u_prev = u(x);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double sep = big_q[i] - q[i];
    const double eps = guard_width(cfg_.dd_guard, q[i]);
    if (std::abs(sep) >= eps) {
      x[i] = big_q[i];
      const double cur = u(x);
      out[i] = cur - u_prev;
      u_prev = cur;
    } else {
      const double mid = 0.5 * (big_q[i] + q[i]);
      x[i] = mid + 0.5 * eps;
      const double up = u(x);
      x[i] = mid - 0.5 * eps;
      const double um = u(x);
      out[i] = (up - um) / eps;
      x[i] = big_q[i];
      u_prev = u(x);
    }
  }

  y = big_q;
  double v_prev = u_prev;  // U(Q): the Q-hat sweep ended at Q
  for (Eigen::Index i = 0; i < d; ++i) {
    const double sep = big_q[i] - q[i];
    const double eps = guard_width(cfg_.dd_guard, q[i]);
    if (std::abs(sep) >= eps) {
      y[i] = q[i];
      const double cur = u(y);
      out[i] = (out[i] + (v_prev - cur)) / sep;
      v_prev = cur;
    } else {
      const double mid = 0.5 * (big_q[i] + q[i]);
      y[i] = mid + 0.5 * eps;
      const double up = u(y);
      y[i] = mid - 0.5 * eps;
      const double um = u(y);
      out[i] += (up - um) / eps;
      y[i] = q[i];
      v_prev = u(y);
    }
    if (!std::isfinite(out[i])) out[i] = std::numeric_limits<double>::infinity();
  }
  return evals;
}

std::size_t DmmIntegrator::initial_guess(const PhaseState& in, Vector& big_q, Vector& big_p) {
  const Vector& q = in.q();
  const Vector& p = in.p();
  const Eigen::Index d = q.size();

  if (cfg_.init_mode == InitMode::random_perturb) {
    const double half_width = cfg_.tau * cfg_.dd_guard * 10.0;
    std::uniform_real_distribution<double> noise(-half_width, half_width);
    big_q = q;
    for (Eigen::Index i = 0; i < d; ++i) big_q[i] += noise(perturb_rng_);
  } else {
    big_q = q;
    mass_.add_scaled_inverse(cfg_.tau, p, big_q);
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    const double eps = guard_width(cfg_.dd_guard, q[i]);
    if (std::abs(big_q[i] - q[i]) < eps) big_q[i] = q[i] + (p[i] < 0.0 ? -eps : eps);
  }

  big_p = p;
  std::size_t evals = 0;
  if (cfg_.init_mode == InitMode::gradient_euler) {
    potential_.gradient(as_span(q), as_span(force_));
    simd::axpy(-cfg_.tau, as_span(force_), as_span(big_p));
  } else {
    evals = force(big_q, q, force_);
    simd::axpy(-0.5 * cfg_.tau, as_span(force_), as_span(big_p));
  }
  return evals;
}

StepStats DmmIntegrator::step(const PhaseState& in, PhaseState& out, double energy_in,
                              const PhaseState* warm_start) {
  StepStats st;
  const Vector& q = in.q();
  const Vector& p = in.p();
  const double h_in = std::isnan(energy_in) ? total_energy(q, p, potential_, mass_) : energy_in;

  if (cfg_.tau == 0.0) {
    out = in;
    last_energy_ = h_in;
    st.failed = !std::isfinite(h_in);
    st.converged = !st.failed;
    return st;
  }

  Vector& big_q = out.q();
  Vector& big_p = out.p();
  std::size_t u_evals = 0;
  if (warm_start != nullptr) {
    big_q = warm_start->q();
    big_p = warm_start->p();
  } else {
    u_evals += initial_guess(in, big_q, big_p);
    st.force_evaluations = 1;
  }

  double h = total_energy(big_q, big_p, potential_, mass_);
  ++u_evals;
  double err = std::abs(h - h_in);
  int j = 0;
  bool finite = std::isfinite(h) && big_q.allFinite() && big_p.allFinite();
  while (finite && !(err <= cfg_.delta) && j < cfg_.max_fpi) {
    mass_.offset_sum(q, 0.5 * cfg_.tau, big_p, p, q_next_);
    u_evals += force(cfg_.scheme == FpiScheme::sequential ? q_next_ : big_q, q, force_);
    ++st.force_evaluations;
    p_next_ = p;
    simd::axpy(-0.5 * cfg_.tau, as_span(force_), as_span(p_next_));
    big_q.swap(q_next_);
    big_p.swap(p_next_);
    ++j;
    h = total_energy(big_q, big_p, potential_, mass_);
    ++u_evals;
    err = std::abs(h - h_in);
    finite = std::isfinite(h) && big_q.allFinite() && big_p.allFinite();
  }

  st.fpi_iterations = j;
  st.energy_error = finite ? err : std::numeric_limits<double>::infinity();
  st.failed = !finite || !std::isfinite(h_in);
  st.converged = !st.failed && err <= cfg_.delta;
  st.potential_evaluations = u_evals;
  last_energy_ = finite ? h : std::numeric_limits<double>::infinity();
  return st;
}

ForceResult divided_difference_force(const Vector& big_q, const Vector& q,
                                     const Potential& potential, double guard) {
  if (big_q.size() != q.size() || static_cast<std::size_t>(q.size()) != potential.dimension()) {
    throw std::invalid_argument("divided_difference_force: dimension mismatch");
  }
  DmmSolverConfig cfg;
  cfg.dd_guard = guard;
  cfg.force_source = ForceSource::generic;
  const MassMatrix mass = MassMatrix::identity(potential.dimension());
  DmmIntegrator integ(potential, mass, cfg);
  ForceResult r;
  r.force.resize(q.size());
  r.evaluations = integ.force(big_q, q, r.force);
  return r;
}

ForceResult dmm_force(const Vector& big_q, const Vector& q, const Potential& potential,
                      const DmmSolverConfig& cfg) {
  const MassMatrix mass = MassMatrix::identity(potential.dimension());
  DmmSolverConfig c = cfg;
  c.init_mode = InitMode::position_euler;
  DmmIntegrator integ(potential, mass, c);
  ForceResult r;
  r.force.resize(q.size());
  r.evaluations = integ.force(big_q, q, r.force);
  return r;
}

PhaseState dmm_fixed_point_init(const PhaseState& state, const DmmSolverConfig& cfg,
                                const MassMatrix& mass, const Potential& potential) {
  DmmIntegrator integ(potential, mass, cfg);
  Vector big_q, big_p;
  integ.initial_guess(state, big_q, big_p);
  PhaseState out;
  out.q() = std::move(big_q);
  out.p() = std::move(big_p);
  return out;
}

namespace {

StepRecord to_record(PhaseState&& out, const StepStats& st) {
  StepRecord r;
  r.state_out = std::move(out);
  r.fpi_iterations = st.fpi_iterations;
  r.energy_error = st.energy_error;
  r.force_evaluations = st.force_evaluations;
  r.converged = st.converged;
  r.failed = st.failed;
  return r;
}

}  // namespace

StepRecord dmm_step(const PhaseState& state, const Potential& potential, const MassMatrix& mass,
                    const DmmSolverConfig& cfg) {
  DmmIntegrator integ(potential, mass, cfg);
  PhaseState out;
  const StepStats st = integ.step(state, out, kNaN);
  return to_record(std::move(out), st);
}

StepRecord dmm_step(const PhaseState& state, const Potential& potential, const MassMatrix& mass,
                    const DmmSolverConfig& cfg, const PhaseState& warm_start) {
  DmmIntegrator integ(potential, mass, cfg);
  PhaseState out;
  const StepStats st = integ.step(state, out, kNaN, &warm_start);
  return to_record(std::move(out), st);
}

PhaseState trajectory(const PhaseState& state, const Potential& potential, const MassMatrix& mass,
                      const DmmSolverConfig& cfg, int n_steps, const StepHook& hook,
                      TrajectoryStats* stats) {
  if (n_steps < 1) throw std::invalid_argument("trajectory: n_steps must be at least 1");
  DmmIntegrator integ(potential, mass, cfg);
  TrajectoryStats ts;
  PhaseState cur = state;
  PhaseState next;
  const double h0 = total_energy(state.q(), state.p(), potential, mass);
  double h = h0;
  for (int s = 0; s < n_steps; ++s) {
    const StepStats st = integ.step(cur, next, h);
    h = integ.last_energy();
    ++ts.steps;
    ts.force_evaluations += st.force_evaluations;
    ts.fpi_iterations += st.fpi_iterations;
    ts.potential_evaluations += st.potential_evaluations;
    ts.step_energy_error_sum += st.energy_error;
    ts.max_step_energy_error = std::max(ts.max_step_energy_error, st.energy_error);
    ts.all_converged = ts.all_converged && st.converged;
    if (hook) hook(cur.q(), next.q(), st);
    std::swap(cur, next);
    if (st.failed) {
      ts.failed = true;
      break;
    }
  }
  ts.energy_change = h - h0;
  if (stats != nullptr) *stats = ts;
  return cur;
}

}  // namespace chmc
