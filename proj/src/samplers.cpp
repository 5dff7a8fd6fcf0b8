#include "chmc/samplers.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace chmc {

std::string_view to_string(Method method) {
  return method == Method::hmc_leapfrog ? "hmc-leapfrog" : "chmc";
}

Method parse_method(std::string_view text) {
  if (text == "hmc-leapfrog" || text == "hmc") return Method::hmc_leapfrog;
  if (text == "chmc") return Method::chmc;
  throw std::invalid_argument("unknown method '" + std::string(text) + "'");
}

std::string_view to_string(InitialStateMode mode) {
  switch (mode) {
    case InitialStateMode::zeros:
      return "zeros";
    case InitialStateMode::standard_normal:
      return "standard-normal";
    case InitialStateMode::explicit_vector:
      return "explicit";
  }
  return "standard-normal";
}

InitialStateMode parse_initial_state_mode(std::string_view text) {
  if (text == "zeros") return InitialStateMode::zeros;
  if (text == "standard-normal") return InitialStateMode::standard_normal;
  if (text == "explicit") return InitialStateMode::explicit_vector;
  throw std::invalid_argument("unknown initial_state '" + std::string(text) + "'");
}

int steps_for(double total_time, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be positive");
  if (!(total_time > 0.0) || !std::isfinite(total_time)) {
    throw std::invalid_argument("total_time must be positive");
  }
  const double ratio = total_time / tau;
  const double n = std::round(ratio);
  if (std::abs(ratio - n) > 1e-9 || n < 1.0) {
    throw std::invalid_argument("n_steps not integral: total_time / tau = " +
                                std::to_string(ratio));
  }
  return static_cast<int>(n);
}

void SamplerConfig::validate() const {
  (void)n_steps();
  if (iterations < burn_in) throw std::invalid_argument("burn_in must not exceed iterations");
  if (iterations == 0) throw std::invalid_argument("iterations must be positive");
  if (record_stride == 0) throw std::invalid_argument("record_stride must be positive");
  if (method == Method::chmc) {
    DmmSolverConfig s = solver;
    s.tau = tau;
    s.validate();
    jacobian.validate();
  }
}

double acceptance_probability(double delta_h, double jacobian_product) {
  if (std::isnan(delta_h) || delta_h == std::numeric_limits<double>::infinity()) return 0.0;
  if (!(jacobian_product > 0.0) || !std::isfinite(jacobian_product)) return 0.0;
  const double log_alpha = -delta_h + std::log(jacobian_product);
  return log_alpha >= 0.0 ? 1.0 : std::exp(log_alpha);
}

double acceptance_lower_bound(int n_steps, double delta, double jacobian_product) {
  if (!(jacobian_product > 0.0)) return 0.0;
  return std::min(1.0, std::exp(-static_cast<double>(n_steps) * delta) * jacobian_product);
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng chain_rng(std::uint64_t seed, std::size_t index) {
  return Rng(mix_seed(mix_seed(seed) ^ mix_seed(0xc2b2ae3d27d4eb4fULL + index)));
}

Chain::Chain(const SamplerConfig& cfg, const Potential& target, const MassMatrix& mass,
             std::size_t chain_index)
    : cfg_(cfg),
      target_(target),
      mass_(mass),
      n_steps_(cfg.n_steps()),
      rng_(chain_rng(cfg.seed, chain_index)) {
  cfg_.validate();
  const std::size_t d = target.dimension();
  if (mass.dimension() != d) throw std::invalid_argument("sampler: mass/target dimension mismatch");
  cfg_.solver.tau = cfg_.tau;
  cfg_.solver.perturb_seed = mix_seed(cfg.seed ^ (0x5851f42d4c957f2dULL * (chain_index + 1)));

  if (cfg_.method == Method::chmc) {
    dmm_ = std::make_unique<DmmIntegrator>(target, mass, cfg_.solver);
    jacobian_ = std::make_unique<JacobianEvaluator>(target, mass, cfg_.jacobian, cfg_.tau,
                                                    cfg_.solver);
  } else {
    leapfrog_ = std::make_unique<LeapfrogIntegrator>(target, mass, cfg_.tau);
  }

  const auto n = static_cast<Eigen::Index>(d);
  switch (cfg_.initial_state) {
    case InitialStateMode::zeros:
      theta_ = Vector::Zero(n);
      break;
    case InitialStateMode::standard_normal: {
      std::normal_distribution<double> normal(0.0, 1.0);
      theta_.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) theta_[i] = normal(rng_);
      break;
    }
    case InitialStateMode::explicit_vector:
      if (cfg_.initial_values.size() != n) {
        throw std::invalid_argument("explicit initial state has the wrong length");
      }
      theta_ = cfg_.initial_values;
      break;
  }
  cur_ = PhaseState(theta_, Vector::Zero(n));
  next_ = cur_;
}

Chain::~Chain() = default;

void Chain::set_position(const Vector& theta) {
  if (theta.size() != theta_.size()) throw std::invalid_argument("set_position: wrong length");
  theta_ = theta;
}

IterationOutcome Chain::step() {
  return cfg_.method == Method::chmc ? chmc_step() : hmc_step();
}

IterationOutcome Chain::chmc_step() {
  IterationOutcome out;
  cur_.q() = theta_;
  mass_.sample(rng_, cur_.p());
  const double h0 = total_energy(cur_.q(), cur_.p(), target_, mass_);

  JacobianProduct jac;
  double h = h0;
  bool failed = !std::isfinite(h0);
  for (int s = 0; s < n_steps_ && !failed; ++s) {
    const StepStats st = dmm_->step(cur_, next_, h);
    h = dmm_->last_energy();
    out.force_evaluations += st.force_evaluations;
    out.fpi_iterations += st.fpi_iterations;
    out.all_converged = out.all_converged && st.converged;
    if (st.failed) {
      failed = true;
      break;
    }
    if (cfg_.jacobian.order != JacobianOrder::j0) {
      const StepJacobian sj = jacobian_->evaluate(next_.q(), cur_.q());
      jac.multiply(sj.value);
      out.force_evaluations += sj.extra_force_evaluations;
    }
    std::swap(cur_, next_);
  }

  out.failed = failed;
  out.jacobian_product = jac.value();
  out.delta_h = failed ? std::numeric_limits<double>::infinity() : h - h0;
  out.alpha = failed ? 0.0 : acceptance_probability(out.delta_h, out.jacobian_product);
  out.uniform = std::generate_canonical<double, 64>(rng_);
  out.accepted = out.uniform < out.alpha;
  if (out.accepted) theta_ = cur_.q();
  return out;
}

IterationOutcome Chain::hmc_step() {
  IterationOutcome out;
  Vector& q = cur_.q();
  Vector& p = cur_.p();
  q = theta_;
  mass_.sample(rng_, p);
  const double h0 = total_energy(q, p, target_, mass_);
  for (int s = 0; s < n_steps_; ++s) leapfrog_->step(q, p);
  out.force_evaluations = 2L * n_steps_;
  const double h1 = total_energy(q, p, target_, mass_);
  out.failed = !std::isfinite(h0) || !std::isfinite(h1) || !q.allFinite();
  out.delta_h = out.failed ? std::numeric_limits<double>::infinity() : h1 - h0;
  out.alpha = out.failed ? 0.0 : acceptance_probability(out.delta_h, 1.0);
  out.uniform = std::generate_canonical<double, 64>(rng_);
  out.accepted = out.uniform < out.alpha;
  if (out.accepted) theta_ = q;
  return out;
}

namespace {

IterationOutcome single_iteration(Vector& theta, const Potential& target, const MassMatrix& mass,
                                  SamplerConfig cfg, Rng& rng) {
  cfg.initial_state = InitialStateMode::explicit_vector;
  cfg.initial_values = theta;
  Chain chain(cfg, target, mass, 0);
  std::swap(chain.rng(), rng);
  const IterationOutcome out = chain.step();
  std::swap(chain.rng(), rng);
  theta = chain.position();
  return out;
}

}  // namespace

IterationOutcome chmc_iteration(Vector& theta, const Potential& target, const MassMatrix& mass,
                                const SamplerConfig& cfg, Rng& rng) {
  SamplerConfig c = cfg;
  c.method = Method::chmc;
  return single_iteration(theta, target, mass, c, rng);
}

IterationOutcome hmc_iteration(Vector& theta, const Potential& target, const MassMatrix& mass,
                               const SamplerConfig& cfg, Rng& rng) {
  SamplerConfig c = cfg;
  c.method = Method::hmc_leapfrog;
  return single_iteration(theta, target, mass, c, rng);
}

ChainResult run_chain(const SamplerConfig& cfg, const Potential& target, const MassMatrix& mass,
                      const ChainOptions& options, const ChainSink& sink) {
  const auto start = std::chrono::steady_clock::now();
  Chain chain(cfg, target, mass, options.chain_index);
  const int n_steps = cfg.n_steps();
  SummaryAccumulator acc(n_steps);
  StreamingCovariance cov(target.dimension(), options.covariance_mode);
  std::vector<std::pair<std::size_t, double>> trace;
  std::size_t violations = 0;
  std::size_t failures = 0;
  const double delta = cfg.solver.delta;

  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const IterationOutcome o = chain.step();
    acc.add({o.accepted, o.alpha, o.delta_h, o.force_evaluations});
    if (o.failed) ++failures;
    if (cfg.method == Method::chmc && o.all_converged && !o.failed &&
        o.alpha < acceptance_lower_bound(n_steps, delta, o.jacobian_product)) {
      ++violations;
    }

    const bool retained = it > cfg.burn_in;
    double cov_err = std::numeric_limits<double>::quiet_NaN();
    if (retained && options.track_covariance) {
      cov.update(chain.position());
      if (it % cfg.record_stride == 0 && cov.count() >= 2) {
        cov_err = covariance_error(cov, options.target_covariance);
        trace.emplace_back(it, cov_err);
      }
    }
    if (sink) sink(ChainEvent{it, &o, &chain.position(), retained, cov_err});
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ChainResult result{acc.finalize(wall), std::move(cov)};
  result.summary.covariance_error_trace = std::move(trace);
  result.summary.retained = cfg.iterations - cfg.burn_in;
  result.summary.lower_bound_violations = violations;
  result.summary.failed_iterations = failures;
  if (options.track_covariance && result.covariance.count() >= 2) {
    result.summary.final_covariance_error =
        covariance_error(result.covariance, options.target_covariance);
  } else {
    result.summary.final_covariance_error = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

}  // namespace chmc
