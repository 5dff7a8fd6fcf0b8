#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "chmc/jacobian.hpp"
#include "chmc/targets.hpp"
#include "oracles.hpp"

using namespace chmc;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Vector uniform_vec(std::mt19937_64& rng, int d, double a) {
  std::uniform_real_distribution<double> u(-a, a);
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = u(rng);
  return v;
}

Matrix random_spd(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = n(rng);
  return a * a.transpose() + Matrix::Identity(d, d);
}

JacobianMode mode_of(JacobianOrder order,
                     DerivativeSource source = DerivativeSource::analytic) {
  JacobianMode m;
  m.order = order;
  m.source = source;
  return m;
}

DmmSolverConfig tight(double tau) {
  DmmSolverConfig cfg;
  cfg.tau = tau;
  cfg.delta = 1e-13;
  cfg.max_fpi = 200;
  return cfg;
}

// 1-d potential whose D_QF makes I + tau^2/4 D_QF singular.
class SingularJacobianTarget final : public Potential {
 public:
  explicit SingularJacobianTarget(double tau) : tau_(tau) {}
  std::size_t dimension() const override { return 1; }
  double value(std::span<const double> q) const override { return q[0] * q[0]; }
  bool has_force_jacobian() const override { return true; }
  void force_jacobian_diag(std::span<const double>, std::span<const double>,
                           std::span<double> d_q, std::span<double> d_big_q) const override {
    d_q[0] = 1.0;
    d_big_q[0] = -4.0 / (tau_ * tau_);
  }
  void force_jacobian(std::span<const double>, std::span<const double>, Matrix& d_q,
                      Matrix& d_big_q) const override {
    d_q = Matrix::Constant(1, 1, 1.0);
    d_big_q = Matrix::Constant(1, 1, -4.0 / (tau_ * tau_));
  }

 private:
  double tau_;
};

}  // namespace

TEST_CASE("force jacobians") {
  QuarticGeneralizedGaussian u1(1);
  const ForceJacobians j =
      force_jacobians(vec({2.0}), vec({1.0}), u1, DerivativeSource::analytic, 1e-8, false);
  CHECK(j.d_q(0, 0) == 22.0);
  CHECK(j.d_big_q(0, 0) == 34.0);

  std::mt19937_64 rng(3);
  SUBCASE("gaussian jacobians equal the precision") {
    const Matrix cov = random_spd(rng, 3);
    MultivariateGaussian g(uniform_vec(rng, 3, 1.0), cov);
    const ForceJacobians jg = force_jacobians(uniform_vec(rng, 3, 1.0), uniform_vec(rng, 3, 1.0),
                                              g, DerivativeSource::analytic, 1e-8, false);
    CHECK((jg.d_q - cov.inverse()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((jg.d_big_q - cov.inverse()).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("finite differences agree with analytic on the quartic target") {
    const int d = 3;
    QuarticGeneralizedGaussian u(d);
    for (int trial = 0; trial < 100; ++trial) {
      const Vector q = uniform_vec(rng, d, 1.5), big_q = uniform_vec(rng, d, 1.5);
      const ForceJacobians a =
          force_jacobians(big_q, q, u, DerivativeSource::analytic, 1e-8, false);
      const ForceJacobians f = force_jacobians(big_q, q, u, DerivativeSource::finite_difference,
                                               1.4901161193847656e-08, false);
      CHECK(f.extra_force_evaluations > 0);
      for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) {
          const double scale = std::max(1.0, std::abs(a.d_q(r, c)));
          CHECK(std::abs(f.d_q(r, c) - a.d_q(r, c)) <= 1e-5 * scale);
          const double scale_b = std::max(1.0, std::abs(a.d_big_q(r, c)));
          CHECK(std::abs(f.d_big_q(r, c) - a.d_big_q(r, c)) <= 1e-5 * scale_b);
        }
      }
      const ForceJacobians fd_diag = force_jacobians(
          big_q, q, u, DerivativeSource::finite_difference, 1.4901161193847656e-08, true);
      CHECK((fd_diag.diag_q - a.d_q.diagonal()).cwiseAbs().maxCoeff() < 1e-5 * 50);
    }
  }
  SUBCASE("analytic source requires target support") {
    FunctionPotential f(1, [](std::span<const double> q) { return q[0] * q[0]; });
    CHECK_THROWS_AS(force_jacobians(vec({1.0}), vec({0.0}), f, DerivativeSource::analytic, 1e-8,
                                    false),
                    std::logic_error);
  }
}

TEST_CASE("step jacobian examples") {
  QuarticGeneralizedGaussian u(1);
  const auto m = MassMatrix::identity(1);
  const Vector big_q = vec({2.0}), q = vec({1.0});
  CHECK(step_jacobian(big_q, q, 0.1, m, mode_of(JacobianOrder::j0), u).value == 1.0);
  CHECK(step_jacobian(big_q, q, 0.1, m, mode_of(JacobianOrder::j1), u).value ==
        doctest::Approx(0.97).epsilon(1e-14));
  CHECK(step_jacobian(big_q, q, 0.1, m, mode_of(JacobianOrder::full), u).value ==
        doctest::Approx(1.055 / 1.085).epsilon(1e-14));
  CHECK(1.055 / 1.085 == doctest::Approx(0.9723502).epsilon(1e-7));
}

TEST_CASE("gaussian target is volume preserving") {
  std::mt19937_64 rng(9);
  for (int d : {1, 2, 5}) {
    MultivariateGaussian g(uniform_vec(rng, d, 1.0), random_spd(rng, d));
    const MassMatrix masses[] = {MassMatrix::identity(d), MassMatrix::dense(random_spd(rng, d))};
    for (const auto& m : masses) {
      for (double tau : {0.01, 0.1, 0.5}) {
        const double j = step_jacobian(uniform_vec(rng, d, 2.0), uniform_vec(rng, d, 2.0), tau, m,
                                       mode_of(JacobianOrder::full), g)
                             .value;
        CHECK(std::abs(j - 1.0) <= 1e-12);
      }
    }
    // 40 factors along a real trajectory
    DmmSolverConfig cfg;
    const auto m = MassMatrix::identity(d);
    std::vector<StepJacobian> factors;
    trajectory(PhaseState(uniform_vec(rng, d, 1.0), uniform_vec(rng, d, 1.0)), g, m, cfg, 40,
               [&](const Vector& q_in, const Vector& q_out, const StepStats&) {
                 factors.push_back(
                     step_jacobian(q_out, q_in, cfg.tau, m, mode_of(JacobianOrder::full), g));
               });
    CHECK(factors.size() == 40);
    CHECK(std::abs(trajectory_jacobian(factors) - 1.0) <= 1e-10);
  }
}

TEST_CASE("trajectory jacobian products") {
  std::vector<StepJacobian> ones(10);
  CHECK(trajectory_jacobian(ones) == 1.0);
  std::vector<StepJacobian> two(2);
  two[0].value = two[1].value = 0.97;
  CHECK(trajectory_jacobian(two) == doctest::Approx(0.9409).epsilon(1e-14));
  two[1].value = 0.0;
  CHECK(trajectory_jacobian(two) == 0.0);
  two[1].value = -2.0;
  CHECK(trajectory_jacobian(two) == doctest::Approx(-1.94));

  JacobianProduct p;
  for (int i = 0; i < 2000; ++i) p.multiply(0.5);
  CHECK(p.value() == 0.0);  // underflows as a value but stays signed and non-zero in log form
  CHECK_FALSE(p.is_zero());
  CHECK(p.log_abs() == doctest::Approx(2000 * std::log(0.5)));
}

TEST_CASE("log determinant") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int d : {1, 2, 5, 9}) {
    for (int t = 0; t < 10; ++t) {
      Matrix a(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = n(rng);
      const double det = a.determinant();
      const LogDet ld = log_determinant(a);
      CHECK(ld.sign == (det > 0 ? 1 : -1));
      CHECK(std::exp(ld.log_abs) == doctest::Approx(std::abs(det)).epsilon(1e-10));
    }
  }
  Matrix singular(2, 2);
  singular << 1.0, 2.0, 2.0, 4.0;
  CHECK(log_determinant(singular).sign == 0);
}

TEST_CASE("singular denominator gives a zero factor") {
  const double tau = 0.1;
  SingularJacobianTarget t(tau);
  const auto m = MassMatrix::identity(1);
  CHECK(step_jacobian(vec({1.0}), vec({0.5}), tau, m, mode_of(JacobianOrder::full), t).value ==
        0.0);
}

TEST_CASE("J1 with a diagonal mass uses the trace of the diagonals") {
  const int d = 3;
  QuarticGeneralizedGaussian u(d);
  const Vector mdiag = vec({0.5, 1.0, 3.0});
  const auto m = MassMatrix::diagonal(mdiag);
  const Vector big_q = vec({1.0, -0.5, 0.3}), q = vec({0.8, -0.2, 0.1});
  double trace = 0.0;
  for (int i = 0; i < d; ++i) {
    const double dq = 2.0 * (2.0 * q[i] * (big_q[i] + q[i]) + big_q[i] * big_q[i] + q[i] * q[i]);
    const double dQ =
        2.0 * (2.0 * big_q[i] * (big_q[i] + q[i]) + big_q[i] * big_q[i] + q[i] * q[i]);
    trace += (dq - dQ) / mdiag[i];
  }
  const double tau = 0.1;
  CHECK(step_jacobian(big_q, q, tau, m, mode_of(JacobianOrder::j1), u).value ==
        doctest::Approx(1.0 + tau * tau / 4.0 * trace).epsilon(1e-14));
  // The dense path computes the same number.
  const auto dense = MassMatrix::dense(Matrix(mdiag.asDiagonal()));
  CHECK(step_jacobian(big_q, q, tau, dense, mode_of(JacobianOrder::j1), u).value ==
        doctest::Approx(1.0 + tau * tau / 4.0 * trace).epsilon(1e-12));
}

TEST_CASE("finite-difference evaluator matches analytic determinants") {
  std::mt19937_64 rng(41);
  const int d = 4;
  QuarticGeneralizedGaussian u(d);
  const auto m = MassMatrix::identity(d);
  DmmSolverConfig cfg;
  for (JacobianOrder order : {JacobianOrder::j1, JacobianOrder::full}) {
    JacobianEvaluator analytic(u, m, mode_of(order), 0.1, cfg);
    JacobianEvaluator fd(u, m, mode_of(order, DerivativeSource::finite_difference), 0.1, cfg);
    for (int t = 0; t < 20; ++t) {
      const Vector q = uniform_vec(rng, d, 1.5), big_q = uniform_vec(rng, d, 1.5);
      const StepJacobian a = analytic.evaluate(big_q, q);
      const StepJacobian f = fd.evaluate(big_q, q);
      CHECK(std::abs(a.value - f.value) <= 1e-7);
      CHECK(f.extra_force_evaluations > 0);
      CHECK(a.extra_force_evaluations == 0);
    }
  }
}

TEST_CASE("det-ratio equals the brute-force 2d x 2d determinant") {
  std::mt19937_64 rng(55);
  const double tau = 0.1;
  for (int d = 1; d <= 3; ++d) {
    QuarticGeneralizedGaussian u(d);
    const auto m = MassMatrix::identity(d);
    const DmmSolverConfig cfg = tight(tau);
    for (int trial = 0; trial < 5; ++trial) {
      const Vector q = uniform_vec(rng, d, 1.2), p = uniform_vec(rng, d, 1.5);
      const StepRecord base = dmm_step(PhaseState(q, p), u, m, cfg);
      REQUIRE(base.converged);
      // central differences of the converged map in all 2d inputs
      const int n = 2 * d;
      Matrix jac(n, n);
      const double h = 1e-5;
      for (int c = 0; c < n; ++c) {
        Vector z_plus(n), z_minus(n);
        z_plus << q, p;
        z_minus = z_plus;
        z_plus[c] += h;
        z_minus[c] -= h;
        const StepRecord a = dmm_step(PhaseState(z_plus.head(d), z_plus.tail(d)), u, m, cfg);
        const StepRecord b = dmm_step(PhaseState(z_minus.head(d), z_minus.tail(d)), u, m, cfg);
        Vector fa(n), fb(n);
        fa << a.state_out.q(), a.state_out.p();
        fb << b.state_out.q(), b.state_out.p();
        jac.col(c) = (fa - fb) / (2 * h);
      }
      const double brute = jac.determinant();
      const double ratio =
          step_jacobian(base.state_out.q(), q, tau, m, mode_of(JacobianOrder::full), u).value;
      CAPTURE(d);
      CHECK(std::abs(brute - ratio) <= 1e-5 * std::abs(ratio));
    }
  }
}

TEST_CASE("JFull(z) * JFull(R Psi z) = 1") {
  std::mt19937_64 rng(61);
  const double tau = 0.1;
  for (int d = 1; d <= 3; ++d) {
    QuarticGeneralizedGaussian u(d);
    const auto m = MassMatrix::identity(d);
    const DmmSolverConfig cfg = tight(tau);
    for (int trial = 0; trial < 20; ++trial) {
      const PhaseState z(uniform_vec(rng, d, 1.2), uniform_vec(rng, d, 1.5));
      const StepRecord fwd = dmm_step(z, u, m, cfg);
      const PhaseState rz = negate_momentum(fwd.state_out);
      const StepRecord back = dmm_step(rz, u, m, cfg);
      const double j1 =
          step_jacobian(fwd.state_out.q(), z.q(), tau, m, mode_of(JacobianOrder::full), u).value;
      const double j2 =
          step_jacobian(back.state_out.q(), rz.q(), tau, m, mode_of(JacobianOrder::full), u).value;
      CHECK(std::abs(j1 * j2 - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("truncation orders of the determinant expansion") {
  const int d = 2;
  QuarticGeneralizedGaussian u(d);
  const auto m = MassMatrix::identity(d);
  const std::vector<double> taus = {0.2, 0.1, 0.05};
  auto slopes = [&](const std::function<Vector(double)>& big_q_of, const Vector& q) {
    std::vector<double> full_minus_one, full_minus_j1;
    for (double tau : taus) {
      const Vector big_q = big_q_of(tau);
      const double jf = step_jacobian(big_q, q, tau, m, mode_of(JacobianOrder::full), u).value;
      const double j1 = step_jacobian(big_q, q, tau, m, mode_of(JacobianOrder::j1), u).value;
      full_minus_one.push_back(std::abs(jf - 1.0));
      full_minus_j1.push_back(std::abs(jf - j1));
    }
    return std::pair{oracle::loglog_slope(taus, full_minus_one),
                     oracle::loglog_slope(taus, full_minus_j1)};
  };
  SUBCASE("expansion in tau at a fixed pair (Q, q)") {
    const Vector big_q = vec({0.7, 0.2}), q = vec({0.5, -0.3});
    const auto [s0, s1] = slopes([&](double) { return big_q; }, q);
    CAPTURE(s0);
    CAPTURE(s1);
    CHECK(s0 >= 1.8);
    CHECK(s0 <= 2.2);
    CHECK(s1 >= 3.8);
    CHECK(s1 <= 4.2);
  }
  SUBCASE("one order higher at converged step pairs") {
    // the discrete force is symmetric in (Q, q), so D_qF - D_QF = O(Q - q) = O(tau)
    const Vector q = vec({0.8, 0.5}), p = vec({0.9, 1.2});
    const auto [s0, s1] = slopes(
        [&](double tau) { return dmm_step(PhaseState(q, p), u, m, tight(tau)).state_out.q(); }, q);
    CAPTURE(s0);
    CAPTURE(s1);
    CHECK(s0 >= 2.7);
    CHECK(s0 <= 3.3);
    CHECK(s1 >= 4.7);
    CHECK(s1 <= 5.3);
  }
}

TEST_CASE("mode parsing and validation") {
  CHECK(parse_jacobian_order("J0") == JacobianOrder::j0);
  CHECK(parse_jacobian_order("J1") == JacobianOrder::j1);
  CHECK(parse_jacobian_order("JFull") == JacobianOrder::full);
  CHECK(to_string(JacobianOrder::full) == "JFull");
  CHECK_THROWS(parse_jacobian_order("J2"));
  JacobianMode m = mode_of(JacobianOrder::full, DerivativeSource::finite_difference);
  m.h_fd = 0.0;
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
}
