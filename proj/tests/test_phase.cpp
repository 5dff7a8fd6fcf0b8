#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "chmc/phase.hpp"
#include "chmc/targets.hpp"

using namespace chmc;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Matrix random_spd(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = n(rng);
  return a * a.transpose() + d * Matrix::Identity(d, d);
}

}  // namespace

TEST_CASE("phase state construction is checked") {
  CHECK_NOTHROW(PhaseState(vec({1.0}), vec({2.0})));
  CHECK_THROWS_AS(PhaseState(vec({1.0, 2.0}), vec({2.0})), std::invalid_argument);
  CHECK_THROWS_AS(PhaseState(Vector(), Vector()), std::invalid_argument);
  CHECK_THROWS_AS(PhaseState(vec({std::nan("")}), vec({0.0})), std::invalid_argument);
  CHECK_THROWS_AS(PhaseState(vec({0.0}), vec({std::numeric_limits<double>::infinity()})),
                  std::invalid_argument);
}

TEST_CASE("hamiltonian examples") {
  QuarticGeneralizedGaussian u1(1), u2(2);
  const auto m1 = MassMatrix::identity(1);
  const auto m2 = MassMatrix::identity(2);
  CHECK(hamiltonian(PhaseState(vec({0.0}), vec({0.0})), u1, m1).total == 0.0);
  CHECK(hamiltonian(PhaseState(vec({1.0}), vec({0.0})), u1, m1).total == 1.0);
  const auto h = hamiltonian(PhaseState(vec({1.0, 1.0}), vec({1.0, 1.0})), u2, m2);
  CHECK(h.potential == 2.0);
  CHECK(h.kinetic == 1.0);
  CHECK(h.total == 3.0);
  CHECK_THROWS_AS(hamiltonian(PhaseState(vec({1.0}), vec({1.0})), u2, m2), std::invalid_argument);
}

TEST_CASE("non-finite potential") {
  FunctionPotential bounded(1, [](std::span<const double> q) {
    return q[0] > 1.0 ? std::numeric_limits<double>::infinity() : q[0] * q[0];
  });
  const auto m = MassMatrix::identity(1);
  CHECK_THROWS_AS(hamiltonian(PhaseState(vec({2.0}), vec({0.0})), bounded, m), std::domain_error);
  CHECK(total_energy(vec({2.0}), vec({0.0}), bounded, m) ==
        std::numeric_limits<double>::infinity());
}

TEST_CASE("negate momentum") {
  const PhaseState s(vec({1.0}), vec({2.0}));
  const PhaseState r = negate_momentum(s);
  CHECK(r.q()[0] == 1.0);
  CHECK(r.p()[0] == -2.0);
  const PhaseState rr = negate_momentum(r);
  CHECK(rr.q() == s.q());
  CHECK(rr.p() == s.p());

  const PhaseState z(vec({0.3}), vec({0.0}));
  const PhaseState rz = negate_momentum(z);
  CHECK(std::signbit(rz.p()[0]));
  QuarticGeneralizedGaussian u(1);
  const auto m = MassMatrix::identity(1);
  CHECK(hamiltonian(z, u, m).total == hamiltonian(rz, u, m).total);
}

TEST_CASE("kinetic energy is even in p for every mass kind") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  const int d = 5;
  Vector diag(d);
  for (int i = 0; i < d; ++i) diag[i] = 0.5 + i;
  const MassMatrix masses[] = {MassMatrix::identity(d), MassMatrix::diagonal(diag),
                               MassMatrix::dense(random_spd(rng, d))};
  QuarticGeneralizedGaussian u(d);
  for (const auto& m : masses) {
    for (int t = 0; t < 100; ++t) {
      Vector q(d), p(d);
      for (int i = 0; i < d; ++i) q[i] = n(rng), p[i] = n(rng);
      const PhaseState s(q, p);
      CHECK(hamiltonian(s, u, m).total == hamiltonian(negate_momentum(s), u, m).total);
    }
  }
}

TEST_CASE("mass matrix validation and inverse") {
  CHECK_THROWS(MassMatrix::diagonal(vec({1.0, 0.0})));
  CHECK_THROWS(MassMatrix::diagonal(vec({1.0, -2.0})));
  Matrix indefinite(2, 2);
  indefinite << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS(MassMatrix::dense(indefinite));

  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  const int d = 7;
  const Matrix a = random_spd(rng, d);
  const MassMatrix m = MassMatrix::dense(a);
  for (int t = 0; t < 20; ++t) {
    Vector v(d);
    for (int i = 0; i < d; ++i) v[i] = n(rng);
    const Vector back = m.inverse_apply(a * v);
    CHECK((back - v).norm() / v.norm() < 1e-12);
    // kinetic energy through the factor and through the explicit inverse
    const double k1 = m.kinetic(v);
    const double k2 = 0.5 * v.dot(a.inverse() * v);
    CHECK(std::abs(k1 - k2) / k2 < 1e-10);
    CHECK(std::abs(m.kinetic_via_inverse(v) - k1) / k1 < 1e-10);
  }

  const MassMatrix md = MassMatrix::diagonal(vec({2.0, 4.0}));
  const Vector w = md.inverse_apply(vec({2.0, 4.0}));
  CHECK(w[0] == doctest::Approx(1.0));
  CHECK(w[1] == doctest::Approx(1.0));
  CHECK(md.kinetic(vec({2.0, 4.0})) == doctest::Approx(0.5 * (4.0 / 2.0 + 16.0 / 4.0)));
}

TEST_CASE("offset_sum and add_scaled_inverse") {
  const MassMatrix m = MassMatrix::diagonal(vec({2.0, 0.5}));
  Vector out;
  m.offset_sum(vec({1.0, 1.0}), 0.1, vec({1.0, 2.0}), vec({3.0, 0.0}), out);
  CHECK(out[0] == doctest::Approx(1.0 + 0.1 * 4.0 / 2.0));
  CHECK(out[1] == doctest::Approx(1.0 + 0.1 * 2.0 / 0.5));
  Vector y = vec({0.0, 0.0});
  m.add_scaled_inverse(2.0, vec({1.0, 1.0}), y);
  CHECK(y[0] == doctest::Approx(1.0));
  CHECK(y[1] == doctest::Approx(4.0));
}

TEST_CASE("momentum sampling") {
  constexpr int kDraws = 100000;
  SUBCASE("variance matches M in 1-d") {
    for (double m : {1.0, 4.0}) {
      const MassMatrix mass = MassMatrix::diagonal(vec({m}));
      Rng rng(123);
      double s = 0.0, ss = 0.0;
      for (int i = 0; i < kDraws; ++i) {
        const double p = sample_momentum(mass, rng)[0];
        s += p;
        ss += p * p;
      }
      const double var = (ss - s * s / kDraws) / (kDraws - 1);
      CHECK(std::abs(var - m) < 0.05 * m);
    }
  }
  SUBCASE("covariance matches a dense M within 5 standard errors") {
    std::mt19937_64 g(5);
    const int d = 3;
    const Matrix a = random_spd(g, d);
    const MassMatrix mass = MassMatrix::dense(a);
    Rng rng(99);
    Matrix acc = Matrix::Zero(d, d);
    for (int i = 0; i < kDraws; ++i) {
      const Vector p = sample_momentum(mass, rng);
      acc += p * p.transpose();
    }
    acc /= kDraws;
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        // Var(p_i p_j) = M_ii M_jj + M_ij^2 for a zero-mean Gaussian.
        const double se = std::sqrt((a(i, i) * a(j, j) + a(i, j) * a(i, j)) / kDraws);
        CHECK(std::abs(acc(i, j) - a(i, j)) < 5.0 * se);
      }
    }
  }
  SUBCASE("same seed gives the same stream") {
    const MassMatrix mass = MassMatrix::identity(4);
    Rng r1(42), r2(42);
    for (int i = 0; i < 100; ++i) CHECK(sample_momentum(mass, r1) == sample_momentum(mass, r2));
  }
}
