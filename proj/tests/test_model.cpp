#include <gtest/gtest.h>

#include <boost/rational.hpp>
#include <cmath>
#include <random>

#include "mfgplan/model.hpp"

using namespace mfgplan;

namespace {

HamiltonianSpec ham(double r, double b, double c) {
  HamiltonianSpec h;
  h.r = r;
  h.b = SpatialField::constant(b);
  h.c = SpatialField::constant(c);
  return h;
}

HamiltonianSpec varying_ham(double r) {
  HamiltonianSpec h;
  h.r = r;
  h.b = SpatialField{1.5, 0.4, {1, 2}, 0.3};
  h.c = SpatialField{0.6, 0.2, {2, 1}, 1.1};
  return h;
}

// sup_s>=0 |zeta| s - H(s) by a fine grid followed by golden-section refinement.
double conjugate_by_search(const HamiltonianSpec& h, const Vec& x, double zn) {
  auto obj = [&](double s) { return zn * s - eval_H(h, x, {s, 0.0}); };
  const double smax = 4.0 * std::pow(zn / h.b(x) + 1.0, 1.0 / (h.r - 1.0)) + 1.0;
  const int n = 20000;
  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (obj(smax * i / n) > obj(smax * best / n)) best = i;
  double lo = smax * std::max(best - 1, 0) / n, hi = smax * std::min(best + 1, n) / n;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200; ++it) {
    const double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
    if (obj(a) > obj(b)) hi = b;
    else lo = a;
  }
  return obj(0.5 * (lo + hi));
}

}  // namespace

TEST(Hamiltonian, Values) {
  EXPECT_DOUBLE_EQ(eval_H(ham(2, 1, 0), {}, {3, 4}), 12.5);
  EXPECT_DOUBLE_EQ(eval_H(ham(2, 1, 0), {}, {0, 0}), 0.0);
  EXPECT_NEAR(eval_H(ham(3, 2, 1), {}, {1, 0}), -1.0 / 3.0, 1e-15);
}

TEST(Hamiltonian, ConjugateValues) {
  EXPECT_DOUBLE_EQ(eval_H_star(ham(2, 1, 0), {}, {3, 4}), 12.5);
  for (double r : {1.3, 2.0, 3.5}) EXPECT_EQ(eval_H_star(ham(r, 1, 0), {}, {0, 0}), 0.0);
  const auto h = ham(3, 2, 1);
  const double v = eval_H_star(h, {}, {4, 0});
  EXPECT_NEAR(v, 8.0 / (1.5 * std::sqrt(2.0)) + 1.0, 1e-12);
  EXPECT_NEAR(v, 4.7712, 1e-4);
  EXPECT_NEAR(v, conjugate_by_search(h, {}, 4.0), 1e-9);
}

TEST(Hamiltonian, ConjugateMatchesSearchWithVaryingCoefficients) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (double r : {1.5, 2.0, 3.0}) {
    const auto h = varying_ham(r);
    for (int s = 0; s < 10; ++s) {
      const Vec x{U(rng), U(rng)};
      const double zn = 3.0 * U(rng);
      EXPECT_NEAR(eval_H_star(h, x, {zn, 0.0}), conjugate_by_search(h, x, zn), 1e-8) << "r=" << r;
    }
  }
}

TEST(Hamiltonian, Gradient) {
  auto g = grad_xi_H(ham(2, 1, 0), {}, {3, 4});
  EXPECT_DOUBLE_EQ(g[0], 3.0);
  EXPECT_DOUBLE_EQ(g[1], 4.0);
  g = grad_xi_H(ham(3, 1, 0), {}, {1, 0});
  EXPECT_DOUBLE_EQ(g[0], 1.0);
  EXPECT_DOUBLE_EQ(g[1], 0.0);
  g = grad_xi_H(ham(1.5, 1, 0), {}, {0, 0});
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
}

TEST(Hamiltonian, FenchelYoung) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-2.0, 2.0), P(0.0, 1.0);
  for (double r : {1.25, 1.5, 2.0, 3.0, 4.5}) {
    const auto h = varying_ham(r);
    for (int s = 0; s < 200; ++s) {
      const Vec x{P(rng), P(rng)};
      const Vec xi{U(rng), U(rng)}, zeta{U(rng), U(rng)};
      EXPECT_GE(eval_H(h, x, xi) + eval_H_star(h, x, zeta) - dot(xi, zeta), -1e-12);
      const Vec z = grad_xi_H(h, x, xi);
      const double lhs = eval_H(h, x, xi) + eval_H_star(h, x, z);
      const double rhs = dot(xi, z);
      EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(rhs)));
      const Vec back = grad_zeta_H_star(h, x, z);
      EXPECT_NEAR(back[0], xi[0], 1e-10 * (1.0 + norm(xi)));
      EXPECT_NEAR(back[1], xi[1], 1e-10 * (1.0 + norm(xi)));
    }
  }
}

TEST(Hamiltonian, ConjugateGrowthSandwich) {
  // Conjugating the growth bound of H with C = max(b_sup, 1/b_inf, c_sup, 1):
  // C^(1-r') |zeta|^r' / r' - C <= H* <= C^(r'-1) |zeta|^r' / r' + C.
  for (double r : {1.5, 2.0, 3.0}) {
    const auto h = varying_ham(r);
    const double C = std::max({h.b.sup(), 1.0 / h.b.inf(), h.c.sup(), 1.0});
    const double C1 = std::pow(C, h.r_conj() - 1.0);
    for (int i = 0; i <= 50; ++i)
      for (double x0 : {0.0, 0.3, 0.77}) {
        const double zn = 0.2 * i;
        const double rc = h.r_conj();
        const double v = eval_H_star(h, {x0, 0.1}, {zn, 0.0});
        EXPECT_LE(v, C1 * std::pow(zn, rc) / rc + C);
        EXPECT_GE(v, std::pow(zn, rc) / (C1 * rc) - C);
      }
  }
}

TEST(Hamiltonian, Sublinearity) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-3.0, 3.0), P(0.0, 1.0);
  for (double r : {1.5, 2.0, 3.0}) {
    const auto h = varying_ham(r);
    for (int s = 0; s < 200; ++s) {
      const Vec x{P(rng), P(rng)};
      const Vec xi{U(rng), U(rng)};
      const double a = P(rng);
      EXPECT_LE(eval_H(h, x, scaled(xi, a)), a * eval_H(h, x, xi) + 1e-12);
    }
  }
}

TEST(Kinetic, Values) {
  const auto h = ham(2, 1, 0);
  EXPECT_DOUBLE_EQ(kinetic(h, {}, 2.0, {2, 0}), 1.0);
  EXPECT_EQ(kinetic(h, {}, 0.0, {0, 0}), 0.0);
  EXPECT_EQ(kinetic(h, {}, 0.0, {1, 0}), kInf);
  EXPECT_EQ(kinetic(h, {}, -1.0, {0, 0}), kInf);
}

TEST(Kinetic, MidpointConvex) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> M(0.0, 3.0), W(-2.0, 2.0), P(0.0, 1.0);
  for (double r : {1.5, 2.0, 3.0}) {
    const auto h = varying_ham(r);
    for (int s = 0; s < 500; ++s) {
      const Vec x{P(rng), P(rng)};
      const double m1 = M(rng), m2 = M(rng);
      const Vec w1{W(rng), W(rng)}, w2{W(rng), W(rng)};
      const Vec wm{(w1[0] + w2[0]) / 2, (w1[1] + w2[1]) / 2};
      const double mid = kinetic(h, x, (m1 + m2) / 2, wm);
      const double avg = 0.5 * (kinetic(h, x, m1, w1) + kinetic(h, x, m2, w2));
      EXPECT_LE(mid, avg + 1e-12 * (1.0 + std::abs(avg)));
    }
  }
}

TEST(Coupling, Values) {
  CouplingSpec c;
  EXPECT_EQ(eval_F_star(c, {}, -3.0), 0.0);
  EXPECT_DOUBLE_EQ(eval_F_star(c, {}, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(eval_f(c, {}, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(eval_F(c, {}, 1.0), 0.5);
  EXPECT_EQ(eval_F(c, {}, -0.1), kInf);
  EXPECT_THROW(eval_f(c, {}, -0.1), std::domain_error);
}

TEST(Coupling, ConjugateAndInverse) {
  CouplingSpec c;
  c.q = 2.5;
  c.a = SpatialField{1.2, 0.3, {1, 0}, 0.0};
  for (double x0 : {0.1, 0.6}) {
    const Vec x{x0, 0.0};
    for (double m : {0.1, 0.7, 2.0}) {
      const double al = eval_f(c, x, m);
      EXPECT_NEAR(eval_f_inverse(c, x, al), m, 1e-12);
      // Fenchel-Young equality at alpha = f(m).
      EXPECT_NEAR(eval_F(c, x, m) + eval_F_star(c, x, al), al * m, 1e-12);
    }
  }
}

TEST(Coupling, StrongMonotonicity) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> M(1e-3, 4.0), P(0.0, 1.0);
  for (double q : {2.0, 2.5, 3.0}) {
    CouplingSpec c;
    c.q = q;
    c.a = SpatialField{1.0, 0.5, {1, 1}, 0.2};
    const double cf = (q - 1.0) * c.a.inf();
    for (int s = 0; s < 500; ++s) {
      const Vec x{P(rng), P(rng)};
      const double m = M(rng), mt = M(rng);
      const double lhs = (eval_f(c, x, mt) - eval_f(c, x, m)) * (mt - m);
      const double rhs = cf * std::min(std::pow(mt, q - 2.0), std::pow(m, q - 2.0)) * (mt - m) * (mt - m);
      EXPECT_GE(lhs, rhs - 1e-12 * (1.0 + rhs));
    }
  }
}

TEST(Coercivity, QuadraticPreset) {
  const auto h = ham(2, 1, 0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-3.0, 3.0);
  for (int s = 0; s < 500; ++s) {
    const Vec xi{U(rng), U(rng)}, zeta{U(rng), U(rng)};
    const Vec a = j1(h, xi), b = j2(h, zeta);
    const Vec d{a[0] - b[0], a[1] - b[1]};
    EXPECT_GE(eval_H(h, {}, xi) + eval_H_star(h, {}, zeta) - dot(xi, zeta), 0.5 * dot(d, d) - 1e-12);
  }
}

TEST(CoercivityMaps, Values) {
  auto v = j1(ham(2, 1, 0), {3, 4});
  EXPECT_DOUBLE_EQ(v[0], 3.0);
  EXPECT_DOUBLE_EQ(v[1], 4.0);
  v = j1(ham(4, 1, 0), {1, 0});
  EXPECT_DOUBLE_EQ(v[0], 1.0);
  for (double r : {1.5, 2.0, 4.0}) {
    EXPECT_EQ(norm(j1(ham(r, 1, 0), {0, 0})), 0.0);
    EXPECT_EQ(norm(j2(ham(r, 1, 0), {0, 0})), 0.0);
  }
}

TEST(Exponents, Values) {
  ProblemSpec p;
  p.hamiltonian.r = 2;
  p.coupling.q = 1.5;
  EXPECT_NEAR(exponents(p).ell, 1.2, 1e-15);
  p.coupling.q = 2;
  auto e = exponents(p);
  EXPECT_NEAR(e.nu, 0.2, 1e-15);
  EXPECT_NEAR(e.ell, 4.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(e.q_conj, 2.0);
  EXPECT_DOUBLE_EQ(e.r_conj, 2.0);
}

TEST(Exponents, AgreeWithRationalArithmetic) {
  using R = boost::rational<long long>;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> den(1, 12), dd(1, 2);
  int checked = 0;
  while (checked < 100) {
    const int d = dd(rng);
    const int rd = den(rng), qd = den(rng);
    // r in (1, 5], q in (1, 4] as exact fractions.
    std::uniform_int_distribution<int> rn(rd + 1, 5 * rd), qn(qd + 1, 4 * qd);
    const R r(rn(rng), rd), q(qn(rng), qd);
    const R rc = r / (r - 1), qc = q / (q - 1);
    const R ell = rc * q / (rc + q - 1);
    const R nu = (r - R(d) * (q - 1)) / (R(d) * (q - 1) * (r - 1) + r * q);
    ProblemSpec p;
    p.d = d;
    p.hamiltonian.r = boost::rational_cast<double>(r);
    p.coupling.q = boost::rational_cast<double>(q);
    const auto e = exponents(p);
    EXPECT_NEAR(e.r_conj, boost::rational_cast<double>(rc), 1e-12);
    EXPECT_NEAR(e.q_conj, boost::rational_cast<double>(qc), 1e-12);
    EXPECT_NEAR(e.ell, boost::rational_cast<double>(ell), 1e-12);
    EXPECT_NEAR(e.nu, boost::rational_cast<double>(nu), 1e-12);
    ++checked;
  }
}

TEST(Assumptions, QuadraticPasses) {
  ProblemSpec p;
  const auto rep = check_assumptions(p);
  EXPECT_TRUE(rep.ok()) << rep.first_failure();
  EXPECT_NO_THROW(require_assumptions(p));
}

TEST(Assumptions, JointGrowthFails) {
  ProblemSpec p;
  p.d = 2;
  p.hamiltonian.r = 1.2;
  p.coupling.q = 2;
  const auto rep = check_assumptions(p);
  ASSERT_FALSE(rep.ok());
  EXPECT_NE(rep.first_failure().find("H3"), std::string::npos);
  EXPECT_NE(rep.first_failure().find("r > max{d(q-1),1}"), std::string::npos);
  EXPECT_THROW(require_assumptions(p), ValidationError);
}

TEST(Assumptions, BoundaryCaseRejected) {
  // r = d(q-1) exactly is excluded.
  ProblemSpec p;
  p.d = 2;
  p.hamiltonian.r = 2.0;
  p.coupling.q = 2.0;
  EXPECT_FALSE(check_assumptions(p).ok());
  p.d = 1;
  p.hamiltonian.r = 1.5;
  p.coupling.q = 2.5;
  EXPECT_FALSE(check_assumptions(p).ok());
}

TEST(Assumptions, QEqualOneFails) {
  ProblemSpec p;
  p.coupling.q = 1.0;
  const auto rep = check_assumptions(p);
  ASSERT_FALSE(rep.ok());
  EXPECT_NE(rep.first_failure().find("q>1"), std::string::npos);
}

TEST(Assumptions, OtherHypotheses) {
  ProblemSpec p;
  p.hamiltonian.b = SpatialField{0.5, 0.6, {1, 0}, 0.0};
  EXPECT_NE(check_assumptions(p).first_failure().find("H1"), std::string::npos);
  p = ProblemSpec{};
  p.hamiltonian.c = SpatialField::constant(-0.1);
  EXPECT_FALSE(check_assumptions(p).ok());
  p = ProblemSpec{};
  p.T = 0.0;
  EXPECT_NE(check_assumptions(p).first_failure().find("H4"), std::string::npos);
  p = ProblemSpec{};
  p.m0.kind = DensityKind::gaussian;
  p.m0.width = -1.0;
  EXPECT_FALSE(check_assumptions(p).ok());
}
