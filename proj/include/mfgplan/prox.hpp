#pragma once

// Resolvent of the per-cell integrand
//
//   Phi(m, w) = m H*(x, -w/m) + F(x, m)
//
// for the power presets. For fixed m > 0 the optimal w is a shrinkage of
// w_tilde along its own direction; the remaining problem in m is scalar and
// strictly convex, and is solved by safeguarded Newton on its derivative.

#include <cmath>
#include <sstream>
#include <string>

#include "mfgplan/model.hpp"
#include "mfgplan/roots.hpp"

namespace mfgplan {

namespace detail {

/// x^e with exact shortcuts for the exponents the presets hit most.
inline double fast_pow(double x, double e) {
  if (e == 1.0) return x;
  if (e == 2.0) return x * x;
  if (e == 0.0) return 1.0;
  if (e == -1.0) return 1.0 / x;
  if (e == 0.5) return std::sqrt(x);
  if (e == 3.0) return x * x * x;
  if (e == 1.5) return x * std::sqrt(x);
  if (e == -0.5) return 1.0 / std::sqrt(x);
  return std::pow(x, e);
}

}  // namespace detail

/// Model coefficients frozen at one cell location.
struct CellCoefficients {
  double beta = 1.0;  // b(x)^(1-r')
  double c = 0.0;     // c(x)
  double a = 1.0;     // a(x)
  double r_conj = 2.0;
  double q = 2.0;

  static CellCoefficients at(const HamiltonianSpec& h, const CouplingSpec& cp, const Vec& x) {
    const double rc = h.r_conj();
    return {std::pow(h.b(x), 1.0 - rc), h.c(x), cp.a(x), rc, cp.q};
  }

  double phi(double m, double wn) const {
    if (m < 0.0) return kInf;
    if (m == 0.0) return wn == 0.0 ? 0.0 : kInf;
    return beta * detail::fast_pow(wn, r_conj) * detail::fast_pow(m, 1.0 - r_conj) / r_conj + m * c +
           a * detail::fast_pow(m, q) / q;
  }
};

struct ProxQuery {
  double gamma = 1.0;
  Vec x{0.0, 0.0};
  double m_tilde = 0.0;
  Vec w_tilde{0.0, 0.0};
};

struct ProxResult {
  double m = 0.0;
  Vec w{0.0, 0.0};
};

class ProxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

/// Speed v >= 0 solving v m + gamma beta v^(r'-1) = |w_tilde|.
inline double prox_speed(const CellCoefficients& k, double gamma, double m, double wn) {
  if (wn == 0.0) return 0.0;
  const double gb = gamma * k.beta;
  if (k.r_conj == 2.0) return wn / (m + gb);
  const double v0 = detail::fast_pow(wn / gb, 1.0 / (k.r_conj - 1.0));
  if (m == 0.0) return v0;
  const double hi = std::min(v0, wn / m);
  auto eq = [&](double v) {
    return std::pair{v * m + gb * detail::fast_pow(v, k.r_conj - 1.0) - wn,
                     m + gb * (k.r_conj - 1.0) * detail::fast_pow(v, k.r_conj - 2.0)};
  };
  return solve_scalar_monotone(eq, 0.0, hi, 1e-14).root;
}

}  // namespace detail

/// Minimizer of Phi(m,w) + (|m - m_tilde|^2 + |w - w_tilde|^2) / (2 gamma)
/// over m >= 0, w in R^d.
inline ProxResult prox_cell(const CellCoefficients& k, double gamma, double m_tilde, const Vec& w_tilde) {
  const double wn = norm(w_tilde);
  const double rc = k.r_conj;
  const double kin = k.beta * (rc - 1.0) / rc;

  auto slope = [&](double m) {
    const double v = detail::prox_speed(k, gamma, m, wn);
    const double vr = detail::fast_pow(v, rc);
    double g = k.c - kin * vr + k.a * detail::fast_pow(m, k.q - 1.0) + (m - m_tilde) / gamma;
    double dg = 1.0 / gamma;
    if (m > 0.0) dg += k.a * (k.q - 1.0) * detail::fast_pow(m, k.q - 2.0);
    else if (k.q < 2.0) dg = kInf;
    if (v > 0.0) {
      const double dv = -v / (m + gamma * k.beta * (rc - 1.0) * detail::fast_pow(v, rc - 2.0));
      dg += -k.beta * (rc - 1.0) * detail::fast_pow(v, rc - 1.0) * dv;
    }
    return std::pair{g, dg};
  };

  const double g0 = slope(0.0).first;
  if (g0 >= 0.0) return {0.0, {0.0, 0.0}};

  const double v0 = detail::prox_speed(k, gamma, 0.0, wn);
  double hi = m_tilde + gamma * (kin * detail::fast_pow(v0, rc) - k.c);
  if (!(hi > 0.0)) hi = 1e-300;
  // The bound above makes slope(hi) >= a hi^(q-1) > 0; grow it if rounding bites.
  for (int guard = 0; slope(hi).first <= 0.0; ++guard) {
    hi *= 2.0;
    if (guard > 2000) {
      std::ostringstream os;
      os << "prox: cannot bracket density for m_tilde=" << m_tilde << " |w_tilde|=" << wn << " gamma=" << gamma;
      throw ProxError(os.str());
    }
  }

  double m = 0.0;
  try {
    m = solve_scalar_monotone(slope, 0.0, hi, 1e-12).root;
  } catch (const RootError& e) {
    std::ostringstream os;
    os << "prox: " << e.what() << " (m_tilde=" << m_tilde << ", |w_tilde|=" << wn << ", gamma=" << gamma << ")";
    throw ProxError(os.str());
  }
  const double v = detail::prox_speed(k, gamma, m, wn);
  const double s = wn > 0.0 ? v * m / wn : 0.0;
  ProxResult interior{m, scaled(w_tilde, s)};

  // Compare against the boundary candidate (0, 0).
  auto objective = [&](double mm, const Vec& ww) {
    const double dm = mm - m_tilde;
    const double dw0 = ww[0] - w_tilde[0], dw1 = ww[1] - w_tilde[1];
    return k.phi(mm, norm(ww)) + (dm * dm + dw0 * dw0 + dw1 * dw1) / (2.0 * gamma);
  };
  if (objective(0.0, {0.0, 0.0}) < objective(interior.m, interior.w)) return {0.0, {0.0, 0.0}};
  return interior;
}

/// prox_cell with coefficients evaluated at the query location.
inline ProxResult prox_cost(const ProxQuery& q, const HamiltonianSpec& h, const CouplingSpec& cp) {
  if (!(q.gamma > 0.0)) throw ProxError("prox: gamma must be positive");
  return prox_cell(CellCoefficients::at(h, cp, q.x), q.gamma, q.m_tilde, q.w_tilde);
}

}  // namespace mfgplan
