#pragma once

// Power-type Hamiltonian and coupling families for the planning problem,
// their convex conjugates and the standing structural assumptions.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfgplan {

/// Point on the flat torus [0,1)^d, or a vector in R^d. Unused trailing
/// components are kept at zero so norms work for d = 1 and d = 2 alike.
using Vec = std::array<double, 2>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double dot(const Vec& a, const Vec& b) { return a[0] * b[0] + a[1] * b[1]; }
inline double norm(const Vec& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1]); }
inline Vec scaled(const Vec& a, double s) { return {a[0] * s, a[1] * s}; }

/// Conjugate exponent s' = s/(s-1).
inline double conjugate_exponent(double s) { return s / (s - 1.0); }

/// Smooth spatial coefficient on the torus: value + amplitude*cos(2*pi*(k.x) + phase).
struct SpatialField {
  double value = 1.0;
  double amplitude = 0.0;
  std::array<int, 2> wavenumber{1, 0};
  double phase = 0.0;

  static SpatialField constant(double v) { return SpatialField{v, 0.0, {1, 0}, 0.0}; }

  double operator()(const Vec& x) const {
    if (amplitude == 0.0) return value;
    const double arg = 2.0 * std::numbers::pi * (wavenumber[0] * x[0] + wavenumber[1] * x[1]) + phase;
    return value + amplitude * std::cos(arg);
  }
  double inf() const { return value - std::abs(amplitude); }
  double sup() const { return value + std::abs(amplitude); }
};

/// H(x, xi) = b(x) |xi|^r / r - c(x).
struct HamiltonianSpec {
  double r = 2.0;
  SpatialField b = SpatialField::constant(1.0);
  SpatialField c = SpatialField::constant(0.0);

  double r_conj() const { return conjugate_exponent(r); }
};

/// f(x, m) = a(x) m^(q-1), F its antiderivative in m.
struct CouplingSpec {
  double q = 2.0;
  SpatialField a = SpatialField::constant(1.0);

  double q_conj() const { return conjugate_exponent(q); }
};

enum class DensityKind { uniform, gaussian, double_bump, from_csv };

/// Endpoint density preset. Values are made unit-mass after discretization.
struct DensityPreset {
  DensityKind kind = DensityKind::uniform;
  Vec center{0.5, 0.5};
  Vec center2{0.5, 0.5};
  double width = 0.1;
  std::string path;
};

struct ProblemSpec {
  int d = 1;
  double T = 1.0;
  HamiltonianSpec hamiltonian;
  CouplingSpec coupling;
  DensityPreset m0;
  DensityPreset mT;
};

struct Exponents {
  double r_conj = 0.0;
  double q_conj = 0.0;
  double ell = 0.0;
  double nu = 0.0;
};

// ---------------------------------------------------------------------------
// Hamiltonian

inline double eval_H(const HamiltonianSpec& h, const Vec& x, const Vec& xi) {
  return h.b(x) * std::pow(norm(xi), h.r) / h.r - h.c(x);
}

/// Fenchel conjugate in xi: b^(1-r') |zeta|^r' / r' + c.
inline double eval_H_star(const HamiltonianSpec& h, const Vec& x, const Vec& zeta) {
  const double rc = h.r_conj();
  return std::pow(h.b(x), 1.0 - rc) * std::pow(norm(zeta), rc) / rc + h.c(x);
}

/// D_xi H = b |xi|^(r-2) xi, extended by 0 at xi = 0 for every r > 1.
inline Vec grad_xi_H(const HamiltonianSpec& h, const Vec& x, const Vec& xi) {
  const double n = norm(xi);
  if (n == 0.0) return {0.0, 0.0};
  return scaled(xi, h.b(x) * std::pow(n, h.r - 2.0));
}

/// D_zeta H* = b^(1-r') |zeta|^(r'-2) zeta, the inverse map of grad_xi_H.
inline Vec grad_zeta_H_star(const HamiltonianSpec& h, const Vec& x, const Vec& zeta) {
  const double n = norm(zeta);
  if (n == 0.0) return {0.0, 0.0};
  const double rc = h.r_conj();
  return scaled(zeta, std::pow(h.b(x), 1.0 - rc) * std::pow(n, rc - 2.0));
}

/// Perspective m H*(x, -w/m) with the lower semicontinuous extension at m = 0.
inline double kinetic(const HamiltonianSpec& h, const Vec& x, double m, const Vec& w) {
  if (m < 0.0) return kInf;
  const double wn = norm(w);
  if (m == 0.0) return wn == 0.0 ? 0.0 : kInf;
  const double rc = h.r_conj();
  return std::pow(h.b(x), 1.0 - rc) * std::pow(wn, rc) * std::pow(m, 1.0 - rc) / rc + m * h.c(x);
}

// ---------------------------------------------------------------------------
// Coupling

inline double eval_f(const CouplingSpec& c, const Vec& x, double m) {
  if (m < 0.0) throw std::domain_error("eval_f: negative density");
  return c.a(x) * std::pow(m, c.q - 1.0);
}

/// F(x, m) = a m^q / q for m >= 0, +inf for m < 0.
inline double eval_F(const CouplingSpec& c, const Vec& x, double m) {
  if (m < 0.0) return kInf;
  return c.a(x) * std::pow(m, c.q) / c.q;
}

/// F*(x, alpha) = sup_{m>=0} alpha m - F(x, m) = a^(1-q') (alpha_+)^q' / q'.
inline double eval_F_star(const CouplingSpec& c, const Vec& x, double alpha) {
  if (alpha <= 0.0) return 0.0;
  const double qc = c.q_conj();
  return std::pow(c.a(x), 1.0 - qc) * std::pow(alpha, qc) / qc;
}

/// Inverse of f(x, .) on [0, inf), clamped to 0 for non-positive values.
inline double eval_f_inverse(const CouplingSpec& c, const Vec& x, double alpha) {
  if (alpha <= 0.0) return 0.0;
  return std::pow(alpha / c.a(x), 1.0 / (c.q - 1.0));
}

// ---------------------------------------------------------------------------
// Coercivity maps

inline Vec j1(const HamiltonianSpec& h, const Vec& xi) {
  const double n = norm(xi);
  if (n == 0.0) return {0.0, 0.0};
  return scaled(xi, std::pow(n, h.r / 2.0 - 1.0));
}

inline Vec j2(const HamiltonianSpec& h, const Vec& zeta) {
  const double n = norm(zeta);
  if (n == 0.0) return {0.0, 0.0};
  return scaled(zeta, std::pow(n, h.r_conj() / 2.0 - 1.0));
}

// ---------------------------------------------------------------------------
// Exponents and assumptions

inline Exponents exponents(const ProblemSpec& p) {
  const double r = p.hamiltonian.r;
  const double q = p.coupling.q;
  const double d = p.d;
  Exponents e;
  e.r_conj = conjugate_exponent(r);
  e.q_conj = conjugate_exponent(q);
  e.ell = e.r_conj * q / (e.r_conj + q - 1.0);
  e.nu = (r - d * (q - 1.0)) / (d * (q - 1.0) * (r - 1.0) + r * q);
  return e;
}

struct HypothesisCheck {
  std::string id;  // "H1" .. "H4"
  bool passed = true;
  std::string message;
};

struct AssumptionReport {
  std::vector<HypothesisCheck> checks;

  bool ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
  /// First failing hypothesis, formatted for error messages.
  std::string first_failure() const {
    for (const auto& c : checks)
      if (!c.passed) return "(" + c.id + ") " + c.message;
    return {};
  }
};

namespace detail {

inline std::vector<Vec> sample_points(int d, int n) {
  std::vector<Vec> pts;
  if (d == 1) {
    for (int i = 0; i < n; ++i) pts.push_back({(i + 0.5) / n, 0.0});
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) pts.push_back({(i + 0.5) / n, (j + 0.5) / n});
  }
  return pts;
}

inline bool density_preset_valid(const DensityPreset& p, std::string& why) {
  switch (p.kind) {
    case DensityKind::uniform:
      return true;
    case DensityKind::gaussian:
    case DensityKind::double_bump:
      if (!(p.width > 0.0) || !std::isfinite(p.width)) {
        why = "bump width must be positive";
        return false;
      }
      return true;
    case DensityKind::from_csv:
      if (p.path.empty()) {
        why = "from_csv density needs a path";
        return false;
      }
      return true;
  }
  return true;
}

}  // namespace detail

/// Validates (H1)-(H4) for the power presets. Sampled checks use a fixed
/// 32^d point set and a fixed radial xi grid.
inline AssumptionReport check_assumptions(const ProblemSpec& p) {
  AssumptionReport rep;
  const auto& h = p.hamiltonian;
  const auto& cp = p.coupling;

  HypothesisCheck h1{"H1", true, "superlinear power Hamiltonian"};
  if (p.d != 1 && p.d != 2) {
    h1 = {"H1", false, "dimension must be 1 or 2"};
  } else if (!(h.r > 1.0) || !std::isfinite(h.r)) {
    h1 = {"H1", false, "requires r > 1, got r=" + std::to_string(h.r)};
  } else if (!(h.b.inf() > 0.0)) {
    h1 = {"H1", false, "b must be bounded below by a positive constant"};
  } else if (h.c.inf() < 0.0) {
    h1 = {"H1", false, "c must be nonnegative"};
  } else {
    // Two-sided growth with C = max(b_max, 1/b_min, c_max, 1).
    const double C = std::max({h.b.sup(), 1.0 / h.b.inf(), h.c.sup(), 1.0});
    for (const auto& x : detail::sample_points(p.d, 32)) {
      for (int k = 0; k <= 40 && h1.passed; ++k) {
        const double s = std::pow(10.0, -4.0 + 0.2 * k);
        const double Hv = eval_H(h, x, {s, 0.0});
        const double lo = std::pow(s, h.r) / (h.r * C) - C;
        const double hi = C / h.r * std::pow(s, h.r) + C;
        if (Hv < lo * (1 + 1e-12) - 1e-12 || Hv > hi * (1 + 1e-12) + 1e-12)
          h1 = {"H1", false, "two-sided growth bound fails on sampled xi"};
      }
    }
  }
  rep.checks.push_back(h1);

  HypothesisCheck h2{"H2", true, "H(x, a xi) <= a H(x, xi) for a in [0,1]"};
  if (h1.passed) {
    for (const auto& x : detail::sample_points(p.d, 16)) {
      for (int k = 0; k <= 10 && h2.passed; ++k) {
        const double a = k / 10.0;
        for (double s : {0.0, 0.1, 1.0, 10.0}) {
          const Vec xi{s, 0.5 * s};
          if (eval_H(h, x, scaled(xi, a)) > a * eval_H(h, x, xi) + 1e-12 * (1 + std::abs(eval_H(h, x, xi)))) {
            h2 = {"H2", false, "sublinearity along rays fails on sampled points"};
            break;
          }
        }
      }
    }
  } else {
    h2 = {"H2", false, "not checked: (H1) failed"};
  }
  rep.checks.push_back(h2);

  HypothesisCheck h3{"H3", true, "power coupling with r > max{d(q-1), 1}"};
  if (!(cp.q > 1.0) || !std::isfinite(cp.q)) {
    h3 = {"H3", false, "requires q>1, got q=" + std::to_string(cp.q)};
  } else if (!(cp.a.inf() > 0.0)) {
    h3 = {"H3", false, "a must be bounded below by a positive constant"};
  } else if (!(h.r > std::max(p.d * (cp.q - 1.0), 1.0))) {
    h3 = {"H3", false,
          "requires r > max{d(q-1),1}: r=" + std::to_string(h.r) +
              " <= " + std::to_string(std::max(p.d * (cp.q - 1.0), 1.0))};
  }
  rep.checks.push_back(h3);

  HypothesisCheck h4{"H4", true, "endpoint densities are nonnegative with positive mass"};
  std::string why;
  if (!(p.T > 0.0) || !std::isfinite(p.T)) {
    h4 = {"H4", false, "time horizon T must be positive"};
  } else if (!detail::density_preset_valid(p.m0, why)) {
    h4 = {"H4", false, "m0: " + why};
  } else if (!detail::density_preset_valid(p.mT, why)) {
    h4 = {"H4", false, "mT: " + why};
  }
  rep.checks.push_back(h4);
  return rep;
}

/// Throws ValidationError naming the first violated hypothesis.
inline void require_assumptions(const ProblemSpec& p) {
  const auto rep = check_assumptions(p);
  if (!rep.ok()) throw ValidationError(rep.first_failure());
}

}  // namespace mfgplan
