#pragma once

// Primal-dual hybrid gradient for the discrete planning problem
//
//   min  sum_c Phi(x_c, M_c, W_c)   s.t.  continuity(m, w) = 0,
//        (M, W) = (m_on_midpoints(m), w_on_centers(w)),
//        m[0] = m0, m[Nt] = mT.
//
// The cost lives on the cell-centered midpoint lattice, the constraint on the
// staggered one. Primal unknowns are the free staggered values and the
// centered copies z = (M, W); the multipliers are u (continuity) and
// lambda (interpolation). At a saddle point u_t = -lambda_M and
// u_x = -lambda_W are discrete derivatives of u, and
// alpha = max(0, -u_t + H(x, u_x)) makes the discrete dual objective exact.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mfgplan/grid.hpp"
#include "mfgplan/model.hpp"
#include "mfgplan/presets.hpp"
#include "mfgplan/prox.hpp"

#ifdef MFGPLAN_USE_OPENMP
#include <omp.h>
#endif

namespace mfgplan {

enum class StepRule { uniform, diagonal };
enum class Normalization { mean, min_terminal };

struct SolverConfig {
  double tau = 0.0;    // 0: chosen from the operator norm
  double sigma = 0.0;  // 0: chosen from the operator norm
  double theta = 1.0;
  int max_iter = 200000;
  double tol_gap = 1e-4;
  double tol_feas = 1e-4;
  int check_every = 50;
  StepRule step_rule = StepRule::diagonal;
  Normalization normalization = Normalization::mean;
  int threads = 1;
};

struct CheckRecord {
  int iteration = 0;
  double B = 0.0;
  double A = 0.0;
  double gap = 0.0;       // relative: (A + B) / (1 + |B|)
  double feas = 0.0;      // L2 norm of the continuity and interpolation residuals
  double dual_res = 0.0;  // L2 mismatch between u and its derivative fields
  double best_gap = 0.0;  // running minimum of |gap|
};

enum class SolveStatus { converged, max_iter };

struct SolutionBundle {
  GridSpec grid;
  StaggeredField primal;
  CenteredField centered;  // may be empty, e.g. for fields read from disk
  DualField dual;
  std::vector<double> m0, mT;
  std::vector<CheckRecord> history;
  int iterations = 0;
  SolveStatus status = SolveStatus::max_iter;
  double seconds = 0.0;
};

inline const char* to_string(SolveStatus s) { return s == SolveStatus::converged ? "converged" : "max_iter"; }

/// Per-cell model coefficients on the centered lattice (one row of C cells).
inline std::vector<CellCoefficients> cell_coefficients(const ProblemSpec& p, const GridSpec& g) {
  std::vector<CellCoefficients> k(g.cells());
  for (std::size_t i = 0; i < k.size(); ++i)
    k[i] = CellCoefficients::at(p.hamiltonian, p.coupling, g.center(i));
  return k;
}

// ---------------------------------------------------------------------------
// Functionals

/// Discrete B: quadrature of Phi on the centered lattice.
inline double eval_B(const ProblemSpec& p, const GridSpec& g, const CenteredField& z) {
  const std::size_t C = g.cells();
  const auto coef = cell_coefficients(p, g);
  double s = 0.0;
  for (std::size_t j = 0; j < z.M.size(); ++j) {
    const std::size_t i = j % C;
    const Vec wv = g.d == 1 ? Vec{z.W[j], 0.0} : Vec{z.W[2 * j], z.W[2 * j + 1]};
    const double v = coef[i].phi(z.M[j], norm(wv));
    if (!std::isfinite(v)) return kInf;
    s += v;
  }
  return s * g.weight();
}

/// Discrete B at (m_on_midpoints(m), w_on_centers(w)).
inline double eval_B(const ProblemSpec& p, const GridSpec& g, const StaggeredField& f) {
  return eval_B(p, g, interpolate(g, f));
}

/// The stored centered copy, or the interpolated staggered pair if absent.
inline CenteredField centered_of(const SolutionBundle& s) {
  return s.centered.empty() ? interpolate(s.grid, s.primal) : s.centered;
}

/// Boundary values of u: linear extrapolation from the extreme midpoints using
/// the consistent time derivative u_t.
inline void u_endpoints(const GridSpec& g, const DualField& dual, std::vector<double>& u0, std::vector<double>& uT) {
  const std::size_t C = g.cells();
  const double hdt = 0.5 * g.dt();
  u0.resize(C);
  uT.resize(C);
  const std::size_t last = (g.Nt - 1) * C;
  for (std::size_t i = 0; i < C; ++i) {
    u0[i] = dual.u[i] - hdt * dual.u_t[i];
    uT[i] = dual.u[last + i] + hdt * dual.u_t[last + i];
  }
}

/// int u(T) mT - int u(0) m0.
inline double endpoint_pairing(const GridSpec& g, const DualField& dual, std::span<const double> m0,
                               std::span<const double> mT) {
  std::vector<double> u0, uT;
  u_endpoints(g, dual, u0, uT);
  double s = 0.0;
  for (std::size_t i = 0; i < u0.size(); ++i) s += uT[i] * mT[i] - u0[i] * m0[i];
  return s * g.cell_volume();
}

/// Discrete A(u, alpha) = int int F*(x, alpha) + int u(T) mT - int u(0) m0.
inline double eval_A(const ProblemSpec& p, const GridSpec& g, const DualField& dual, std::span<const double> m0,
                     std::span<const double> mT) {
  const std::size_t C = g.cells();
  double s = 0.0;
  for (std::size_t j = 0; j < dual.alpha.size(); ++j) s += eval_F_star(p.coupling, g.center(j % C), dual.alpha[j]);
  return s * g.weight() + endpoint_pairing(g, dual, m0, mT);
}

/// alpha = max(0, -u_t + H(x, u_x)): the smallest alpha compatible with the
/// relaxed Hamilton-Jacobi inequality, hence optimal for A given u.
inline std::vector<double> recover_alpha(const ProblemSpec& p, const GridSpec& g, const DualField& dual) {
  const std::size_t C = g.cells();
  std::vector<double> alpha(g.mid_size());
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    const Vec ux = g.d == 1 ? Vec{dual.u_x[j], 0.0} : Vec{dual.u_x[2 * j], dual.u_x[2 * j + 1]};
    alpha[j] = std::max(0.0, -dual.u_t[j] + eval_H(p.hamiltonian, g.center(j % C), ux));
  }
  return alpha;
}

/// Derivative fields of u by plain differences: time derivative centered over
/// two midpoints (one-sided at the extremes), gradient centered over two cells.
/// Used when only u is available; these are second-order accurate but not the
/// exact multipliers of the solver.
inline void difference_derivatives(const GridSpec& g, DualField& dual) {
  const std::size_t C = g.cells();
  const int d = g.d;
  const double dt = g.dt(), h = g.h();
  dual.u_t.assign(g.mid_size(), 0.0);
  dual.u_x.assign(g.mid_size() * d, 0.0);
  for (int k = 0; k < g.Nt; ++k) {
    const int kp = std::min(k + 1, g.Nt - 1), km = std::max(k - 1, 0);
    for (std::size_t i = 0; i < C; ++i) {
      dual.u_t[k * C + i] = (dual.u[kp * C + i] - dual.u[km * C + i]) / ((kp - km) * dt);
      for (int a = 0; a < d; ++a)
        dual.u_x[(k * C + i) * d + a] =
            (dual.u[k * C + g.neighbor(i, a, 1)] - dual.u[k * C + g.neighbor(i, a, -1)]) / (2.0 * h);
    }
  }
}

/// Subtracts a constant from u (derivative fields are unchanged).
inline void normalize_potential(const GridSpec& g, DualField& dual, Normalization mode) {
  double shift = 0.0;
  if (mode == Normalization::mean) {
    for (double v : dual.u) shift += v;
    shift /= double(dual.u.size());
  } else {
    std::vector<double> u0, uT;
    u_endpoints(g, dual, u0, uT);
    shift = *std::min_element(uT.begin(), uT.end());
  }
  for (double& v : dual.u) v -= shift;
}

// ---------------------------------------------------------------------------
// Saddle-point operator

namespace detail {

/// Stacked constraint operator K(x, z) = (continuity(x), I x - z) restricted to
/// the free unknowns; endpoint density slices are data.
struct SaddleOperator {
  const GridSpec& g;
  std::size_t n_m, n_w, n_z, n_u, n_l;  // free m, w, z=(M,W), u, lambda=(lM,lW)

  explicit SaddleOperator(const GridSpec& grid) : g(grid) {
    const std::size_t C = g.cells();
    n_m = (g.Nt - 1) * C;
    n_w = g.face_size();
    n_z = g.mid_size() * (1 + g.d);
    n_u = g.mid_size();
    n_l = n_z;
  }
  std::size_t n_in() const { return n_m + n_w + n_z; }
  std::size_t n_out() const { return n_u + n_l; }

  void apply(std::span<const double> x, std::span<double> y) const {
    const std::size_t C = g.cells();
    std::vector<double> m(g.node_size(), 0.0);
    std::copy(x.begin(), x.begin() + n_m, m.begin() + C);
    auto w = x.subspan(n_m, n_w);
    auto zM = x.subspan(n_m + n_w, g.mid_size());
    auto zW = x.subspan(n_m + n_w + g.mid_size(), n_w);
    continuity_apply(g, m, w, y.subspan(0, n_u));
    auto yM = y.subspan(n_u, g.mid_size());
    auto yW = y.subspan(n_u + g.mid_size(), n_w);
    m_on_midpoints(g, m, yM);
    w_on_centers(g, w, yW);
    for (std::size_t j = 0; j < yM.size(); ++j) yM[j] -= zM[j];
    for (std::size_t j = 0; j < yW.size(); ++j) yW[j] -= zW[j];
  }

  void adjoint(std::span<const double> y, std::span<double> x) const {
    const std::size_t C = g.cells();
    std::vector<double> node(g.node_size()), node2(g.node_size()), face2(n_w);
    auto u = y.subspan(0, n_u);
    auto lM = y.subspan(n_u, g.mid_size());
    auto lW = y.subspan(n_u + g.mid_size(), n_w);
    auto xw = x.subspan(n_m, n_w);
    continuity_adjoint(g, u, node, xw);
    m_on_midpoints_adjoint(g, lM, node2);
    w_on_centers_adjoint(g, lW, face2);
    for (std::size_t j = 0; j < n_m; ++j) x[j] = node[C + j] + node2[C + j];
    for (std::size_t j = 0; j < n_w; ++j) xw[j] += face2[j];
    auto xz = x.subspan(n_m + n_w);
    for (std::size_t j = 0; j < n_z; ++j) xz[j] = -y[n_u + j];
  }
};

}  // namespace detail

/// Operator norm of the stacked saddle operator used for the step rule.
inline double saddle_op_norm(const GridSpec& g) {
  detail::SaddleOperator K(g);
  return power_iteration_norm(
      K.n_in(), K.n_out(), [&](std::span<const double> x, std::span<double> y) { K.apply(x, y); },
      [&](std::span<const double> y, std::span<double> x) { K.adjoint(y, x); });
}

struct StepSizes {
  double tau_m, tau_w, tau_z, sigma_u, sigma_l;
};

/// Step sizes. `uniform`: tau = sigma = 0.95/||K|| unless given explicitly.
/// `diagonal`: inverse absolute row/column sums of K, which guarantees
/// ||Sigma^(1/2) K Tau^(1/2)|| <= 1; tau and sigma, when given, rescale the
/// primal and dual blocks by tau/sigma-balanced factors.
inline StepSizes step_sizes(const GridSpec& g, const SolverConfig& cfg) {
  if (cfg.step_rule == StepRule::uniform) {
    const double L = saddle_op_norm(g);
    double tau = cfg.tau > 0.0 ? cfg.tau : 0.95 / L;
    double sigma = cfg.sigma > 0.0 ? cfg.sigma : 0.95 / L;
    if (tau * sigma * L * L > 1.0 + 1e-12) throw ValidationError("solver: step sizes violate tau*sigma*||K||^2 <= 1");
    return {tau, tau, tau, sigma, sigma};
  }
  const double idt = 1.0 / g.dt(), ih = 1.0 / g.h();
  const double scale = (cfg.tau > 0.0 && cfg.sigma > 0.0) ? std::sqrt(cfg.tau / cfg.sigma) : 1.0;
  StepSizes s;
  s.tau_m = 0.95 * scale / (2.0 * idt + 1.0);
  s.tau_w = 0.95 * scale / (2.0 * ih + 1.0);
  s.tau_z = 0.95 * scale / 1.0;
  s.sigma_u = 0.95 / scale / (2.0 * idt + 2.0 * g.d * ih);
  s.sigma_l = 0.95 / scale / 2.0;
  return s;
}

// ---------------------------------------------------------------------------
// Solver

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solve with explicit discrete endpoint densities (unit discrete mass).
inline SolutionBundle solve(const ProblemSpec& p, const GridSpec& g, const SolverConfig& cfg,
                            const std::vector<double>& m0, const std::vector<double>& mT) {
  require_assumptions(p);
  validate(g);
  if (g.d != p.d) throw ValidationError("grid dimension differs from problem dimension");
  if (std::abs(g.T - p.T) > 1e-14 * p.T) throw ValidationError("grid horizon differs from problem horizon");
  if (!(cfg.theta >= 0.0 && cfg.theta <= 1.0)) throw ValidationError("solver: theta must lie in [0,1]");
  if (cfg.check_every < 1 || cfg.max_iter < 1) throw ValidationError("solver: check_every and max_iter must be >= 1");
  const std::size_t C = g.cells();
  if (m0.size() != C || mT.size() != C) throw ValidationError("endpoint densities do not match the grid");

#ifdef MFGPLAN_USE_OPENMP
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#endif

  const auto start = std::chrono::steady_clock::now();
  const int d = g.d;
  const int Nt = g.Nt;
  const std::size_t nmid = g.mid_size(), nface = g.face_size(), nnode = g.node_size();
  const auto coef = cell_coefficients(p, g);
  const StepSizes st = step_sizes(g, cfg);
  const double theta = cfg.theta;

  // Primal state.
  std::vector<double> m(nnode), w(nface, 0.0), zM(nmid), zW(nface);
  for (int k = 0; k <= Nt; ++k) {
    const double s = double(k) / Nt;
    for (std::size_t i = 0; i < C; ++i) m[k * C + i] = (1.0 - s) * m0[i] + s * mT[i];
  }
  m_on_midpoints(g, m, zM);
  w_on_centers(g, w, zW);
  std::vector<double> mb = m, wb = w, zMb = zM, zWb = zW;
  std::vector<double> m_old(nnode), w_old(nface), zM_old(nmid), zW_old(nface);

  // Dual state.
  std::vector<double> u(nmid, 0.0), lM(nmid, 0.0), lW(nface, 0.0);

  // Scratch.
  std::vector<double> R(nmid), SM(nmid), SW(nface), gnode(nnode), gface(nface), tnode(nnode), tface(nface);

  SolutionBundle out;
  out.grid = g;
  out.m0 = m0;
  out.mT = mT;

  DualField dual = DualField::zeros(g);
  StaggeredField primal;
  CenteredField centered;
  double best_gap = kInf;

  auto snapshot_dual = [&]() {
    for (std::size_t j = 0; j < nmid; ++j) {
      dual.u[j] = u[j];
      dual.u_t[j] = -lM[j];
    }
    for (std::size_t j = 0; j < nface; ++j) dual.u_x[j] = -lW[j];
    dual.alpha = recover_alpha(p, g, dual);
  };

  auto certificate = [&](int it) {
    primal.m = m;
    primal.w = w;
    centered.M = zM;
    centered.W = zW;
    snapshot_dual();
    CheckRecord rec;
    rec.iteration = it;
    rec.B = eval_B(p, g, centered);
    rec.A = eval_A(p, g, dual, m0, mT);
    rec.gap = (rec.A + rec.B) / (1.0 + std::abs(rec.B));
    continuity_apply(g, m, w, R);
    double f2 = 0.0;
    for (double r : R) f2 += r * r;
    const double mis = interpolation_mismatch(g, primal, centered);
    rec.feas = std::sqrt(f2 * g.weight() + mis * mis);
    // Stationarity in the free staggered unknowns: A^T u = I^T lambda.
    continuity_adjoint(g, u, gnode, gface);
    m_on_midpoints_adjoint(g, lM, tnode);
    w_on_centers_adjoint(g, lW, tface);
    double d2 = 0.0;
    for (std::size_t j = C; j < nnode - C; ++j) d2 += std::pow(gnode[j] - tnode[j], 2);
    for (std::size_t j = 0; j < nface; ++j) d2 += std::pow(gface[j] - tface[j], 2);
    rec.dual_res = std::sqrt(d2 * g.weight());
    const double ag = std::isfinite(rec.gap) ? std::abs(rec.gap) : kInf;
    best_gap = std::min(best_gap, ag);
    rec.best_gap = best_gap;
    out.history.push_back(rec);
    return ag <= cfg.tol_gap && rec.feas <= cfg.tol_feas && rec.dual_res <= cfg.tol_feas;
  };

  int it = 0;
  bool converged = false;
  while (it < cfg.max_iter) {
    ++it;
    // Dual ascent on the multipliers.
    continuity_apply(g, mb, wb, R);
    m_on_midpoints(g, mb, SM);
    w_on_centers(g, wb, SW);
    for (std::size_t j = 0; j < nmid; ++j) {
      u[j] -= st.sigma_u * R[j];
      lM[j] += st.sigma_l * (SM[j] - zMb[j]);
    }
    for (std::size_t j = 0; j < nface; ++j) lW[j] += st.sigma_l * (SW[j] - zWb[j]);

    m_old = m;
    w_old = w;
    zM_old = zM;
    zW_old = zW;

    // Primal descent: linear part on staggered unknowns.
    continuity_adjoint(g, u, gnode, gface);
    m_on_midpoints_adjoint(g, lM, tnode);
    w_on_centers_adjoint(g, lW, tface);
    for (std::size_t j = C; j < nnode - C; ++j) m[j] -= st.tau_m * (-gnode[j] + tnode[j]);
    for (std::size_t j = 0; j < nface; ++j) w[j] -= st.tau_w * (-gface[j] + tface[j]);

    // Primal descent: proximal part on centered copies.
    const double gamma = st.tau_z;
    bool prox_failed = false;
    std::string prox_msg;
#ifdef MFGPLAN_USE_OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t jj = 0; jj < std::ptrdiff_t(nmid); ++jj) {
      const std::size_t j = std::size_t(jj);
      const Vec wt = d == 1 ? Vec{zW[j] + gamma * lW[j], 0.0}
                            : Vec{zW[2 * j] + gamma * lW[2 * j], zW[2 * j + 1] + gamma * lW[2 * j + 1]};
      try {
        const auto r = prox_cell(coef[j % C], gamma, zM[j] + gamma * lM[j], wt);
        zM[j] = r.m;
        zW[j * d] = r.w[0];
        if (d == 2) zW[j * d + 1] = r.w[1];
      } catch (const ProxError& e) {
#ifdef MFGPLAN_USE_OPENMP
#pragma omp critical
#endif
        {
          prox_failed = true;
          prox_msg = e.what();
        }
      }
    }
    if (prox_failed) throw SolverError(prox_msg);

    // Extrapolation.
    for (std::size_t j = 0; j < nnode; ++j) mb[j] = m[j] + theta * (m[j] - m_old[j]);
    for (std::size_t j = 0; j < nface; ++j) wb[j] = w[j] + theta * (w[j] - w_old[j]);
    for (std::size_t j = 0; j < nmid; ++j) zMb[j] = zM[j] + theta * (zM[j] - zM_old[j]);
    for (std::size_t j = 0; j < nface; ++j) zWb[j] = zW[j] + theta * (zW[j] - zW_old[j]);

    if (it % cfg.check_every == 0 && certificate(it)) {
      converged = true;
      break;
    }
  }
  if (!converged && (out.history.empty() || out.history.back().iteration != it)) converged = certificate(it);

  snapshot_dual();
  normalize_potential(g, dual, cfg.normalization);
  out.primal = StaggeredField{m, w};
  out.centered = CenteredField{zM, zW};
  out.dual = dual;
  out.iterations = it;
  out.status = converged ? SolveStatus::converged : SolveStatus::max_iter;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline SolutionBundle solve(const ProblemSpec& p, const GridSpec& g, const SolverConfig& cfg) {
  require_assumptions(p);
  return solve(p, g, cfg, make_density(p.m0, g), make_density(p.mT, g));
}

}  // namespace mfgplan
