#pragma once

// Weak-solution certificates, regularity seminorms, refinement and stability
// studies on top of a SolutionBundle.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mfgplan/grid.hpp"
#include "mfgplan/model.hpp"
#include "mfgplan/solver.hpp"

namespace mfgplan {

struct DiagnosticsOptions {
  double eps_mask_rel = 1e-6;  // support mask is {M > eps_mask_rel * max M}
  double tau_interior = 0.0;   // 0: T/8
  int holder_samples = 20000;
};

struct DiagnosticsReport {
  double B = 0.0;
  double A = 0.0;
  double gap = 0.0;
  double feas = 0.0;
  double dual_res = 0.0;
  double energy_identity = 0.0;
  double hj_violation = 0.0;
  double opt_rel_w = 0.0;
  double opt_rel_alpha = 0.0;
  double seminorm_space_m = 0.0;
  double seminorm_space_u = 0.0;
  double seminorm_time_m = 0.0;
  double seminorm_time_u = 0.0;
  double holder = 0.0;
  double total_variation_u = 0.0;
  double eps_mask = 0.0;
  double tau_interior = 0.0;
};

namespace detail {

inline Vec vec_at(const std::vector<double>& a, std::size_t j, int d) {
  return d == 1 ? Vec{a[j], 0.0} : Vec{a[2 * j], a[2 * j + 1]};
}

/// Relative L1 mismatch sum|x - y| / max(sum|x|, sum|y|), 0 when both vanish.
struct RelL1 {
  double num = 0.0, nx = 0.0, ny = 0.0;
  void add(double x, double y) {
    num += std::abs(x - y);
    nx += std::abs(x);
    ny += std::abs(y);
  }
  double value() const {
    const double den = std::max(nx, ny);
    return num == 0.0 ? 0.0 : num / den;
  }
};

}  // namespace detail

/// |int int M [f(M) + H*(D_xi H(u_x))] + int (mT u(T) - m0 u(0))| / (1 + |B|).
inline double energy_identity_residual(const ProblemSpec& p, const GridSpec& g, const SolutionBundle& s) {
  const auto M = centered_of(s).M;
  const std::size_t C = g.cells();
  double sum = 0.0;
  for (std::size_t j = 0; j < M.size(); ++j) {
    const Vec x = g.center(j % C);
    const double mp = std::max(M[j], 0.0);
    const Vec dh = grad_xi_H(p.hamiltonian, x, detail::vec_at(s.dual.u_x, j, g.d));
    sum += mp * (eval_f(p.coupling, x, mp) + eval_H_star(p.hamiltonian, x, dh));
  }
  const double val = sum * g.weight() + endpoint_pairing(g, s.dual, s.m0, s.mT);
  return std::abs(val) / (1.0 + std::abs(eval_B(p, g, centered_of(s))));
}

/// int int max(0, -u_t + H(x, u_x) - f(x, M)) / T.
inline double hj_violation(const ProblemSpec& p, const GridSpec& g, const SolutionBundle& s) {
  const auto M = centered_of(s).M;
  const std::size_t C = g.cells();
  double sum = 0.0;
  for (std::size_t j = 0; j < M.size(); ++j) {
    const Vec x = g.center(j % C);
    const double v = -s.dual.u_t[j] + eval_H(p.hamiltonian, x, detail::vec_at(s.dual.u_x, j, g.d)) -
                     eval_f(p.coupling, x, std::max(M[j], 0.0));
    sum += std::max(v, 0.0);
  }
  return sum * g.weight() / g.T;
}

struct OptimalityResiduals {
  double res_w = 0.0;
  double res_alpha = 0.0;
};

/// Relative L1 residuals of W = -M D_xi H(u_x) and alpha = f(M) on {M > eps_mask}.
inline OptimalityResiduals optimality_relations(const ProblemSpec& p, const GridSpec& g, const SolutionBundle& s,
                                                double eps_mask) {
  const auto z = centered_of(s);
  const auto& M = z.M;
  const auto& W = z.W;
  const std::size_t C = g.cells();
  detail::RelL1 rw, ra;
  for (std::size_t j = 0; j < M.size(); ++j) {
    if (!(M[j] > eps_mask)) continue;
    const Vec x = g.center(j % C);
    const Vec dh = grad_xi_H(p.hamiltonian, x, detail::vec_at(s.dual.u_x, j, g.d));
    for (int a = 0; a < g.d; ++a) rw.add(W[j * g.d + a], -M[j] * dh[a]);
    ra.add(s.dual.alpha[j], eval_f(p.coupling, x, M[j]));
  }
  return {rw.value(), ra.value()};
}

struct Seminorms {
  double m = 0.0;
  double u = 0.0;
};

/// s_m = (2/q) ||grad_h(M^(q/2))||_L2 and s_u = ||sqrt(M) grad_h(j1(u_x))||_L2,
/// differences taken between neighbouring cell centers.
inline Seminorms space_seminorms(const ProblemSpec& p, const GridSpec& g, const SolutionBundle& s) {
  const auto M = centered_of(s).M;
  const std::size_t C = g.cells();
  const int d = g.d;
  const double q = p.coupling.q;
  const double ih = 1.0 / g.h();
  std::vector<double> mq(M.size());
  std::vector<Vec> jv(M.size());
  for (std::size_t j = 0; j < M.size(); ++j) {
    mq[j] = std::pow(std::max(M[j], 0.0), q / 2.0);
    jv[j] = j1(p.hamiltonian, detail::vec_at(s.dual.u_x, j, d));
  }
  double sm = 0.0, su = 0.0;
  for (int k = 0; k < g.Nt; ++k)
    for (std::size_t i = 0; i < C; ++i) {
      const std::size_t j = k * C + i;
      for (int a = 0; a < d; ++a) {
        const std::size_t jn = k * C + g.neighbor(i, a, 1);
        sm += std::pow((mq[jn] - mq[j]) * ih, 2);
        const double mf = std::max(0.5 * (M[j] + M[jn]), 0.0);
        for (int b = 0; b < d; ++b) su += mf * std::pow((jv[jn][b] - jv[j][b]) * ih, 2);
      }
    }
  return {2.0 / q * std::sqrt(sm * g.weight()), std::sqrt(su * g.weight())};
}

/// t_m = ||D_t(M^(q/2))||, t_u = ||sqrt(m) D_t(j1(u_x))|| over interior nodes
/// with t in [tau_interior, T - tau_interior].
inline Seminorms time_seminorms(const ProblemSpec& p, const GridSpec& g, const SolutionBundle& s, double tau_interior) {
  if (!(tau_interior > 0.0 && tau_interior < g.T / 2.0))
    throw ValidationError("time_seminorms: tau_interior must lie in (0, T/2)");
  const auto M = centered_of(s).M;
  const std::size_t C = g.cells();
  const int d = g.d;
  const double q = p.coupling.q;
  const double idt = 1.0 / g.dt();
  double tm = 0.0, tu = 0.0;
  for (int k = 1; k < g.Nt; ++k) {
    const double t = g.t_node(k);
    if (t < tau_interior - 1e-12 * g.T || t > g.T - tau_interior + 1e-12 * g.T) continue;
    for (std::size_t i = 0; i < C; ++i) {
      const std::size_t jm = (k - 1) * C + i, jp = k * C + i;
      const double a = std::pow(std::max(M[jp], 0.0), q / 2.0) - std::pow(std::max(M[jm], 0.0), q / 2.0);
      tm += std::pow(a * idt, 2);
      const Vec jvp = j1(p.hamiltonian, detail::vec_at(s.dual.u_x, jp, d));
      const Vec jvm = j1(p.hamiltonian, detail::vec_at(s.dual.u_x, jm, d));
      const double mk = std::max(s.primal.m[k * C + i], 0.0);
      for (int b = 0; b < d; ++b) tu += mk * std::pow((jvp[b] - jvm[b]) * idt, 2);
    }
  }
  return {std::sqrt(tm * g.weight()), std::sqrt(tu * g.weight())};
}

/// Empirical sup over sampled pairs t1 < t2 <= T - dt of
///   [u(t1,x) - u(t2,y)] / [|x-y|^r' (t2-t1)^(1-r') + (t2-t1)^nu + 1].
/// All pairs are used when there are at most `samples` of them.
inline double holder_estimate(const GridSpec& g, const std::vector<double>& u, const Exponents& e, int samples) {
  if (samples < 1) throw ValidationError("holder_estimate: need at least one sample");
  const std::size_t C = g.cells();
  const int kmax = g.Nt - 2;  // t_mid(kmax) <= T - dt
  if (kmax < 1) return 0.0;
  auto ratio = [&](int k1, std::size_t i1, int k2, std::size_t i2) {
    const double dtau = g.t_mid(k2) - g.t_mid(k1);
    const double dist = std::sqrt(detail::torus_dist2(g.center(i1), g.center(i2), g.d));
    const double den = std::pow(dist, e.r_conj) * std::pow(dtau, 1.0 - e.r_conj) + std::pow(dtau, e.nu) + 1.0;
    return (u[k1 * C + i1] - u[k2 * C + i2]) / den;
  };
  double best = -kInf;
  const double n_time_pairs = double(kmax + 1) * kmax / 2.0;
  if (n_time_pairs * double(C) * double(C) <= double(samples)) {
    for (int k1 = 0; k1 <= kmax; ++k1)
      for (int k2 = k1 + 1; k2 <= kmax; ++k2)
        for (std::size_t i1 = 0; i1 < C; ++i1)
          for (std::size_t i2 = 0; i2 < C; ++i2) best = std::max(best, ratio(k1, i1, k2, i2));
    return best;
  }
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> kd(0, kmax);
  std::uniform_int_distribution<std::size_t> id(0, C - 1);
  for (int s = 0; s < samples; ++s) {
    int k1 = kd(rng), k2 = kd(rng);
    while (k2 == k1) k2 = kd(rng);
    if (k1 > k2) std::swap(k1, k2);
    best = std::max(best, ratio(k1, id(rng), k2, id(rng)));
  }
  return best;
}

/// Discrete total variation of u over the midpoint lattice.
inline double total_variation(const GridSpec& g, const std::vector<double>& u) {
  const std::size_t C = g.cells();
  const double hd = g.cell_volume();
  const double face_area = hd / g.h();
  double tv = 0.0;
  for (int k = 0; k < g.Nt; ++k)
    for (std::size_t i = 0; i < C; ++i) {
      if (k + 1 < g.Nt) tv += hd * std::abs(u[(k + 1) * C + i] - u[k * C + i]);
      for (int a = 0; a < g.d; ++a) tv += g.dt() * face_area * std::abs(u[k * C + g.neighbor(i, a, 1)] - u[k * C + i]);
    }
  return tv;
}

inline DiagnosticsReport diagnose(const ProblemSpec& p, const SolutionBundle& s, const DiagnosticsOptions& opt = {}) {
  const GridSpec& g = s.grid;
  DiagnosticsReport r;
  r.B = eval_B(p, g, centered_of(s));
  r.A = eval_A(p, g, s.dual, s.m0, s.mT);
  r.gap = (r.A + r.B) / (1.0 + std::abs(r.B));
  const auto R = continuity_apply(g, s.primal);
  double f2 = 0.0;
  for (double v : R) f2 += v * v;
  const double mis = s.centered.empty() ? 0.0 : interpolation_mismatch(g, s.primal, s.centered);
  r.feas = std::sqrt(f2 * g.weight() + mis * mis);
  {
    // Mismatch between u and its derivative fields (transpose relation).
    const std::size_t C = g.cells();
    std::vector<double> an(g.node_size()), af(g.face_size()), in(g.node_size()), inf_(g.face_size());
    continuity_adjoint(g, s.dual.u, an, af);
    std::vector<double> lM(g.mid_size()), lW(g.face_size());
    for (std::size_t j = 0; j < lM.size(); ++j) lM[j] = -s.dual.u_t[j];
    for (std::size_t j = 0; j < lW.size(); ++j) lW[j] = -s.dual.u_x[j];
    m_on_midpoints_adjoint(g, lM, in);
    w_on_centers_adjoint(g, lW, inf_);
    double d2 = 0.0;
    for (std::size_t j = C; j < g.node_size() - C; ++j) d2 += std::pow(an[j] - in[j], 2);
    for (std::size_t j = 0; j < af.size(); ++j) d2 += std::pow(af[j] - inf_[j], 2);
    r.dual_res = std::sqrt(d2 * g.weight());
  }
  r.energy_identity = energy_identity_residual(p, g, s);
  r.hj_violation = hj_violation(p, g, s);
  const auto M = centered_of(s).M;
  r.eps_mask = opt.eps_mask_rel * *std::max_element(M.begin(), M.end());
  const auto o = optimality_relations(p, g, s, r.eps_mask);
  r.opt_rel_w = o.res_w;
  r.opt_rel_alpha = o.res_alpha;
  const auto sp = space_seminorms(p, g, s);
  r.seminorm_space_m = sp.m;
  r.seminorm_space_u = sp.u;
  r.tau_interior = opt.tau_interior > 0.0 ? opt.tau_interior : g.T / 8.0;
  const auto tm = time_seminorms(p, g, s, r.tau_interior);
  r.seminorm_time_m = tm.m;
  r.seminorm_time_u = tm.u;
  r.holder = holder_estimate(g, s.dual.u, exponents(p), opt.holder_samples);
  r.total_variation_u = total_variation(g, s.dual.u);
  return r;
}

// ---------------------------------------------------------------------------
// Refinement

struct RefinementRow {
  int N = 0, Nt = 0;
  int iterations = 0;
  SolveStatus status = SolveStatus::max_iter;
  double seconds = 0.0;
  DiagnosticsReport report;
};

struct RefinementTable {
  std::vector<RefinementRow> rows;
  bool B_cauchy = true;  // successive relative differences of B decrease
  double factor_space_m = 1.0, factor_space_u = 1.0, factor_time_m = 1.0, factor_time_u = 1.0, factor_holder = 1.0;
};

/// max/min over positive values; 1 when there is nothing to compare.
inline double spread_factor(const std::vector<double>& v) {
  double lo = kInf, hi = 0.0;
  for (double x : v) {
    lo = std::min(lo, std::abs(x));
    hi = std::max(hi, std::abs(x));
  }
  if (hi == 0.0) return 1.0;
  return lo == 0.0 ? kInf : hi / lo;
}

inline RefinementTable refinement_study(const ProblemSpec& p, const SolverConfig& cfg, const std::vector<int>& N_list,
                                        const std::vector<int>& Nt_list, const DiagnosticsOptions& opt = {}) {
  if (N_list.size() != Nt_list.size() || N_list.empty())
    throw ValidationError("refinement_study: N and Nt lists must be non-empty and of equal length");
  for (std::size_t i = 1; i < N_list.size(); ++i)
    if (N_list[i] < N_list[i - 1] || Nt_list[i] < Nt_list[i - 1])
      throw ValidationError("refinement_study: resolution lists must be ascending");
  RefinementTable tab;
  for (std::size_t i = 0; i < N_list.size(); ++i) {
    const GridSpec g{p.d, N_list[i], Nt_list[i], p.T};
    const auto s = solve(p, g, cfg);
    tab.rows.push_back({g.N, g.Nt, s.iterations, s.status, s.seconds, diagnose(p, s, opt)});
  }
  std::vector<double> sm, su, tm, tu, ho;
  for (const auto& r : tab.rows) {
    sm.push_back(r.report.seminorm_space_m);
    su.push_back(r.report.seminorm_space_u);
    tm.push_back(r.report.seminorm_time_m);
    tu.push_back(r.report.seminorm_time_u);
    ho.push_back(r.report.holder);
  }
  tab.factor_space_m = spread_factor(sm);
  tab.factor_space_u = spread_factor(su);
  tab.factor_time_m = spread_factor(tm);
  tab.factor_time_u = spread_factor(tu);
  tab.factor_holder = spread_factor(ho);
  for (std::size_t i = 2; i < tab.rows.size(); ++i) {
    auto rel = [&](std::size_t a, std::size_t b) {
      return std::abs(tab.rows[a].report.B - tab.rows[b].report.B) / std::abs(tab.rows[b].report.B);
    };
    if (!(rel(i, i - 1) < rel(i - 1, i - 2))) tab.B_cauchy = false;
  }
  return tab;
}

// ---------------------------------------------------------------------------
// Stability under endpoint perturbation

/// Smooth space-time test fields used for the weak pairings.
inline std::vector<double> test_field_values(const GridSpec& g, int j) {
  const std::size_t C = g.cells();
  std::vector<double> phi(g.mid_size());
  const double tp = 2.0 * std::numbers::pi;
  for (int k = 0; k < g.Nt; ++k) {
    const double ct = std::cos(std::numbers::pi * g.t_mid(k) / g.T);
    for (std::size_t i = 0; i < C; ++i) {
      const Vec x = g.center(i);
      double v = 0.0;
      switch (j) {
        case 0: v = std::cos(tp * x[0]); break;
        case 1: v = std::sin(tp * x[0]); break;
        case 2: v = ct * std::cos(tp * x[0]); break;
        case 3: v = ct * std::sin(tp * x[0]); break;
        case 4: v = std::cos(tp * x[1]); break;
        case 5: v = ct * std::sin(tp * x[1]); break;
        default: break;
      }
      phi[k * C + i] = v;
    }
  }
  return phi;
}

inline int n_test_fields(int d) { return d == 1 ? 4 : 6; }

struct StabilityRow {
  double eps = 0.0;
  double Lq_norm = 0.0;
  double B = 0.0;
  double gap = 0.0;
  SolveStatus status = SolveStatus::max_iter;
  std::vector<double> pairings;
};

struct StabilityTable {
  std::vector<StabilityRow> rows;  // first row is eps = 0
  std::vector<bool> monotone;      // per test field
  double noise_floor = 0.0;        // pairing deviations below this count as converged
  double rel_B_change_smallest_eps = 0.0;
};

/// Solves with endpoints (1-eps) m + eps for each eps and compares weak
/// pairings, L^q norms and optimal values with the unperturbed solution.
inline StabilityTable stability_experiment(const ProblemSpec& p, const GridSpec& g, const SolverConfig& cfg,
                                           std::vector<double> eps_list) {
  for (double e : eps_list)
    if (!(e >= 0.0 && e <= 1.0)) throw ValidationError("stability: perturbation weights must lie in [0,1]");
  // eps = 0 is the base row, always solved first.
  std::erase(eps_list, 0.0);
  std::sort(eps_list.begin(), eps_list.end(), std::greater<>());
  const auto m0 = make_density(p.m0, g);
  const auto mT = make_density(p.mT, g);
  const int nf = n_test_fields(g.d);
  std::vector<std::vector<double>> phis;
  for (int j = 0; j < nf; ++j) phis.push_back(test_field_values(g, j));

  auto run = [&](double eps) {
    const auto s = solve(p, g, cfg, mix_with_uniform(m0, eps), mix_with_uniform(mT, eps));
    StabilityRow row;
    row.eps = eps;
    row.status = s.status;
    row.B = eval_B(p, g, centered_of(s));
    row.gap = s.history.back().gap;
    const auto M = centered_of(s).M;
    double lq = 0.0;
    for (double v : M) lq += std::pow(std::max(v, 0.0), p.coupling.q);
    row.Lq_norm = std::pow(lq * g.weight(), 1.0 / p.coupling.q);
    for (const auto& phi : phis) {
      double acc = 0.0;
      for (std::size_t j = 0; j < M.size(); ++j) acc += phi[j] * M[j];
      row.pairings.push_back(acc * g.weight());
    }
    return row;
  };

  StabilityTable tab;
  tab.rows.push_back(run(0.0));
  for (double e : eps_list) tab.rows.push_back(run(e));
  const auto& base = tab.rows.front();
  // Pairings are O(1); deviations below the solver accuracy are not resolved.
  const double floor = 10.0 * std::max(cfg.tol_gap, cfg.tol_feas);
  tab.noise_floor = floor;
  for (int j = 0; j < nf; ++j) {
    bool mono = true;
    for (std::size_t r = 2; r < tab.rows.size(); ++r) {
      const double prev = std::abs(tab.rows[r - 1].pairings[j] - base.pairings[j]);
      const double cur = std::abs(tab.rows[r].pairings[j] - base.pairings[j]);
      if (cur > prev && cur > floor) mono = false;
    }
    tab.monotone.push_back(mono);
  }
  if (tab.rows.size() > 1)
    tab.rel_B_change_smallest_eps = std::abs(tab.rows.back().B - base.B) / std::abs(base.B);
  return tab;
}

}  // namespace mfgplan
