#pragma once

// Staggered space-time lattice on [0,T] x T^d.
//
//   m      time nodes k = 0..Nt          x cell centers   ((Nt+1) * C)
//   w      time midpoints k+1/2          x cell faces     (Nt * C * d)
//   u, M   time midpoints k+1/2          x cell centers   (Nt * C)
//
// Face (i, a) is the face between cell i and its +e_a neighbour. All lattices
// carry the same quadrature weight h^d dt per entry, so the plain Euclidean
// transpose of every stencil below is also its adjoint for the weighted pairing.

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "mfgplan/model.hpp"

namespace mfgplan {

struct GridSpec {
  int d = 1;
  int N = 32;
  int Nt = 32;
  double T = 1.0;

  double h() const { return 1.0 / N; }
  double dt() const { return T / Nt; }
  std::size_t cells() const { return d == 1 ? std::size_t(N) : std::size_t(N) * N; }
  std::size_t node_size() const { return std::size_t(Nt + 1) * cells(); }
  std::size_t mid_size() const { return std::size_t(Nt) * cells(); }
  std::size_t face_size() const { return std::size_t(Nt) * cells() * d; }
  /// Quadrature weight of one space-time entry.
  double weight() const { return std::pow(h(), d) * dt(); }
  double cell_volume() const { return std::pow(h(), d); }

  Vec center(std::size_t i) const {
    if (d == 1) return {(double(i) + 0.5) * h(), 0.0};
    return {(double(i % N) + 0.5) * h(), (double(i / N) + 0.5) * h()};
  }
  /// Index of the neighbour of cell i shifted by s (= +1 or -1) along axis a.
  std::size_t neighbor(std::size_t i, int a, int s) const {
    if (a == 0) {
      const std::size_t ix = i % N;
      const std::size_t nx = (ix + N + s) % N;
      return i - ix + nx;
    }
    const std::size_t iy = i / N;
    const std::size_t ny = (iy + N + s) % N;
    return (i % N) + N * ny;
  }
  double t_node(int k) const { return k * dt(); }
  double t_mid(int k) const { return (k + 0.5) * dt(); }
};

inline void validate(const GridSpec& g) {
  if (g.d != 1 && g.d != 2) throw ValidationError("grid: d must be 1 or 2");
  if (g.N < 4) throw ValidationError("grid: N must be >= 4");
  if (g.Nt < 4) throw ValidationError("grid: Nt must be >= 4");
  if (!(g.T > 0.0)) throw ValidationError("grid: T must be positive");
}

/// Primal pair: density on time nodes, momentum on time-midpoint faces.
struct StaggeredField {
  std::vector<double> m;
  std::vector<double> w;

  static StaggeredField zeros(const GridSpec& g) {
    return {std::vector<double>(g.node_size(), 0.0), std::vector<double>(g.face_size(), 0.0)};
  }
};

/// Dual pair on time-midpoint cell centers.
///
/// u_t and u_x are the discrete time derivative and gradient of u that are
/// consistent with the staggered stencil: averaged to nodes (resp. faces) they
/// reproduce the node time-difference (resp. face gradient) of u. The solver
/// produces them as the multipliers of the interpolation constraint.
struct DualField {
  std::vector<double> u;
  std::vector<double> alpha;
  std::vector<double> u_t;
  std::vector<double> u_x;  // Nt * C * d

  static DualField zeros(const GridSpec& g) {
    return {std::vector<double>(g.mid_size(), 0.0), std::vector<double>(g.mid_size(), 0.0),
            std::vector<double>(g.mid_size(), 0.0), std::vector<double>(g.mid_size() * g.d, 0.0)};
  }
};

enum class Lattice { nodes, midpoints, faces };

// ---------------------------------------------------------------------------
// Continuity operator

/// R[k+1/2, i] = (m[k+1,i] - m[k,i]) / dt + div_h(w[k+1/2])[i].
inline void continuity_apply(const GridSpec& g, std::span<const double> m, std::span<const double> w,
                             std::span<double> out) {
  const std::size_t C = g.cells();
  const int d = g.d;
  const double idt = 1.0 / g.dt();
  const double ih = 1.0 / g.h();
  for (int k = 0; k < g.Nt; ++k) {
    const double* m0 = m.data() + k * C;
    const double* m1 = m0 + C;
    const double* wk = w.data() + k * C * d;
    double* r = out.data() + k * C;
    if (d == 1) {
      const std::size_t N = C;
      r[0] = (m1[0] - m0[0]) * idt + (wk[0] - wk[N - 1]) * ih;
      for (std::size_t i = 1; i < N; ++i) r[i] = (m1[i] - m0[i]) * idt + (wk[i] - wk[i - 1]) * ih;
    } else {
      for (std::size_t i = 0; i < C; ++i) {
        const std::size_t ixm = g.neighbor(i, 0, -1);
        const std::size_t iym = g.neighbor(i, 1, -1);
        r[i] = (m1[i] - m0[i]) * idt + (wk[2 * i] - wk[2 * ixm] + wk[2 * i + 1] - wk[2 * iym + 1]) * ih;
      }
    }
  }
}

inline std::vector<double> continuity_apply(const GridSpec& g, const StaggeredField& f) {
  std::vector<double> out(g.mid_size());
  continuity_apply(g, f.m, f.w, out);
  return out;
}

/// Transpose of continuity_apply. The node part is the negative time
/// difference of u (zero-padded beyond the two extreme midpoints); the face
/// part is minus the forward gradient of u.
inline void continuity_adjoint(const GridSpec& g, std::span<const double> u, std::span<double> node,
                               std::span<double> face) {
  const std::size_t C = g.cells();
  const int d = g.d;
  const double idt = 1.0 / g.dt();
  const double ih = 1.0 / g.h();
  for (int k = 0; k <= g.Nt; ++k) {
    const double* up = k > 0 ? u.data() + (k - 1) * C : nullptr;
    const double* un = k < g.Nt ? u.data() + k * C : nullptr;
    double* o = node.data() + k * C;
    for (std::size_t i = 0; i < C; ++i) o[i] = ((up ? up[i] : 0.0) - (un ? un[i] : 0.0)) * idt;
  }
  for (int k = 0; k < g.Nt; ++k) {
    const double* uk = u.data() + k * C;
    double* f = face.data() + k * C * d;
    if (d == 1) {
      const std::size_t N = C;
      for (std::size_t i = 0; i + 1 < N; ++i) f[i] = -(uk[i + 1] - uk[i]) * ih;
      f[N - 1] = -(uk[0] - uk[N - 1]) * ih;
    } else {
      for (std::size_t i = 0; i < C; ++i) {
        f[2 * i] = -(uk[g.neighbor(i, 0, 1)] - uk[i]) * ih;
        f[2 * i + 1] = -(uk[g.neighbor(i, 1, 1)] - uk[i]) * ih;
      }
    }
  }
}

inline StaggeredField continuity_adjoint(const GridSpec& g, std::span<const double> u) {
  auto out = StaggeredField::zeros(g);
  continuity_adjoint(g, u, out.m, out.w);
  return out;
}

// ---------------------------------------------------------------------------
// Interpolation to the cell-centered midpoint lattice

/// (m[k] + m[k+1]) / 2.
inline void m_on_midpoints(const GridSpec& g, std::span<const double> m, std::span<double> out) {
  const std::size_t C = g.cells();
  for (std::size_t j = 0; j < g.mid_size(); ++j) out[j] = 0.5 * (m[j] + m[j + C]);
}

inline std::vector<double> m_on_midpoints(const GridSpec& g, std::span<const double> m) {
  std::vector<double> out(g.mid_size());
  m_on_midpoints(g, m, out);
  return out;
}

/// Average of the two faces bounding each cell along each axis.
inline void w_on_centers(const GridSpec& g, std::span<const double> w, std::span<double> out) {
  const std::size_t C = g.cells();
  const int d = g.d;
  for (int k = 0; k < g.Nt; ++k) {
    const double* wk = w.data() + k * C * d;
    double* o = out.data() + k * C * d;
    if (d == 1) {
      o[0] = 0.5 * (wk[0] + wk[C - 1]);
      for (std::size_t i = 1; i < C; ++i) o[i] = 0.5 * (wk[i] + wk[i - 1]);
    } else {
      for (std::size_t i = 0; i < C; ++i) {
        o[2 * i] = 0.5 * (wk[2 * i] + wk[2 * g.neighbor(i, 0, -1)]);
        o[2 * i + 1] = 0.5 * (wk[2 * i + 1] + wk[2 * g.neighbor(i, 1, -1) + 1]);
      }
    }
  }
}

inline std::vector<double> w_on_centers(const GridSpec& g, std::span<const double> w) {
  std::vector<double> out(g.face_size());
  w_on_centers(g, w, out);
  return out;
}

/// Transpose of m_on_midpoints, onto the full node lattice.
inline void m_on_midpoints_adjoint(const GridSpec& g, std::span<const double> mid, std::span<double> node) {
  const std::size_t C = g.cells();
  for (int k = 0; k <= g.Nt; ++k) {
    double* o = node.data() + k * C;
    for (std::size_t i = 0; i < C; ++i) {
      double s = 0.0;
      if (k > 0) s += mid[(k - 1) * C + i];
      if (k < g.Nt) s += mid[k * C + i];
      o[i] = 0.5 * s;
    }
  }
}

/// Transpose of w_on_centers.
inline void w_on_centers_adjoint(const GridSpec& g, std::span<const double> ctr, std::span<double> face) {
  const std::size_t C = g.cells();
  const int d = g.d;
  for (int k = 0; k < g.Nt; ++k) {
    const double* c = ctr.data() + k * C * d;
    double* f = face.data() + k * C * d;
    if (d == 1) {
      for (std::size_t i = 0; i + 1 < C; ++i) f[i] = 0.5 * (c[i] + c[i + 1]);
      f[C - 1] = 0.5 * (c[C - 1] + c[0]);
    } else {
      for (std::size_t i = 0; i < C; ++i) {
        f[2 * i] = 0.5 * (c[2 * i] + c[2 * g.neighbor(i, 0, 1)]);
        f[2 * i + 1] = 0.5 * (c[2 * i + 1] + c[2 * g.neighbor(i, 1, 1) + 1]);
      }
    }
  }
}

/// Copy of the primal pair on the midpoint cell centers (M, W). The solver
/// keeps it as a separate variable tied to the staggered pair by
/// M = m_on_midpoints(m), W = w_on_centers(w); the cost is evaluated on it.
struct CenteredField {
  std::vector<double> M;
  std::vector<double> W;  // Nt * C * d

  bool empty() const { return M.empty(); }
};

inline CenteredField interpolate(const GridSpec& g, const StaggeredField& f) {
  return {m_on_midpoints(g, f.m), w_on_centers(g, f.w)};
}

/// L2 norm of (m_on_midpoints(m) - M, w_on_centers(w) - W).
inline double interpolation_mismatch(const GridSpec& g, const StaggeredField& f, const CenteredField& z) {
  const auto c = interpolate(g, f);
  double s = 0.0;
  for (std::size_t j = 0; j < c.M.size(); ++j) s += (c.M[j] - z.M[j]) * (c.M[j] - z.M[j]);
  for (std::size_t j = 0; j < c.W.size(); ++j) s += (c.W[j] - z.W[j]) * (c.W[j] - z.W[j]);
  return std::sqrt(s * g.weight());
}

// ---------------------------------------------------------------------------
// Quadrature

/// Midpoint rule with weight h^d dt per entry; the two endpoint slices of the
/// node lattice get half weight (trapezoid in time).
inline double integrate(const GridSpec& g, std::span<const double> values, Lattice lattice) {
  const double wgt = g.weight();
  double s = 0.0;
  if (lattice == Lattice::nodes) {
    const std::size_t C = g.cells();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const std::size_t k = j / C;
      s += (k == 0 || k == std::size_t(g.Nt)) ? 0.5 * values[j] : values[j];
    }
  } else {
    for (double v : values) s += v;
  }
  return s * wgt;
}

// ---------------------------------------------------------------------------
// Operator norm

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Largest singular value of a linear map given its action and transpose, by
/// power iteration on A^T A from a fixed pseudo-random start vector.
inline double power_iteration_norm(std::size_t n_in, std::size_t n_out,
                                   const std::function<void(std::span<const double>, std::span<double>)>& apply,
                                   const std::function<void(std::span<const double>, std::span<double>)>& adjoint,
                                   double rel_tol = 1e-6, int max_iter = 10000) {
  std::mt19937_64 rng(20190601);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> x(n_in), y(n_out), z(n_in);
  for (auto& v : x) v = unif(rng);
  auto nrm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    return std::sqrt(s);
  };
  double lambda_prev = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const double nx = nrm(x);
    for (auto& v : x) v /= nx;
    apply(x, y);
    adjoint(y, z);
    const double lambda = nrm(z);  // -> sigma_max^2
    if (it > 0 && std::abs(lambda - lambda_prev) <= 1e-2 * rel_tol * lambda) return std::sqrt(lambda);
    lambda_prev = lambda;
    x.swap(z);
  }
  throw ConvergenceError("power iteration did not converge");
}

/// Operator norm of continuity_apply acting on the full staggered field.
inline double op_norm(const GridSpec& g) {
  return power_iteration_norm(
      g.node_size() + g.face_size(), g.mid_size(),
      [&](std::span<const double> x, std::span<double> y) {
        continuity_apply(g, x.subspan(0, g.node_size()), x.subspan(g.node_size()), y);
      },
      [&](std::span<const double> y, std::span<double> x) {
        continuity_adjoint(g, y, x.subspan(0, g.node_size()), x.subspan(g.node_size()));
      });
}

}  // namespace mfgplan
