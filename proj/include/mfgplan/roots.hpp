#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>

namespace mfgplan {

class RootError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RootResult {
  double root = 0.0;
  int iterations = 0;
};

/// Root of a continuous monotone function on [lo, hi] with g(lo) g(hi) <= 0.
///
/// `g` returns the pair (value, derivative). Newton steps are taken while they
/// stay inside the bracket and at least halve the step of two iterations ago;
/// otherwise the bracket is bisected. Stops when |g(x)| <= ftol or the step
/// falls below xtol * max(1, |x|).
template <class F>
RootResult solve_scalar_monotone(F&& g, double lo, double hi, double xtol = 1e-12, double ftol = 0.0,
                                 int max_iter = 200) {
  if (!(lo <= hi)) throw RootError("solve_scalar_monotone: invalid bracket");
  const auto [glo, dlo] = g(lo);
  const auto [ghi, dhi] = g(hi);
  if (std::abs(glo) <= ftol || glo == 0.0) return {lo, 0};
  if (std::abs(ghi) <= ftol || ghi == 0.0) return {hi, 0};
  if ((glo > 0.0) == (ghi > 0.0))
    throw RootError("solve_scalar_monotone: no sign change on [" + std::to_string(lo) + ", " +
                    std::to_string(hi) + "]");
  // Orient so that g(lo) < 0 < g(hi).
  if (glo > 0.0) std::swap(lo, hi);

  double x = 0.5 * (lo + hi);
  double step_old = std::abs(hi - lo);
  double step = step_old;
  auto [gx, dx] = g(x);
  for (int it = 1; it <= max_iter; ++it) {
    const bool newton_leaves = ((x - hi) * dx - gx) * ((x - lo) * dx - gx) > 0.0;
    const bool newton_slow = std::abs(2.0 * gx) > std::abs(step_old * dx);
    if (newton_leaves || newton_slow || !std::isfinite(dx) || dx == 0.0) {
      step_old = step;
      step = 0.5 * (hi - lo);
      x = lo + step;
    } else {
      step_old = step;
      step = gx / dx;
      x -= step;
    }
    if (std::abs(step) <= xtol * std::max(1.0, std::abs(x))) return {x, it};
    std::tie(gx, dx) = g(x);
    if (std::abs(gx) <= ftol || gx == 0.0) return {x, it};
    if (gx < 0.0) lo = x; else hi = x;
  }
  throw RootError("solve_scalar_monotone: no convergence in " + std::to_string(max_iter) + " iterations");
}

}  // namespace mfgplan
