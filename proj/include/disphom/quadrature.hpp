#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "disphom/errors.hpp"

namespace disphom {

enum class QuadratureMethod { AdaptiveSimpson, FixedSimpson };

/// For AdaptiveSimpson, `max_subdivisions` is the bisection depth limit.
/// For FixedSimpson it is the number of Simpson panels per segment.
struct QuadratureSpec {
  QuadratureMethod method = QuadratureMethod::AdaptiveSimpson;
  double abs_tol = 1e-12;
  double rel_tol = 1e-9;
  int max_subdivisions = 24;

  void validate() const {
    detail::require(abs_tol > 0.0 && rel_tol > 0.0, "QuadratureSpec: tolerances must be > 0");
    detail::require(max_subdivisions >= 1, "QuadratureSpec: max_subdivisions must be >= 1");
  }
};

struct QuadratureResult {
  double value = 0.0;
  double error_bound = 0.0;
  std::size_t evaluations = 0;
};

namespace detail {

template <class F>
struct SimpsonState {
  F& f;
  int max_depth;
  std::size_t evaluations = 0;
  double error = 0.0;
  bool converged = true;

  double eval(double x) {
    ++evaluations;
    return f(x);
  }

  // fa, fm, fb at a, (a+b)/2, b; whole is the Simpson estimate on [a, b].
  double recurse(double a, double b, double fa, double fm, double fb, double whole, double eps,
                 int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = eval(lm);
    const double frm = eval(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (std::abs(delta) <= 15.0 * eps) {
      error += std::abs(delta) / 15.0;
      return left + right + delta / 15.0;
    }
    if (depth >= max_depth) {
      converged = false;
      error += std::abs(delta) / 15.0;
      return left + right + delta / 15.0;
    }
    return recurse(a, m, fa, flm, fm, left, 0.5 * eps, depth + 1) +
           recurse(m, b, fm, frm, fb, right, 0.5 * eps, depth + 1);
  }
};

inline double composite_simpson(auto& f, double a, double b, int panels, std::size_t& evals) {
  const double h = (b - a) / (2.0 * panels);
  double sum = f(a) + f(b);
  for (int i = 1; i < 2 * panels; ++i) sum += (i % 2 == 1 ? 4.0 : 2.0) * f(a + h * i);
  evals += static_cast<std::size_t>(2 * panels + 1);
  return sum * h / 3.0;
}

}  // namespace detail

/// Integrates f over consecutive segments [b0, b1], [b1, b2], ...
///
/// Breakpoints should bracket narrow features of the integrand. The global
/// tolerance max(abs_tol, rel_tol * |I|) is split evenly over the segments,
/// with |I| estimated from a coarse first pass. Throws ConvergenceError when
/// the depth limit is hit before the tolerance is met.
template <class F>
QuadratureResult integrate(F&& f, std::span<const double> breakpoints, const QuadratureSpec& spec) {
  spec.validate();
  detail::require(breakpoints.size() >= 2, "integrate: need at least two breakpoints");
  QuadratureResult out;

  std::vector<double> a(breakpoints.begin(), breakpoints.end() - 1);
  std::vector<double> b(breakpoints.begin() + 1, breakpoints.end());
  const std::size_t nseg = a.size();

  if (spec.method == QuadratureMethod::FixedSimpson) {
    for (std::size_t k = 0; k < nseg; ++k) {
      if (!(b[k] > a[k])) continue;
      std::size_t evals = 0;
      const double fine = detail::composite_simpson(f, a[k], b[k], spec.max_subdivisions, evals);
      const double coarse = spec.max_subdivisions >= 2
                                ? detail::composite_simpson(f, a[k], b[k], spec.max_subdivisions / 2, evals)
                                : fine;
      out.value += fine;
      out.error_bound += std::abs(fine - coarse) / 15.0;
      out.evaluations += evals;
    }
    return out;
  }

  std::vector<double> fa(nseg), fm(nseg), fb(nseg), whole(nseg);
  double magnitude = 0.0;
  for (std::size_t k = 0; k < nseg; ++k) {
    if (!(b[k] > a[k])) continue;
    fa[k] = f(a[k]);
    fm[k] = f(0.5 * (a[k] + b[k]));
    fb[k] = f(b[k]);
    out.evaluations += 3;
    whole[k] = (b[k] - a[k]) / 6.0 * (fa[k] + 4.0 * fm[k] + fb[k]);
    magnitude += std::abs(whole[k]);
  }
  const double eps = std::max(spec.abs_tol, spec.rel_tol * magnitude) / static_cast<double>(nseg);

  detail::SimpsonState<std::remove_reference_t<F>> state{f, spec.max_subdivisions};
  for (std::size_t k = 0; k < nseg; ++k) {
    if (!(b[k] > a[k])) continue;
    out.value += state.recurse(a[k], b[k], fa[k], fm[k], fb[k], whole[k], eps, 0);
  }
  out.evaluations += state.evaluations;
  out.error_bound = state.error;
  if (!state.converged) {
    throw ConvergenceError("quadrature did not converge within " +
                               std::to_string(spec.max_subdivisions) + " bisection levels",
                           out.value, out.error_bound);
  }
  return out;
}

template <class F>
QuadratureResult integrate(F&& f, double lo, double hi, const QuadratureSpec& spec) {
  const double bp[2] = {lo, hi};
  return integrate(std::forward<F>(f), std::span<const double>(bp, 2), spec);
}

}  // namespace disphom
