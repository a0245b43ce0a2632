#pragma once

// Complex error function and the Faddeeva function w(z) = exp(-z^2) erfc(-iz).
//
// Small arguments use the Maclaurin series of erf directly. Everything else
// goes through w(z) in the closed upper half plane, evaluated with the
// Gautschi / Poppe-Wijers scheme (power series near the origin, Taylor
// expansion with Laplace continued-fraction coefficients in the middle
// region, pure continued fraction outside). Relative accuracy is ~1e-14.

#include <cmath>
#include <complex>
#include <limits>

#include "disphom/constants.hpp"
#include "disphom/errors.hpp"
#include "disphom/types.hpp"

namespace disphom {

namespace detail {

// Radius inside which the erf Maclaurin series is summed directly. The
// largest term grows like exp(|z|^2), so cancellation costs about
// |z|^2 / ln(10) digits for real-ish z; 3 keeps that below 1e-12.
inline constexpr double erf_series_radius = 3.0;

inline ComplexValue erf_maclaurin(ComplexValue z) {
  // erf(z) = 2/sqrt(pi) * sum_n (-1)^n z^(2n+1) / (n! (2n+1))
  const ComplexValue minus_z2 = -z * z;
  ComplexValue power = z;  // (-1)^n z^(2n+1) / n!
  ComplexValue sum = z;
  for (int n = 1; n < 200; ++n) {
    power *= minus_z2 / static_cast<double>(n);
    const ComplexValue term = power / static_cast<double>(2 * n + 1);
    sum += term;
    if (std::abs(term) <= 1e-17 * std::abs(sum)) break;
  }
  return constants::two_over_sqrt_pi * sum;
}

// w(z) for Im z >= 0.
inline ComplexValue faddeeva_upper(double x_in, double y) {
  constexpr double factor = constants::two_over_sqrt_pi;
  const double xabs = std::abs(x_in);
  const double yabs = y;
  const double xs = xabs / 6.3;
  const double ys = yabs / 4.4;
  double qrho = xs * xs + ys * ys;

  double u = 0.0;
  double v = 0.0;

  if (qrho < 0.085264) {
    // Power series of w near the origin.
    const double xquad = xabs * xabs - yabs * yabs;
    const double yquad = 2.0 * xabs * yabs;
    qrho = (1.0 - 0.85 * ys) * std::sqrt(qrho);
    const int n = static_cast<int>(std::lround(6.0 + 72.0 * qrho));
    int j = 2 * n + 1;
    double xsum = 1.0 / j;
    double ysum = 0.0;
    for (int i = n; i >= 1; --i) {
      j -= 2;
      const double xaux = (xsum * xquad - ysum * yquad) / i;
      ysum = (xsum * yquad + ysum * xquad) / i;
      xsum = xaux + 1.0 / j;
    }
    const double u1 = -factor * (xsum * yabs + ysum * xabs) + 1.0;
    const double v1 = factor * (xsum * xabs - ysum * yabs);
    const double daux = std::exp(-xquad);
    const double u2 = daux * std::cos(yquad);
    const double v2 = -daux * std::sin(yquad);
    u = u1 * u2 - v1 * v2;
    v = u1 * v2 + v1 * u2;
  } else {
    double h = 0.0;
    int kapn = 0;
    int nu = 0;
    if (qrho > 1.0) {
      qrho = std::sqrt(qrho);
      nu = static_cast<int>(3.0 + 1442.0 / (26.0 * qrho + 77.0));
    } else {
      qrho = (1.0 - ys) * std::sqrt(1.0 - qrho);
      h = 1.88 * qrho;
      kapn = static_cast<int>(std::lround(7.0 + 34.0 * qrho));
      nu = static_cast<int>(std::lround(16.0 + 26.0 * qrho));
    }
    const double h2 = 2.0 * h;
    double qlambda = h > 0.0 ? std::pow(h2, kapn) : 0.0;

    double rx = 0.0;
    double ry = 0.0;
    double sx = 0.0;
    double sy = 0.0;
    for (int n = nu; n >= 0; --n) {
      const double np1 = n + 1;
      double tx = yabs + h + np1 * rx;
      double ty = xabs - np1 * ry;
      const double c = 0.5 / (tx * tx + ty * ty);
      rx = c * tx;
      ry = c * ty;
      if (h > 0.0 && n <= kapn) {
        tx = qlambda + sx;
        sx = rx * tx - ry * sy;
        sy = ry * tx + rx * sy;
        qlambda /= h2;
      }
    }
    if (h == 0.0) {
      u = factor * rx;
      v = factor * ry;
    } else {
      u = factor * sx;
      v = factor * sy;
    }
    if (yabs == 0.0) u = std::exp(-xabs * xabs);
  }

  // w(-x + iy) = conj(w(x + iy))
  if (x_in < 0.0) v = -v;
  return {u, v};
}

}  // namespace detail

/// Faddeeva function w(z) = exp(-z^2) erfc(-iz) in the closed upper half
/// plane, where it is bounded by 1.
inline ComplexValue faddeeva_w(ComplexValue z) {
  detail::require(std::isfinite(z.real()) && std::isfinite(z.imag()),
                  "faddeeva_w: argument must be finite");
  detail::require(z.imag() >= 0.0, "faddeeva_w: defined here for Im z >= 0 only");
  return detail::faddeeva_upper(z.real(), z.imag());
}

/// Error function of a complex argument.
///
/// Throws OverflowError when the result is not representable (roughly
/// |Im z|^2 - |Re z|^2 > 709); use scaled_dip_term for such arguments.
inline ComplexValue erf_complex(ComplexValue z) {
  detail::require(std::isfinite(z.real()) && std::isfinite(z.imag()),
                  "erf_complex: argument must be finite");
  if (z.imag() == 0.0) return {std::erf(z.real()), 0.0};
  if (std::abs(z) <= detail::erf_series_radius) return detail::erf_maclaurin(z);

  // erf is odd; reduce to Re z >= 0 so that iz lies in the upper half plane.
  const bool flip = z.real() < 0.0;
  const ComplexValue zz = flip ? -z : z;
  const double x = zz.real();
  const double y = zz.imag();

  // exp(-z^2) = exp(y^2 - x^2) * exp(-2ixy)
  const double log_mag = y * y - x * x;
  if (log_mag > 709.0) {
    throw OverflowError(
        "erf_complex: result overflows a double for this argument; "
        "evaluate exp(-y^2) Re erf(x+iy) with scaled_dip_term instead");
  }
  const ComplexValue w = detail::faddeeva_upper(-y, x);
  const double phase = -2.0 * x * y;
  const ComplexValue e = std::exp(log_mag) * ComplexValue(std::cos(phase), std::sin(phase));
  ComplexValue result = ComplexValue(1.0, 0.0) - e * w;
  if (!std::isfinite(result.real()) || !std::isfinite(result.imag())) {
    throw OverflowError(
        "erf_complex: result overflows a double for this argument; "
        "evaluate exp(-y^2) Re erf(x+iy) with scaled_dip_term instead");
  }
  return flip ? -result : result;
}

/// exp(-y^2) * Re[erf(x + iy)], finite for all finite x, y.
///
/// Odd in x, even in y. Reduces to erf(x) on the real axis and vanishes on
/// the imaginary axis.
inline double scaled_dip_term(double x, double y) {
  detail::require(std::isfinite(x) && std::isfinite(y), "scaled_dip_term: arguments must be finite");
  y = std::abs(y);
  if (y == 0.0) return std::erf(x);
  if (x == 0.0) return 0.0;

  const double sign = x < 0.0 ? -1.0 : 1.0;
  x = std::abs(x);

  if (std::hypot(x, y) <= detail::erf_series_radius) {
    return sign * std::exp(-y * y) * detail::erf_maclaurin({x, y}).real();
  }

  // exp(-y^2) erf(z) = exp(-y^2) - exp(-x^2 - 2ixy) w(iz), with iz = -y + ix.
  const ComplexValue w = detail::faddeeva_upper(-y, x);
  const double phase = -2.0 * x * y;
  const double damp = std::exp(-x * x);
  const double re_product = damp * (std::cos(phase) * w.real() - std::sin(phase) * w.imag());
  return sign * (std::exp(-y * y) - re_product);
}

}  // namespace disphom
