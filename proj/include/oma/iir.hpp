#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "oma/error.hpp"

namespace oma::iir {

/// Direct-form II transposed biquad, a0 normalised to one.
struct Biquad {
  double b0, b1, b2;
  double a1, a2;

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

using Sos = std::vector<Biquad>;

/// Chebyshev type I low-pass as second-order sections.
///
/// `cutoff` is the passband edge as a fraction of Nyquist, `order` must be
/// even. The passband gain is centred inside the ripple band, so every
/// passband frequency is within ripple_db/2 of unity.
inline Sos chebyshev1_lowpass(int order, double ripple_db, double cutoff) {
  require(order > 0 && order % 2 == 0, ErrorKind::usage, "chebyshev1: order must be even");
  require(cutoff > 0.0 && cutoff < 1.0, ErrorKind::usage,
          "chebyshev1: cutoff must lie in (0, 1)");
  require(ripple_db > 0.0, ErrorKind::usage, "chebyshev1: ripple must be positive");

  const double eps2 = std::pow(10.0, ripple_db / 10.0) - 1.0;
  const double mu = std::asinh(1.0 / std::sqrt(eps2)) / order;
  const double warped = std::tan(std::numbers::pi * cutoff / 2.0);

  Sos sos;
  sos.reserve(order / 2);
  for (int k = 1; k <= order / 2; ++k) {
    const double theta = (2.0 * k - 1.0) * std::numbers::pi / (2.0 * order);
    const std::complex<double> analog(-std::sinh(mu) * std::sin(theta),
                                      std::cosh(mu) * std::cos(theta));
    // bilinear map with s = (z - 1) / (z + 1)
    const std::complex<double> z = (1.0 + analog * warped) / (1.0 - analog * warped);
    const double a1 = -2.0 * z.real();
    const double a2 = std::norm(z);
    const double g = (1.0 + a1 + a2) / 4.0;  // unit gain at DC
    sos.push_back({g, 2.0 * g, g, a1, a2});
  }
  // Even orders peak at sqrt(1 + eps^2) once DC is unity.
  const double centre = std::pow(1.0 + eps2, -0.25);
  sos.front().b0 *= centre;
  sos.front().b1 *= centre;
  sos.front().b2 *= centre;
  return sos;
}

/// Single forward pass. `x0` seeds every section with its steady-state
/// response to a constant input of that value.
inline Eigen::VectorXd sosfilt(const Sos& sos, const Eigen::VectorXd& x, double x0) {
  std::vector<std::array<double, 2>> state(sos.size());
  double level = x0;
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const Biquad& q = sos[s];
    const double out = q.dc_gain() * level;
    state[s] = {out - q.b0 * level, q.b2 * level - q.a2 * out};
    level = out;
  }

  Eigen::VectorXd y(x.size());
  for (Eigen::Index n = 0; n < x.size(); ++n) {
    double v = x[n];
    for (std::size_t s = 0; s < sos.size(); ++s) {
      const Biquad& q = sos[s];
      auto& z = state[s];
      const double out = q.b0 * v + z[0];
      z[0] = q.b1 * v - q.a1 * out + z[1];
      z[1] = q.b2 * v - q.a2 * out;
      v = out;
    }
    y[n] = v;
  }
  return y;
}

/// Zero-phase forward-backward filtering with odd-reflection edge padding.
inline Eigen::VectorXd filtfilt(const Sos& sos, const Eigen::VectorXd& x, Eigen::Index pad) {
  const Eigen::Index n = x.size();
  require(n >= 2, ErrorKind::data, "filtfilt: need at least two samples");
  pad = std::min(pad, n - 1);

  Eigen::VectorXd ext(n + 2 * pad);
  for (Eigen::Index j = 0; j < pad; ++j) {
    ext[j] = 2.0 * x[0] - x[pad - j];
    ext[pad + n + j] = 2.0 * x[n - 1] - x[n - 2 - j];
  }
  ext.segment(pad, n) = x;

  Eigen::VectorXd fwd = sosfilt(sos, ext, ext[0]);
  Eigen::VectorXd rev = fwd.reverse();
  Eigen::VectorXd back = sosfilt(sos, rev, rev[0]);
  return back.reverse().segment(pad, n);
}

}  // namespace oma::iir
