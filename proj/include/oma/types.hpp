#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oma/error.hpp"

namespace oma {

using Index = Eigen::Index;
using cplx = std::complex<double>;

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Closed frequency interval [f_min, f_max] in Hz.
struct Band {
  double f_min = 0.0;
  double f_max = 0.0;

  bool contains(double f) const { return f >= f_min && f <= f_max; }
};

/// Uniformly sampled multichannel record (channels x samples).
struct TimeSeriesSet {
  double dt = 0.0;
  double t0 = 0.0;
  Eigen::MatrixXd data;
  std::vector<std::string> labels;

  Index channels() const { return data.rows(); }
  Index samples() const { return data.cols(); }
  double rate() const { return 1.0 / dt; }
  double time(Index k) const { return t0 + static_cast<double>(k) * dt; }

  void validate() const {
    require(dt > 0.0 && std::isfinite(dt), ErrorKind::data,
            "time series: sampling step must be positive");
    require(data.allFinite(), ErrorKind::data,
            "time series: non-finite sample values");
    require(labels.empty() || static_cast<Index>(labels.size()) == channels(),
            ErrorKind::data, "time series: label count does not match channels");
  }
};

/// Correlation decays R(ref, i)(l*dt) for l = 0..lags()-1 (channels x lags).
struct CorrelationSet {
  double dt = 0.0;
  Index reference = 0;
  Eigen::MatrixXd data;
  std::vector<std::string> labels;

  Index channels() const { return data.rows(); }
  Index lags() const { return data.cols(); }
};

/// Complex spectra sampled on a shared, non-negative frequency grid.
struct SpectrumSet {
  Eigen::VectorXd freqs;   // Hz, strictly increasing
  Eigen::MatrixXcd data;   // channels x freqs
  std::vector<std::string> labels;

  Index channels() const { return data.rows(); }
  Index size() const { return freqs.size(); }

  /// Laplace points s_k = i*2*pi*f_k.
  Eigen::VectorXcd s_values() const {
    Eigen::VectorXcd s(freqs.size());
    for (Index k = 0; k < freqs.size(); ++k) s[k] = cplx(0.0, two_pi * freqs[k]);
    return s;
  }
};

/// Inverse of modal_from_pole, returning the upper-half-plane representative.
inline cplx pole_from_modal(double frequency, double damping) {
  const double wn = two_pi * frequency;
  return {-damping * wn, wn * std::sqrt(1.0 - damping * damping)};
}

struct Mode {
  double frequency = 0.0;  // Hz
  double damping = 0.0;    // ratio
  Eigen::VectorXcd shape;
  std::optional<int> source_order;  // empty for analytic modes

  cplx pole() const { return pole_from_modal(frequency, damping); }
};

struct ModeSet {
  std::vector<Mode> modes;
  std::vector<std::string> diagnostics;

  std::size_t size() const { return modes.size(); }
  bool empty() const { return modes.empty(); }
  const Mode& operator[](std::size_t i) const { return modes[i]; }

  void sort_by_frequency() {
    std::stable_sort(modes.begin(), modes.end(), [](const Mode& a, const Mode& b) {
      return a.frequency < b.frequency;
    });
  }
};

/// Scales a shape to unit 2-norm and rotates its largest-magnitude entry onto
/// the positive real axis. Zero vectors are left untouched.
inline void normalize_shape(Eigen::VectorXcd& phi) {
  const double norm = phi.norm();
  if (phi.size() == 0 || norm == 0.0) return;
  Index imax = 0;
  phi.cwiseAbs().maxCoeff(&imax);
  const cplx phase = std::conj(phi[imax]) / std::abs(phi[imax]);
  phi *= phase / norm;
  phi[imax] = cplx(std::abs(phi[imax]), 0.0);
}

/// Natural frequency [Hz] and damping ratio of a continuous-time pole.
inline std::pair<double, double> modal_from_pole(cplx p) {
  const double wn = std::abs(p);
  return {wn / two_pi, -p.real() / wn};
}

inline Mode make_mode(cplx pole, Eigen::VectorXcd shape, std::optional<int> order) {
  const auto [f, zeta] = modal_from_pole(pole);
  normalize_shape(shape);
  return Mode{f, zeta, std::move(shape), order};
}

}  // namespace oma
