#pragma once

// Independent oracles and generators shared by the test suites.

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "oma/oma.hpp"

namespace oma::test {

/// Direct O(N L) correlation sum.
inline Eigen::MatrixXd direct_correlation(const TimeSeriesSet& ts, Index ref, Index max_lag,
                                          bool unbiased, bool detrend) {
  const Index n = ts.samples();
  Eigen::MatrixXd y = ts.data;
  if (detrend) y.colwise() -= y.rowwise().mean();
  Eigen::MatrixXd r(ts.channels(), max_lag + 1);
  for (Index c = 0; c < ts.channels(); ++c) {
    for (Index l = 0; l <= max_lag; ++l) {
      long double acc = 0.0L;
      for (Index t = 0; t + l < n; ++t) acc += static_cast<long double>(y(ref, t)) * y(c, t + l);
      r(c, l) = static_cast<double>(acc / (unbiased ? n - l : n));
    }
  }
  return r;
}

/// Direct DFT of lags 0..L-1 at one frequency, scaled by dt.
inline cplx direct_dft(const Eigen::RowVectorXd& decay, Index length, double dt, double f) {
  cplx acc = 0.0;
  for (Index l = 0; l < length; ++l) {
    acc += decay[l] * std::exp(cplx(0.0, -two_pi * f * static_cast<double>(l) * dt));
  }
  return dt * acc;
}

/// Response to a force held for one sample, propagated with the exact
/// zero-order-hold discretisation of the first-order state equations.
inline Eigen::MatrixXd state_space_response(const StructuralModel& m, Index fdof, double amplitude,
                                            double fs, Index samples) {
  const Index n = m.size();
  const Eigen::MatrixXd minv = m.M.inverse();
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(2 * n + 1, 2 * n + 1);
  aug.block(0, n, n, n).setIdentity();
  aug.block(n, 0, n, n) = -minv * m.K;
  aug.block(n, n, n, n) = -minv * m.C;
  aug.block(n, 2 * n, n, 1) = minv.col(fdof);
  const Eigen::MatrixXd e = (aug / fs).exp();
  const Eigen::MatrixXd ad = e.topLeftCorner(2 * n, 2 * n);
  const Eigen::VectorXd bd = e.topRightCorner(2 * n, 1);

  const auto w = m.translation_dofs();
  Eigen::MatrixXd y(static_cast<Index>(w.size()), samples);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2 * n);
  for (Index k = 0; k < samples; ++k) {
    for (std::size_t i = 0; i < w.size(); ++i) y(static_cast<Index>(i), k) = x[w[i]];
    x = ad * x + (k == 0 ? amplitude : 0.0) * bd;
  }
  return y;
}

/// Random stable conjugate-closed poles with modes spread over (f_lo, f_hi).
inline std::vector<cplx> random_poles(std::mt19937_64& rng, int pairs, double f_lo, double f_hi) {
  std::uniform_real_distribution<double> z(0.005, 0.08);
  std::vector<cplx> out;
  const double step = (f_hi - f_lo) / pairs;
  for (int i = 0; i < pairs; ++i) {
    std::uniform_real_distribution<double> f(f_lo + (i + 0.2) * step, f_lo + (i + 0.8) * step);
    out.push_back(pole_from_modal(f(rng), z(rng)));
    out.push_back(std::conj(out.back()));
  }
  return frvf_detail::canonical(out);
}

/// Exactly rational spectra with conjugate residues and real d, e.
inline SpectrumSet rational_spectra(const std::vector<cplx>& poles, const Eigen::VectorXd& freqs,
                                    int channels, std::mt19937_64& rng, bool offsets = true) {
  std::normal_distribution<double> g(0.0, 1.0);
  RationalModel m;
  m.poles = poles;
  m.residues.resize(channels, static_cast<Index>(poles.size()));
  m.d = Eigen::VectorXd::Zero(channels);
  m.e = Eigen::VectorXd::Zero(channels);
  for (int v = 0; v < channels; ++v) {
    for (std::size_t n = 0; n < poles.size(); ++n) {
      if (poles[n].imag() > 0) {
        const cplx r(g(rng), g(rng));
        m.residues(v, static_cast<Index>(n)) = r * std::abs(poles[n]);
        m.residues(v, static_cast<Index>(n) + 1) = std::conj(r) * std::abs(poles[n]);
      } else if (poles[n].imag() == 0) {
        m.residues(v, static_cast<Index>(n)) = g(rng) * std::abs(poles[n]);
      }
    }
    if (offsets) {
      m.d[v] = 0.1 * g(rng);
      m.e[v] = 1e-4 * g(rng);
    }
  }
  return evaluate(m, freqs);
}

inline Eigen::VectorXd linspace(double a, double b, Index n) {
  return Eigen::VectorXd::LinSpaced(n, a, b);
}

inline double max_relative_pole_gap(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double gap = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) gap = std::max(gap, std::abs(a[i] - b[i]) / std::abs(b[i]));
  return gap;
}

/// Beam benchmark artefacts, built once per process.
struct BeamBench {
  StructuralModel model;
  ModeSet truth;
  TimeSeriesSet response;
  CorrelationSet corr;
  SpectrumSet spectra;

  static const BeamBench& get() {
    static const BeamBench bench = [] {
      BeamBench b;
      b.model = assemble_model(BeamSpec::reference());
      b.truth = analytic_modes(b.model);
      b.response = impulse_response(b.model, ImpulseOptions{});
      b.corr = next_correlations(b.response, 0, 2000);
      b.spectra = correlations_to_spectra(b.corr, Band{0.0, 1300.0});
      return b;
    }();
    return bench;
  }
};

}  // namespace oma::test
