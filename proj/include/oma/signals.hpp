#pragma once

// Multichannel preprocessing and NExT correlation/spectrum estimation.

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "oma/error.hpp"
#include "oma/iir.hpp"
#include "oma/types.hpp"

namespace oma {

/// One sensor's raw output: timestamps may be duplicated or irregular.
struct RawRecord {
  std::vector<double> timestamps;  // seconds
  Eigen::MatrixXd samples;         // channels x timestamps
  std::vector<std::string> labels;
};

namespace detail {

struct CleanRecord {
  std::vector<double> t;
  std::vector<Index> columns;  // kept sample columns
};

inline CleanRecord drop_duplicate_timestamps(const RawRecord& rec, std::size_t index) {
  const auto name = "record " + std::to_string(index);
  require(rec.samples.cols() == static_cast<Index>(rec.timestamps.size()), ErrorKind::data,
          name + ": sample count does not match timestamp count");
  CleanRecord out;
  for (std::size_t k = 0; k < rec.timestamps.size(); ++k) {
    const double t = rec.timestamps[k];
    require(std::isfinite(t), ErrorKind::data, name + ": non-finite timestamp");
    if (!out.t.empty()) {
      if (t == out.t.back()) continue;
      require(t > out.t.back(), ErrorKind::data,
              name + ": timestamps are not monotonic at sample " + std::to_string(k));
    }
    out.t.push_back(t);
    out.columns.push_back(static_cast<Index>(k));
  }
  return out;
}

}  // namespace detail

/// Resamples every record onto one uniform grid covering the overlap of all
/// record spans. Duplicate timestamps keep their first occurrence; values are
/// linearly interpolated and never extrapolated.
inline TimeSeriesSet ingest_and_align(const std::vector<RawRecord>& records, double target_rate) {
  require(!records.empty(), ErrorKind::data, "ingest: no records");
  require(target_rate > 0.0 && std::isfinite(target_rate), ErrorKind::usage,
          "ingest: target rate must be positive");

  std::vector<detail::CleanRecord> clean;
  double start = -std::numeric_limits<double>::infinity();
  double end = std::numeric_limits<double>::infinity();
  Index total_channels = 0;
  for (std::size_t r = 0; r < records.size(); ++r) {
    clean.push_back(detail::drop_duplicate_timestamps(records[r], r));
    require(clean.back().t.size() >= 2, ErrorKind::data,
            "ingest: record " + std::to_string(r) + " has fewer than two samples");
    start = std::max(start, clean.back().t.front());
    end = std::min(end, clean.back().t.back());
    total_channels += records[r].samples.rows();
  }
  require(end > start, ErrorKind::data, "ingest: no overlap between record spans");

  const double dt = 1.0 / target_rate;
  const auto n = static_cast<Index>(std::floor((end - start) / dt * (1.0 + 1e-12) + 1e-9)) + 1;
  require(n >= 2, ErrorKind::data, "ingest: no overlap long enough for two samples");

  TimeSeriesSet out;
  out.dt = dt;
  out.t0 = start;
  out.data.resize(total_channels, n);

  Index row = 0;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& t = clean[r].t;
    const auto& cols = clean[r].columns;
    const Index m = static_cast<Index>(t.size());
    Index j = 0;
    for (Index k = 0; k < n; ++k) {
      const double tk = start + static_cast<double>(k) * dt;
      while (j + 2 < m && t[j + 1] <= tk) ++j;
      double w = (tk - t[j]) / (t[j + 1] - t[j]);
      // sub-nanosecond offsets snap to the stored sample
      if (w < 1e-9) w = 0.0;
      if (w > 1.0 - 1e-9) w = 1.0;
      const auto lo = records[r].samples.col(cols[j]);
      const auto hi = records[r].samples.col(cols[j + 1]);
      out.data.block(row, k, lo.size(), 1) = (1.0 - w) * lo + w * hi;
    }
    const auto& labels = records[r].labels;
    for (Index c = 0; c < records[r].samples.rows(); ++c) {
      out.labels.push_back(c < static_cast<Index>(labels.size())
                               ? labels[c]
                               : "r" + std::to_string(r) + "c" + std::to_string(c));
    }
    row += records[r].samples.rows();
  }
  out.validate();
  return out;
}

/// Yaw, pitch, roll in radians.
struct RotationAngles {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

/// Aerospace yaw-pitch-roll direction cosine matrix (local -> global).
inline Eigen::Matrix3d direction_cosine_matrix(const RotationAngles& a) {
  const double cy = std::cos(a.yaw), sy = std::sin(a.yaw);
  const double cp = std::cos(a.pitch), sp = std::sin(a.pitch);
  const double cr = std::cos(a.roll), sr = std::sin(a.roll);
  Eigen::Matrix3d r;
  r << cy * cp, sy * cp, -sp,
       cy * sp * sr - sy * cr, sy * sp * sr + cy * cr, cp * sr,
       cy * sp * cr + sy * sr, sy * sp * cr - cy * sr, cp * cr;
  return r;
}

/// Three channels holding a sensor's local x, y, z axes.
struct SensorTriad {
  std::array<Index, 3> channels{};
  RotationAngles angles;
};

inline TimeSeriesSet apply_rotation(const TimeSeriesSet& ts, std::span<const SensorTriad> triads) {
  std::vector<bool> used(static_cast<std::size_t>(ts.channels()), false);
  for (const auto& triad : triads) {
    require(std::isfinite(triad.angles.yaw) && std::isfinite(triad.angles.pitch) &&
                std::isfinite(triad.angles.roll),
            ErrorKind::usage, "rotation: angles must be finite");
    for (Index c : triad.channels) {
      require(c >= 0 && c < ts.channels(), ErrorKind::usage,
              "rotation: channel " + std::to_string(c) + " out of range");
      require(!used[static_cast<std::size_t>(c)], ErrorKind::usage,
              "rotation: overlapping triads at channel " + std::to_string(c));
      used[static_cast<std::size_t>(c)] = true;
    }
  }

  TimeSeriesSet out = ts;
  for (const auto& triad : triads) {
    const Eigen::Matrix3d r = direction_cosine_matrix(triad.angles);
    Eigen::Matrix3Xd local(3, ts.samples());
    for (int a = 0; a < 3; ++a) local.row(a) = ts.data.row(triad.channels[a]);
    const Eigen::Matrix3Xd global = r * local;
    for (int a = 0; a < 3; ++a) out.data.row(triad.channels[a]) = global.row(a);
  }
  return out;
}

/// Zero-phase anti-alias low-pass at 0.8 x the new Nyquist, then keeps every
/// `factor`-th sample starting from the first.
inline TimeSeriesSet decimate(const TimeSeriesSet& ts, int factor) {
  require(factor >= 1, ErrorKind::usage, "decimate: factor must be at least 1");
  if (factor == 1) return ts;
  require(static_cast<Index>(factor) * 4 < ts.samples(), ErrorKind::data,
          "decimate: factor " + std::to_string(factor) + " too large for " +
              std::to_string(ts.samples()) + " samples");

  constexpr int order = 8;
  const iir::Sos sos = iir::chebyshev1_lowpass(order, 0.05, 0.8 / factor);
  const Index pad = 3 * order * factor;
  const Index n_out = (ts.samples() + factor - 1) / factor;

  TimeSeriesSet out;
  out.dt = ts.dt * factor;
  out.t0 = ts.t0;
  out.labels = ts.labels;
  out.data.resize(ts.channels(), n_out);
  for (Index c = 0; c < ts.channels(); ++c) {
    const Eigen::VectorXd filtered = iir::filtfilt(sos, ts.data.row(c).transpose(), pad);
    for (Index k = 0; k < n_out; ++k) out.data(c, k) = filtered[k * factor];
  }
  return out;
}

enum class CorrelationNormalization {
  biased,    ///< 1/N for every lag
  unbiased,  ///< 1/(N - l)
};

struct CorrelationOptions {
  CorrelationNormalization normalization = CorrelationNormalization::biased;
  bool detrend = true;  ///< subtract each channel's mean first
};

/// NExT correlation decays against one reference channel:
/// R_i(l) = norm(l) * sum_t y_ref(t) * y_i(t + l), l = 0..max_lag.
///
/// Computed through zero-padded FFTs; each channel is processed independently
/// in a fixed order so results do not depend on scheduling.
inline CorrelationSet next_correlations(const TimeSeriesSet& ts, Index reference, Index max_lag,
                                        const CorrelationOptions& opt = {}) {
  ts.validate();
  const Index n = ts.samples();
  require(reference >= 0 && reference < ts.channels(), ErrorKind::usage,
          "next: reference channel " + std::to_string(reference) + " out of range");
  require(max_lag >= 2 && max_lag < n, ErrorKind::usage,
          "next: max_lag must satisfy 2 <= max_lag < samples");

  Index nfft = 1;
  while (nfft < n + max_lag) nfft *= 2;

  Eigen::FFT<double> fft;
  auto spectrum = [&](Index c) {
    std::vector<double> x(static_cast<std::size_t>(nfft), 0.0);
    const double mean = opt.detrend ? ts.data.row(c).mean() : 0.0;
    for (Index k = 0; k < n; ++k) x[static_cast<std::size_t>(k)] = ts.data(c, k) - mean;
    std::vector<cplx> out;
    fft.fwd(out, x);
    return out;
  };

  const std::vector<cplx> ref = spectrum(reference);
  CorrelationSet corr;
  corr.dt = ts.dt;
  corr.reference = reference;
  corr.labels = ts.labels;
  corr.data.resize(ts.channels(), max_lag + 1);

  std::vector<cplx> prod(static_cast<std::size_t>(nfft));
  std::vector<double> lagged;
  for (Index c = 0; c < ts.channels(); ++c) {
    const std::vector<cplx> yc = spectrum(c);
    for (std::size_t k = 0; k < prod.size(); ++k) prod[k] = std::conj(ref[k]) * yc[k];
    fft.inv(lagged, prod);
    for (Index l = 0; l <= max_lag; ++l) {
      const double norm = opt.normalization == CorrelationNormalization::biased
                              ? static_cast<double>(n)
                              : static_cast<double>(n - l);
      corr.data(c, l) = lagged[static_cast<std::size_t>(l)] / norm;
    }
  }
  return corr;
}

/// One-sided DFT of each decay, treated as an impulse-response-like record.
///
/// The transform covers the first lags()-1 samples, so the grid spacing is
/// 1/((lags()-1)*dt). Values are scaled by dt to approximate the continuous
/// Fourier transform. The DC bin is never returned.
inline SpectrumSet correlations_to_spectra(const CorrelationSet& corr, Band band) {
  require(corr.lags() >= 3, ErrorKind::usage, "spectra: need at least three lags");
  require(corr.dt > 0.0, ErrorKind::data, "spectra: invalid sampling step");
  const Index n = corr.lags() - 1;
  const double nyquist = 0.5 / corr.dt;
  require(band.f_min >= 0.0 && band.f_max > band.f_min &&
              band.f_max <= nyquist * (1.0 + 1e-12),
          ErrorKind::usage, "spectra: band must lie within (0, Nyquist]");

  const double df = 1.0 / (static_cast<double>(n) * corr.dt);
  std::vector<Index> bins;
  for (Index k = 1; k <= n / 2; ++k) {
    if (band.contains(static_cast<double>(k) * df)) bins.push_back(k);
  }
  require(!bins.empty(), ErrorKind::usage, "spectra: band contains no frequency bins");

  SpectrumSet out;
  out.labels = corr.labels;
  out.freqs.resize(static_cast<Index>(bins.size()));
  for (std::size_t b = 0; b < bins.size(); ++b) {
    out.freqs[static_cast<Index>(b)] = static_cast<double>(bins[b]) * df;
  }
  out.data.resize(corr.channels(), static_cast<Index>(bins.size()));

  Eigen::FFT<double> fft;
  std::vector<double> x(static_cast<std::size_t>(n));
  std::vector<cplx> spec;
  for (Index c = 0; c < corr.channels(); ++c) {
    for (Index l = 0; l < n; ++l) x[static_cast<std::size_t>(l)] = corr.data(c, l);
    fft.fwd(spec, x);
    for (std::size_t b = 0; b < bins.size(); ++b) {
      out.data(c, static_cast<Index>(b)) = corr.dt * spec[static_cast<std::size_t>(bins[b])];
    }
  }
  return out;
}

}  // namespace oma
