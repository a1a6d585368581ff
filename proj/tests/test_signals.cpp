#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "support.hpp"

using namespace oma;

namespace {

RawRecord record(std::vector<double> t, Eigen::MatrixXd x, std::vector<std::string> labels) {
  return RawRecord{std::move(t), std::move(x), std::move(labels)};
}

TimeSeriesSet white_noise(Index channels, Index n, std::uint64_t seed, double dt = 0.002) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  TimeSeriesSet ts;
  ts.dt = dt;
  ts.data.resize(channels, n);
  for (Index c = 0; c < channels; ++c) {
    for (Index k = 0; k < n; ++k) ts.data(c, k) = g(rng);
  }
  return ts;
}

/// Squared two-pass magnitude of the decimation filter at normalised
/// frequency w (rad/sample).
double filtfilt_power(const iir::Sos& sos, double w) {
  const cplx z = std::exp(cplx(0.0, w));
  cplx h = 1.0;
  for (const auto& q : sos) {
    h *= (q.b0 + q.b1 / z + q.b2 / (z * z)) / (1.0 + q.a1 / z + q.a2 / (z * z));
  }
  return std::norm(h) * std::norm(h);
}

}  // namespace

TEST(Ingest, AlignedGridsConcatenate) {
  std::vector<double> t = {0.0, 0.002, 0.004, 0.006};
  Eigen::MatrixXd a(1, 4), b(2, 4);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8, -1, -2, -3, -4;
  const auto ts = ingest_and_align({record(t, a, {"a"}), record(t, b, {"b1", "b2"})}, 500.0);
  ASSERT_EQ(ts.channels(), 3);
  ASSERT_EQ(ts.samples(), 4);
  EXPECT_EQ(ts.data.row(0), a.row(0));
  EXPECT_EQ(ts.data.bottomRows(2), b);
  EXPECT_EQ(ts.labels, (std::vector<std::string>{"a", "b1", "b2"}));
}

TEST(Ingest, GridStartsAtLatestRecord) {
  // offsets of two sensors that start 277.536 s apart
  const double early = 33.054, late = 310.590;
  std::vector<double> t1, t2;
  for (int k = 0; k <= 150000; ++k) t1.push_back(early + k * 0.002);
  for (int k = 0; k <= 5000; ++k) t2.push_back(late + k * 0.002);
  const auto ts = ingest_and_align({record(t1, Eigen::MatrixXd::Ones(1, t1.size()), {}),
                                    record(t2, Eigen::MatrixXd::Ones(1, t2.size()), {})},
                                   500.0);
  EXPECT_DOUBLE_EQ(ts.t0, late);
  EXPECT_EQ(ts.samples(), 5001);
}

TEST(Ingest, LinearInterpolationMidpoint) {
  Eigen::MatrixXd x(1, 2);
  x << 0.0, 2.0;
  const auto ts = ingest_and_align({record({0.0, 1.0}, x, {"v"})}, 2.0);
  ASSERT_EQ(ts.samples(), 3);
  EXPECT_DOUBLE_EQ(ts.data(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(ts.data(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(ts.data(0, 2), 2.0);
}

TEST(Ingest, DuplicateTimestampsKeepFirst) {
  Eigen::MatrixXd x(1, 4);
  x << 0.0, 1.0, 5.0, 2.0;
  const auto ts = ingest_and_align({record({0.0, 0.5, 0.5, 1.0}, x, {})}, 2.0);
  EXPECT_DOUBLE_EQ(ts.data(0, 1), 1.0);
}

TEST(Ingest, Errors) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 3);
  EXPECT_THROW(ingest_and_align({record({0.0, 1.0, 0.5}, x, {})}, 2.0), Error);
  try {
    ingest_and_align({record({0.0, 1.0, 2.0}, x, {}), record({3.0, 4.0, 5.0}, x, {})}, 2.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no overlap"), std::string::npos);
    EXPECT_EQ(e.kind(), ErrorKind::data);
  }
  EXPECT_THROW(ingest_and_align({record({0.0, 1.0, 2.0}, x, {})}, 0.0), Error);
}

TEST(Rotation, ZeroAnglesIsIdentity) {
  const auto ts = white_noise(4, 50, 1);
  const SensorTriad triad{{0, 1, 2}, {}};
  const auto out = apply_rotation(ts, std::span(&triad, 1));
  EXPECT_EQ(out.data, ts.data);
}

TEST(Rotation, QuarterYawMapsXOntoNegativeY) {
  TimeSeriesSet ts;
  ts.dt = 1.0;
  ts.data = Eigen::MatrixXd::Zero(3, 1);
  ts.data(0, 0) = 1.0;
  const SensorTriad triad{{0, 1, 2}, {std::numbers::pi / 2, 0.0, 0.0}};
  const auto out = apply_rotation(ts, std::span(&triad, 1));
  EXPECT_NEAR(out.data(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(out.data(1, 0), -1.0, 1e-15);
  EXPECT_NEAR(out.data(2, 0), 0.0, 1e-15);
}

TEST(Rotation, PreservesNormForRandomAngles) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ts = white_noise(7, 40, 100 + trial);
    const std::vector<SensorTriad> triads = {{{0, 2, 4}, {ang(rng), ang(rng), ang(rng)}},
                                             {{5, 1, 3}, {ang(rng), ang(rng), ang(rng)}}};
    const auto out = apply_rotation(ts, triads);
    for (const auto& t : triads) {
      for (Index k = 0; k < ts.samples(); ++k) {
        const Eigen::Vector3d a(ts.data(t.channels[0], k), ts.data(t.channels[1], k),
                                ts.data(t.channels[2], k));
        const Eigen::Vector3d b(out.data(t.channels[0], k), out.data(t.channels[1], k),
                                out.data(t.channels[2], k));
        EXPECT_NEAR(b.norm(), a.norm(), 1e-12 * a.norm());
      }
    }
    EXPECT_EQ(out.data.row(6), ts.data.row(6));
  }
}

TEST(Rotation, MatrixIsOrthonormal) {
  const Eigen::Matrix3d r = direction_cosine_matrix({0.3, -1.1, 2.4});
  EXPECT_TRUE((r * r.transpose()).isApprox(Eigen::Matrix3d::Identity(), 1e-14));
  EXPECT_NEAR(r.determinant(), 1.0, 1e-14);
}

TEST(Rotation, OverlappingTriadsRejected) {
  const auto ts = white_noise(6, 10, 2);
  const std::vector<SensorTriad> triads = {{{0, 1, 2}, {}}, {{2, 3, 4}, {}}};
  EXPECT_THROW(apply_rotation(ts, triads), Error);
  const std::vector<SensorTriad> repeated = {{{0, 1, 1}, {}}};
  EXPECT_THROW(apply_rotation(ts, repeated), Error);
  const std::vector<SensorTriad> outside = {{{0, 1, 6}, {}}};
  EXPECT_THROW(apply_rotation(ts, outside), Error);
}

TEST(Decimate, UnitFactorIsIdentity) {
  const auto ts = white_noise(2, 100, 3);
  const auto out = decimate(ts, 1);
  EXPECT_EQ(out.data, ts.data);
  EXPECT_EQ(out.dt, ts.dt);
}

TEST(Decimate, FiveHundredHertzToTen) {
  TimeSeriesSet ts;
  ts.dt = 1.0 / 500.0;
  const Index n = 30000;
  ts.data.resize(1, n);
  for (Index k = 0; k < n; ++k) ts.data(0, k) = std::sin(two_pi * 1.0 * k * ts.dt);
  const auto out = decimate(ts, 50);
  EXPECT_NEAR(out.rate(), 10.0, 1e-12);
  ASSERT_EQ(out.samples(), n / 50);
  // away from the record ends the 1 Hz sine survives within 1% amplitude
  double worst = 0.0;
  for (Index k = 20; k < out.samples() - 20; ++k) {
    worst = std::max(worst, std::abs(out.data(0, k) - std::sin(two_pi * out.time(k))));
  }
  EXPECT_LT(worst, 0.01);
}

TEST(Decimate, FactorTooLarge) {
  const auto ts = white_noise(1, 100, 4);
  EXPECT_THROW(decimate(ts, 25), Error);
  EXPECT_THROW(decimate(ts, 0), Error);
}

TEST(Decimate, StopbandBelowMinus40dB) {
  for (int factor : {2, 5, 10, 50}) {
    const auto sos = iir::chebyshev1_lowpass(8, 0.05, 0.8 / factor);
    const double nyq = std::numbers::pi / factor;  // new Nyquist, rad/sample
    for (double w = nyq; w < std::numbers::pi; w += 0.001) {
      ASSERT_LT(filtfilt_power(sos, w), 1e-4) << "factor " << factor << " w " << w;
    }
    // passband within the ripple for the two passes
    for (double w = 0.0; w <= 0.8 * nyq; w += 0.001) {
      ASSERT_NEAR(std::sqrt(filtfilt_power(sos, w)), 1.0, 0.006);
    }
  }
}

TEST(Decimate, BroadbandAliasEnergySuppressed) {
  // averaged periodogram of filtered white noise: nothing above the new
  // Nyquist within 40 dB of the passband level
  const int factor = 10;
  const auto ts = white_noise(1, 1 << 16, 5);
  const auto sos = iir::chebyshev1_lowpass(8, 0.05, 0.8 / factor);
  const Eigen::VectorXd y = iir::filtfilt(sos, ts.data.row(0).transpose(), 3 * 8 * factor);
  const Index seg = 1024;
  Eigen::VectorXd psd = Eigen::VectorXd::Zero(seg / 2 + 1);
  Eigen::FFT<double> fft;
  std::vector<double> x(seg);
  std::vector<cplx> spec;
  for (Index s = 0; s + seg <= y.size(); s += seg) {
    for (Index k = 0; k < seg; ++k) {
      const double hann = 0.5 - 0.5 * std::cos(two_pi * k / seg);
      x[k] = hann * y[s + k];
    }
    fft.fwd(spec, x);
    for (Index k = 0; k <= seg / 2; ++k) psd[k] += std::norm(spec[k]);
  }
  const Index edge = seg / (2 * factor);
  const double pass = psd.segment(1, static_cast<Index>(0.7 * edge)).mean();
  const double stop = psd.segment(edge + 4, seg / 2 - edge - 4).maxCoeff();
  EXPECT_LT(stop / pass, 1e-4);
}

TEST(Correlation, MatchesDirectSum) {
  auto ts = white_noise(3, 700, 11);
  ts.data.row(1) = ts.data.row(1).array() + 3.0;  // non-zero mean
  for (bool unbiased : {false, true}) {
    for (bool detrend : {false, true}) {
      CorrelationOptions opt;
      opt.normalization =
          unbiased ? CorrelationNormalization::unbiased : CorrelationNormalization::biased;
      opt.detrend = detrend;
      const auto corr = next_correlations(ts, 1, 120, opt);
      const auto ref = test::direct_correlation(ts, 1, 120, unbiased, detrend);
      EXPECT_LE((corr.data - ref).cwiseAbs().maxCoeff(), 1e-10 * ref.cwiseAbs().maxCoeff());
    }
  }
}

TEST(Correlation, WhiteNoiseAutocorrelation) {
  const Index n = 200000;
  const auto ts = white_noise(1, n, 12);
  const auto corr = next_correlations(ts, 0, 50);
  EXPECT_NEAR(corr.data(0, 0), 1.0, 5.0 * std::sqrt(2.0 / n));
  for (Index l = 1; l <= 50; ++l) EXPECT_LT(std::abs(corr.data(0, l)), 3.0 / std::sqrt(n));
}

TEST(Correlation, SinusoidAutocorrelation) {
  TimeSeriesSet ts;
  ts.dt = 0.01;
  const Index n = 100000;
  ts.data.resize(1, n);
  for (Index k = 0; k < n; ++k) ts.data(0, k) = std::sin(two_pi * k * ts.dt);
  CorrelationOptions opt;
  opt.normalization = CorrelationNormalization::unbiased;
  const auto corr = next_correlations(ts, 0, 300, opt);
  for (Index l = 0; l <= 300; ++l) {
    EXPECT_NEAR(corr.data(0, l), 0.5 * std::cos(two_pi * l * ts.dt), 2e-3);
  }
}

TEST(Correlation, ChannelEqualToReferenceIsExactAutocorrelation) {
  auto ts = white_noise(3, 500, 13);
  ts.data.row(2) = ts.data.row(0);
  const auto corr = next_correlations(ts, 0, 40);
  EXPECT_EQ(corr.data.row(2), corr.data.row(0));
  EXPECT_EQ(corr.lags(), 41);
  EXPECT_EQ(corr.dt, ts.dt);
}

TEST(Correlation, Errors) {
  const auto ts = white_noise(2, 100, 14);
  EXPECT_THROW(next_correlations(ts, 2, 10), Error);
  EXPECT_THROW(next_correlations(ts, -1, 10), Error);
  EXPECT_THROW(next_correlations(ts, 0, 100), Error);
  EXPECT_THROW(next_correlations(ts, 0, 1), Error);
}

namespace {

CorrelationSet damped_cosine(double dt, Index lags) {
  CorrelationSet c;
  c.dt = dt;
  c.data.resize(1, lags);
  for (Index l = 0; l < lags; ++l) {
    const double t = l * dt;
    c.data(0, l) = std::exp(-t) * std::cos(two_pi * t);
  }
  return c;
}

}  // namespace

TEST(Spectra, DampedCosinePeaksAtOneHertz) {
  const auto corr = damped_cosine(0.1, 201);
  const auto sp = correlations_to_spectra(corr, {0.0, 5.0});
  Index peak = 0;
  sp.data.row(0).cwiseAbs().maxCoeff(&peak);
  Index nearest = 0;
  (sp.freqs.array() - 1.0).abs().minCoeff(&nearest);
  EXPECT_EQ(peak, nearest);
}

TEST(Spectra, MatchDirectDft) {
  const auto corr = damped_cosine(0.1, 151);
  const auto sp = correlations_to_spectra(corr, {0.2, 4.0});
  for (Index k = 0; k < sp.size(); ++k) {
    const cplx ref = test::direct_dft(corr.data.row(0), 150, 0.1, sp.freqs[k]);
    EXPECT_LT(std::abs(sp.data(0, k) - ref), 1e-12);
  }
}

TEST(Spectra, GridSpacingAndBand) {
  const auto corr = damped_cosine(0.1, 201);
  const auto sp = correlations_to_spectra(corr, {0.0, 5.0});
  EXPECT_NEAR(sp.freqs[1] - sp.freqs[0], 1.0 / (200 * 0.1), 1e-12);
  EXPECT_GT(sp.freqs[0], 0.0);
  EXPECT_LE(sp.freqs[sp.size() - 1], 5.0);
  const auto s = sp.s_values();
  EXPECT_DOUBLE_EQ(s[3].imag(), two_pi * sp.freqs[3]);
  EXPECT_EQ(s[3].real(), 0.0);
}

TEST(Spectra, ZeroInZeroOut) {
  CorrelationSet c;
  c.dt = 0.1;
  c.data = Eigen::MatrixXd::Zero(2, 64);
  const auto sp = correlations_to_spectra(c, {0.0, 5.0});
  EXPECT_EQ(sp.data.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Spectra, BitIdenticalRerun) {
  const auto ts = white_noise(3, 4000, 15);
  const auto a = correlations_to_spectra(next_correlations(ts, 0, 500), {0.0, 250.0});
  const auto b = correlations_to_spectra(next_correlations(ts, 0, 500), {0.0, 250.0});
  EXPECT_EQ(a.data, b.data);
  EXPECT_TRUE(a.data.allFinite());
}

TEST(Spectra, Errors) {
  const auto corr = damped_cosine(0.1, 201);
  EXPECT_THROW(correlations_to_spectra(corr, {0.01, 0.02}), Error);  // no bins
  EXPECT_THROW(correlations_to_spectra(corr, {0.0, 6.0}), Error);    // past Nyquist
  EXPECT_THROW(correlations_to_spectra(corr, {2.0, 1.0}), Error);
}
