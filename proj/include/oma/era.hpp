#pragma once

// Eigensystem realisation from NExT correlation decays.

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "oma/error.hpp"
#include "oma/types.hpp"

namespace oma {

enum class ShiftMode {
  /// H1 is H0 advanced by `shift` lags; poles divide by dt * shift.
  lag_advance,
  /// H0 starts `shift` lags into the decays and H1 is advanced by one lag.
  start_offset,
};

struct EraConfig {
  Index rows = 700;        ///< block rows (each holds every channel)
  Index cols = 800;
  Index truncation = 150;  ///< retained singular values = state dimension
  Index shift = 10;
  ShiftMode shift_mode = ShiftMode::start_offset;

  void validate() const {
    require(rows >= 1 && cols >= 1, ErrorKind::usage, "era: rows and cols must be positive");
    require(truncation >= 2, ErrorKind::usage, "era: truncation must be at least 2");
    require(shift >= 1, ErrorKind::usage, "era: shift must be at least 1");
  }

  Index first_lag() const { return shift_mode == ShiftMode::start_offset ? shift : 0; }
  Index advance() const { return shift_mode == ShiftMode::start_offset ? 1 : shift; }
  /// Highest lag index read by the pair of Hankel matrices.
  Index last_lag() const { return first_lag() + advance() + rows + cols - 2; }
};

struct EraRealization {
  Eigen::MatrixXd A;      ///< discrete transition over one Hankel advance
  Eigen::MatrixXd C_out;  ///< channels x states
  double dt = 0.0;        ///< time represented by one application of A
};

/// H0(i*V + c, j) = R_c(first + i + j), H1 the same read `advance` lags later.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> build_hankel(const CorrelationSet& corr,
                                                                const EraConfig& cfg) {
  cfg.validate();
  require(cfg.last_lag() < corr.lags(), ErrorKind::usage,
          "era: " + std::to_string(corr.lags()) + " lags are too few for a " +
              std::to_string(cfg.rows) + "x" + std::to_string(cfg.cols) + " Hankel with shift " +
              std::to_string(cfg.shift));
  const Index v = corr.channels();
  const Index first = cfg.first_lag();
  const Index adv = cfg.advance();
  Eigen::MatrixXd h0(cfg.rows * v, cfg.cols);
  Eigen::MatrixXd h1(cfg.rows * v, cfg.cols);
  for (Index j = 0; j < cfg.cols; ++j) {
    for (Index i = 0; i < cfg.rows; ++i) {
      h0.block(i * v, j, v, 1) = corr.data.col(first + i + j);
      h1.block(i * v, j, v, 1) = corr.data.col(first + i + j + adv);
    }
  }
  return {std::move(h0), std::move(h1)};
}

/// Keeps one SVD of H0 so realisations at several truncations (a
/// stabilisation sweep) cost only the reduced eigenproblem each.
class EraRealizer {
 public:
  EraRealizer(const CorrelationSet& corr, const EraConfig& cfg)
      : channels_(corr.channels()), dt_(corr.dt * static_cast<double>(cfg.advance())) {
    require(corr.dt > 0.0, ErrorKind::data, "era: invalid sampling step");
    require(corr.data.allFinite(), ErrorKind::data, "era: non-finite correlations");
    auto [h0, h1] = build_hankel(corr, cfg);
    // QR-preconditioned Jacobi keeps tiny trailing singular values positive;
    // divide-and-conquer deflates them to exact zeros, which would cap the
    // state dimension at the numerical rank of clean data.
    Eigen::JacobiSVD<Eigen::MatrixXd, Eigen::ColPivHouseholderQRPreconditioner> svd(
        h0, Eigen::ComputeThinU | Eigen::ComputeThinV);
    sigma_ = svd.singularValues();
    u_ = svd.matrixU();
    // H1 V is all a realisation ever needs from H1
    h1v_ = h1 * svd.matrixV();
  }

  const Eigen::VectorXd& singular_values() const { return sigma_; }

  /// Strictly positive singular values; each retained state needs S^{-1/2}.
  Index rank() const {
    Index r = 0;
    while (r < sigma_.size() && sigma_[r] > 0.0 && std::isfinite(sigma_[r])) ++r;
    return r;
  }

  EraRealization realize(Index truncation) const {
    require(truncation >= 2, ErrorKind::usage, "era: truncation must be at least 2");
    require(truncation <= rank(), ErrorKind::numerical,
            "era: truncation " + std::to_string(truncation) + " exceeds matrix rank " +
                std::to_string(rank()));
    const Index n = truncation;
    const Eigen::VectorXd isq = sigma_.head(n).cwiseSqrt().cwiseInverse();
    EraRealization r;
    r.A = isq.asDiagonal() * (u_.leftCols(n).transpose() * h1v_.leftCols(n)) * isq.asDiagonal();
    r.C_out = u_.topLeftCorner(channels_, n) * sigma_.head(n).cwiseSqrt().asDiagonal();
    r.dt = dt_;
    return r;
  }

  ModeSet modes(Index truncation) const {
    const EraRealization r = realize(truncation);
    Eigen::EigenSolver<Eigen::MatrixXd> es(r.A);
    require(es.info() == Eigen::Success, ErrorKind::numerical, "era: eigenvalue solver failed");
    const Eigen::MatrixXcd shapes = r.C_out.cast<cplx>() * es.eigenvectors();
    ModeSet out;
    for (Index k = 0; k < es.eigenvalues().size(); ++k) {
      const cplx lambda = es.eigenvalues()[k];
      if (lambda.imag() < 0.0) continue;
      if (lambda.imag() == 0.0 && lambda.real() > 0.0) {
        out.diagnostics.push_back("real eigenvalue " + std::to_string(lambda.real()) +
                                  " excluded from modal extraction");
        continue;
      }
      if (lambda == cplx(0.0, 0.0)) {
        out.diagnostics.push_back("zero eigenvalue excluded from modal extraction");
        continue;
      }
      const cplx p = std::log(lambda) / r.dt;
      out.modes.push_back(make_mode(p, shapes.col(k), static_cast<int>(truncation)));
    }
    out.sort_by_frequency();
    return out;
  }

 private:
  Index channels_;
  double dt_;
  Eigen::VectorXd sigma_;
  Eigen::MatrixXd u_;
  Eigen::MatrixXd h1v_;
};

inline EraRealization realize_era(const CorrelationSet& corr, const EraConfig& cfg) {
  return EraRealizer(corr, cfg).realize(cfg.truncation);
}

inline ModeSet fit_era(const CorrelationSet& corr, const EraConfig& cfg) {
  return EraRealizer(corr, cfg).modes(cfg.truncation);
}

}  // namespace oma
