#pragma once

// Fast and relaxed vector fitting of multichannel spectra with a common pole
// set, plus residue identification and modal extraction.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oma/error.hpp"
#include "oma/types.hpp"

namespace oma {

enum class Weighting {
  none,            ///< w = 1
  weak_inverse,    ///< w = 1/sqrt|f|
  strong_inverse,  ///< w = 1/|f|
};

struct FitConfig {
  int n_poles = 16;
  int n_iterations = 5;
  Weighting weighting = Weighting::none;
  bool relaxed = true;
  bool fast = true;
  bool include_d = true;
  bool include_e = true;
  /// Raise on numerically rank-deficient least-squares systems instead of
  /// taking the minimum-norm solution.  High orders on clean data need the
  /// latter: surplus poles leave sigma with a null space.
  bool strict_rank = false;
  std::optional<Band> band;  ///< trial-pole span and fitted range; whole grid if empty

  void validate() const {
    require(n_poles >= 2 && n_poles % 2 == 0, ErrorKind::usage,
            "frvf: n_poles must be a positive even count");
    require(n_iterations >= 1, ErrorKind::usage, "frvf: n_iterations must be at least 1");
    if (band) {
      require(band->f_min >= 0.0 && band->f_max > band->f_min, ErrorKind::usage,
              "frvf: band must satisfy 0 <= f_min < f_max");
    }
  }
};

enum class PoleStage { trial, final };

/// Poles in canonical order: each complex pair as (upper, lower) sorted by
/// imaginary part, then real poles in ascending order.
struct PoleSet {
  std::vector<cplx> poles;
  PoleStage stage = PoleStage::trial;

  Index size() const { return static_cast<Index>(poles.size()); }
};

struct SigmaEstimate {
  Eigen::VectorXcd residues;  ///< one per pole, same order as the pole set
  double d_sigma = 1.0;
  bool rank_deficient = false;  ///< minimum-norm solution was used
};

/// H_v(s) = sum_n R(v, n) / (s - p_n) + d_v + s e_v
struct RationalModel {
  std::vector<cplx> poles;
  Eigen::MatrixXcd residues;  // channels x poles
  Eigen::VectorXd d;
  Eigen::VectorXd e;
  std::vector<std::string> labels;

  Index channels() const { return residues.rows(); }
};

namespace frvf_detail {

/// Sorts poles into canonical order. Input must already be conjugate-closed;
/// complex members are matched by their upper-half-plane representative.
inline std::vector<cplx> canonical(const std::vector<cplx>& poles) {
  std::vector<cplx> upper, real;
  Index lower = 0;
  for (const cplx& p : poles) {
    if (p.imag() > 0.0) upper.push_back(p);
    else if (p.imag() < 0.0) ++lower;
    else real.push_back(p);
  }
  require(static_cast<Index>(upper.size()) == lower, ErrorKind::numerical,
          "pole set is not closed under conjugation");
  std::stable_sort(upper.begin(), upper.end(),
                   [](cplx a, cplx b) { return a.imag() < b.imag(); });
  std::stable_sort(real.begin(), real.end(),
                   [](cplx a, cplx b) { return a.real() < b.real(); });
  std::vector<cplx> out;
  out.reserve(poles.size());
  for (const cplx& p : upper) {
    out.push_back(p);
    out.push_back(std::conj(p));
  }
  out.insert(out.end(), real.begin(), real.end());
  return out;
}

/// Real-coefficient partial fractions: a pair (a, conj a) contributes
/// 1/(s-a) + 1/(s-conj a) and i/(s-a) - i/(s-conj a); a real pole 1/(s-a).
inline Eigen::MatrixXcd basis(const Eigen::VectorXcd& s, const std::vector<cplx>& poles) {
  const Index np = static_cast<Index>(poles.size());
  Eigen::MatrixXcd b(s.size(), np);
  const cplx i1(0.0, 1.0);
  for (Index n = 0; n < np;) {
    const cplx a = poles[static_cast<std::size_t>(n)];
    if (a.imag() == 0.0) {
      for (Index k = 0; k < s.size(); ++k) b(k, n) = 1.0 / (s[k] - a);
      n += 1;
    } else {
      for (Index k = 0; k < s.size(); ++k) {
        const cplx u = 1.0 / (s[k] - a);
        const cplx l = 1.0 / (s[k] - std::conj(a));
        b(k, n) = u + l;
        b(k, n + 1) = i1 * (u - l);
      }
      n += 2;
    }
  }
  return b;
}

/// Complex residues from real-basis coefficients.
inline Eigen::VectorXcd complex_residues(const std::vector<cplx>& poles,
                                         const Eigen::VectorXd& x) {
  Eigen::VectorXcd r(static_cast<Index>(poles.size()));
  for (Index n = 0; n < r.size();) {
    if (poles[static_cast<std::size_t>(n)].imag() == 0.0) {
      r[n] = x[n];
      n += 1;
    } else {
      r[n] = cplx(x[n], x[n + 1]);
      r[n + 1] = std::conj(r[n]);
      n += 2;
    }
  }
  return r;
}

/// Rows [Re; Im] of a complex matrix.
inline Eigen::MatrixXd stack_real(const Eigen::MatrixXcd& a) {
  Eigen::MatrixXd out(2 * a.rows(), a.cols());
  out.topRows(a.rows()) = a.real();
  out.bottomRows(a.rows()) = a.imag();
  return out;
}

/// Least squares by column-equilibrated complete orthogonal decomposition.
/// A numerically rank-deficient system throws unless `deficient` is given,
/// in which case the minimum-norm solution is returned and flagged.
inline Eigen::VectorXd solve_ls(Eigen::MatrixXd a, const Eigen::VectorXd& b,
                                const std::string& failure, bool* deficient = nullptr) {
  Eigen::VectorXd scale = a.colwise().norm().transpose();
  for (Index j = 0; j < scale.size(); ++j) {
    if (!(scale[j] > 0.0) || !std::isfinite(scale[j])) {
      throw Error(ErrorKind::numerical, failure + ": zero or non-finite column");
    }
  }
  a *= scale.cwiseInverse().asDiagonal();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
  cod.setThreshold(Eigen::NumTraits<double>::epsilon() *
                   static_cast<double>(std::max(a.rows(), a.cols())));
  cod.compute(a);
  const bool full = cod.rank() == a.cols();
  require(full || (deficient && cod.rank() > 0), ErrorKind::numerical, failure);
  if (deficient) *deficient = !full;
  Eigen::VectorXd x = cod.solve(b);
  return x.cwiseQuotient(scale);
}

inline Eigen::MatrixXd weights(const Eigen::MatrixXcd& f, Weighting w) {
  if (w == Weighting::none) return Eigen::MatrixXd::Ones(f.rows(), f.cols());
  const Eigen::MatrixXd mag = f.cwiseAbs();
  require((mag.array() > 0.0).all(), ErrorKind::data,
          "frvf: inverse weighting needs non-zero spectrum samples");
  return w == Weighting::weak_inverse ? Eigen::MatrixXd(mag.cwiseSqrt().cwiseInverse())
                                      : Eigen::MatrixXd(mag.cwiseInverse());
}

/// Columns of the numerator block: partial fractions, then optional 1 and s.
inline Eigen::MatrixXcd numerator_block(const Eigen::MatrixXcd& b, const Eigen::VectorXcd& s,
                                        const FitConfig& cfg) {
  const Index extra = (cfg.include_d ? 1 : 0) + (cfg.include_e ? 1 : 0);
  Eigen::MatrixXcd phi(b.rows(), b.cols() + extra);
  phi.leftCols(b.cols()) = b;
  Index c = b.cols();
  if (cfg.include_d) phi.col(c++).setOnes();
  if (cfg.include_e) phi.col(c++) = s;
  return phi;
}

/// Spectra restricted to the configured band.
inline SpectrumSet in_band(const SpectrumSet& spectra, const FitConfig& cfg) {
  require(spectra.size() > 0 && spectra.channels() > 0, ErrorKind::data,
          "frvf: spectra are empty");
  require(spectra.data.allFinite() && spectra.freqs.allFinite(), ErrorKind::data,
          "frvf: spectra contain non-finite values");
  if (!cfg.band) return spectra;
  std::vector<Index> keep;
  for (Index k = 0; k < spectra.size(); ++k) {
    if (cfg.band->contains(spectra.freqs[k])) keep.push_back(k);
  }
  require(!keep.empty(), ErrorKind::data, "frvf: no spectrum samples inside the band");
  if (static_cast<Index>(keep.size()) == spectra.size()) return spectra;
  SpectrumSet out;
  out.labels = spectra.labels;
  out.freqs.resize(static_cast<Index>(keep.size()));
  out.data.resize(spectra.channels(), static_cast<Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.freqs[static_cast<Index>(i)] = spectra.freqs[keep[i]];
    out.data.col(static_cast<Index>(i)) = spectra.data.col(keep[i]);
  }
  return out;
}

inline void check_trial(const PoleSet& trial) {
  require(trial.size() > 0, ErrorKind::usage, "frvf: empty pole set");
  for (const cplx& p : trial.poles) {
    require(std::isfinite(p.real()) && std::isfinite(p.imag()), ErrorKind::numerical,
            "frvf: non-finite pole");
    require(p.real() < 0.0, ErrorKind::usage, "frvf: trial poles must be stable");
  }
  require(canonical(trial.poles) == trial.poles, ErrorKind::usage,
          "frvf: pole set is not in canonical conjugate-pair order");
}

}  // namespace frvf_detail

/// Starting poles: N_p/2 lightly damped pairs, alpha = -beta/100, spread
/// linearly over the band. A band starting at 0 Hz uses cell centres so no
/// pole sits on the DC axis.
inline PoleSet init_poles(Band band, int n_poles) {
  require(n_poles >= 2 && n_poles % 2 == 0, ErrorKind::usage,
          "init_poles: n_poles must be a positive even count");
  require(band.f_min >= 0.0 && band.f_max > band.f_min, ErrorKind::usage,
          "init_poles: band must satisfy 0 <= f_min < f_max");
  const int m = n_poles / 2;
  PoleSet out;
  for (int i = 0; i < m; ++i) {
    double f;
    if (band.f_min == 0.0 || m == 1) {
      const double step = (band.f_max - band.f_min) / m;
      f = band.f_min + step * (i + 0.5);
    } else {
      f = band.f_min + (band.f_max - band.f_min) * i / (m - 1);
    }
    const double beta = two_pi * f;
    out.poles.emplace_back(-beta / 100.0, beta);
    out.poles.emplace_back(-beta / 100.0, -beta);
  }
  return out;
}

/// One pole-relocation step: solves for the scaling function sigma and
/// returns its zeros (unstable ones reflected) as the new poles.
inline std::pair<PoleSet, SigmaEstimate> pole_relocation_step(const SpectrumSet& spectra_in,
                                                              const PoleSet& trial,
                                                              const FitConfig& cfg) {
  using namespace frvf_detail;
  cfg.validate();
  check_trial(trial);
  const SpectrumSet spectra = in_band(spectra_in, cfg);
  const Eigen::VectorXcd s = spectra.s_values();
  const Index ns = s.size();
  const Index nch = spectra.channels();
  const Index np = trial.size();

  const Eigen::MatrixXcd b = basis(s, trial.poles);
  const Eigen::MatrixXcd phi = numerator_block(b, s, cfg);
  const Index nl = phi.cols();
  Eigen::MatrixXcd psi(ns, np + (cfg.relaxed ? 1 : 0));
  psi.leftCols(np) = b;
  if (cfg.relaxed) psi.col(np).setOnes();
  const Index nsig = psi.cols();

  const Eigen::MatrixXd w = weights(spectra.data, cfg.weighting);
  const Eigen::MatrixXcd wf = w.cast<cplx>().cwiseProduct(spectra.data);

  // channel block: [W Phi | -W diag(f) Psi] x = W f (rhs only without relaxation)
  auto channel_block = [&](Index v) {
    Eigen::MatrixXcd blk(ns, nl + nsig);
    blk.leftCols(nl) = w.row(v).transpose().asDiagonal() * phi;
    blk.rightCols(nsig) = -(wf.row(v).transpose().asDiagonal() * psi);
    return stack_real(blk);
  };

  Eigen::MatrixXd a;
  Eigen::VectorXd rhs;
  Index sigma_col = 0;
  const Index extra_row = cfg.relaxed ? 1 : 0;
  if (cfg.fast) {
    // Each channel's numerator unknowns are private to it, so a QR of the
    // channel block isolates a reduced system in sigma alone.
    const Index keep = std::min<Index>(nsig, std::max<Index>(0, 2 * ns - nl));
    a.setZero(nch * keep + extra_row, nsig);
    rhs.setZero(nch * keep + extra_row);
    for (Index v = 0; v < nch; ++v) {
      Eigen::MatrixXd blk(2 * ns, nl + nsig + 1);
      blk.leftCols(nl + nsig) = channel_block(v);
      if (cfg.relaxed) {
        blk.col(nl + nsig).setZero();
      } else {
        blk.col(nl + nsig) = stack_real(wf.row(v).transpose());
      }
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(blk);
      const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
      a.block(v * keep, 0, keep, nsig) = r.block(nl, nl, keep, nsig);
      rhs.segment(v * keep, keep) = r.block(nl, nl + nsig, keep, 1);
    }
  } else {
    sigma_col = nch * nl;
    a.setZero(nch * 2 * ns + extra_row, nch * nl + nsig);
    rhs.setZero(nch * 2 * ns + extra_row);
    for (Index v = 0; v < nch; ++v) {
      const Eigen::MatrixXd blk = channel_block(v);
      a.block(v * 2 * ns, v * nl, 2 * ns, nl) = blk.leftCols(nl);
      a.block(v * 2 * ns, sigma_col, 2 * ns, nsig) = blk.rightCols(nsig);
      if (!cfg.relaxed) rhs.segment(v * 2 * ns, 2 * ns) = stack_real(wf.row(v).transpose());
    }
  }
  if (cfg.relaxed) {
    // Re sum_k sigma(s_k) = N_s, scaled to the weighted data level
    const double gamma = wf.norm() / static_cast<double>(ns);
    a.row(a.rows() - 1).segment(sigma_col, nsig) = gamma * psi.colwise().sum().real();
    rhs[rhs.size() - 1] = gamma * static_cast<double>(ns);
  }

  bool deficient = false;
  const Eigen::VectorXd x =
      solve_ls(a, rhs, "ill-conditioned relocation", cfg.strict_rank ? nullptr : &deficient);
  const Eigen::VectorXd ct = x.segment(sigma_col, np);
  const double d_sigma = cfg.relaxed ? x[sigma_col + np] : 1.0;
  require(!cfg.relaxed || std::abs(d_sigma) >= 1e-8, ErrorKind::numerical, "degenerate scaling");

  // zeros of sigma = eig(A - b c^T / d_sigma) in the real realisation
  Eigen::MatrixXd am = Eigen::MatrixXd::Zero(np, np);
  Eigen::VectorXd bv = Eigen::VectorXd::Zero(np);
  for (Index n = 0; n < np;) {
    const cplx p = trial.poles[static_cast<std::size_t>(n)];
    if (p.imag() == 0.0) {
      am(n, n) = p.real();
      bv[n] = 1.0;
      n += 1;
    } else {
      am(n, n) = p.real();
      am(n, n + 1) = p.imag();
      am(n + 1, n) = -p.imag();
      am(n + 1, n + 1) = p.real();
      bv[n] = 2.0;
      n += 2;
    }
  }
  const Eigen::MatrixXd z = am - bv * ct.transpose() / d_sigma;
  Eigen::EigenSolver<Eigen::MatrixXd> es(z, false);
  require(es.info() == Eigen::Success, ErrorKind::numerical,
          "ill-conditioned relocation: eigenvalue solver failed");
  std::vector<cplx> zeros;
  for (Index n = 0; n < np; ++n) {
    cplx p = es.eigenvalues()[n];
    require(std::isfinite(p.real()) && std::isfinite(p.imag()), ErrorKind::numerical,
            "ill-conditioned relocation: non-finite pole");
    if (p.real() > 0.0) p = cplx(-p.real(), p.imag());
    require(p.real() < 0.0, ErrorKind::numerical,
            "ill-conditioned relocation: pole on the imaginary axis");
    zeros.push_back(p);
  }

  PoleSet next{canonical(zeros), PoleStage::trial};
  SigmaEstimate sigma{complex_residues(trial.poles, ct), d_sigma, deficient};
  return {std::move(next), std::move(sigma)};
}

/// Per-channel residues, d and e with the poles held fixed.
inline RationalModel fit_residues(const SpectrumSet& spectra_in, const PoleSet& poles,
                                  const FitConfig& cfg) {
  using namespace frvf_detail;
  check_trial(poles);
  const SpectrumSet spectra = in_band(spectra_in, cfg);
  const Eigen::VectorXcd s = spectra.s_values();
  const Index np = poles.size();
  const Eigen::MatrixXcd phi = numerator_block(basis(s, poles.poles), s, cfg);
  const Eigen::MatrixXd w = weights(spectra.data, cfg.weighting);

  RationalModel m;
  m.poles = poles.poles;
  m.labels = spectra.labels;
  m.residues.resize(spectra.channels(), np);
  m.d = Eigen::VectorXd::Zero(spectra.channels());
  m.e = Eigen::VectorXd::Zero(spectra.channels());
  for (Index v = 0; v < spectra.channels(); ++v) {
    const Eigen::MatrixXd a = stack_real(w.row(v).transpose().asDiagonal() * phi);
    const Eigen::VectorXcd wf = w.row(v).transpose().cwiseProduct(spectra.data.row(v).transpose());
    bool deficient = false;
    const Eigen::VectorXd x = solve_ls(a, stack_real(wf), "residue fit is rank deficient",
                                       cfg.strict_rank ? nullptr : &deficient);
    m.residues.row(v) = complex_residues(poles.poles, x.head(np)).transpose();
    Index c = np;
    if (cfg.include_d) m.d[v] = x[c++];
    if (cfg.include_e) m.e[v] = x[c++];
  }
  return m;
}

inline SpectrumSet evaluate(const RationalModel& model, const Eigen::VectorXd& freqs) {
  SpectrumSet out;
  out.freqs = freqs;
  out.labels = model.labels;
  out.data.resize(model.channels(), freqs.size());
  for (Index k = 0; k < freqs.size(); ++k) {
    const cplx s(0.0, two_pi * freqs[k]);
    Eigen::VectorXcd terms(static_cast<Index>(model.poles.size()));
    for (Index n = 0; n < terms.size(); ++n) {
      terms[n] = 1.0 / (s - model.poles[static_cast<std::size_t>(n)]);
    }
    out.data.col(k) = model.residues * terms + model.d.cast<cplx>() + s * model.e.cast<cplx>();
  }
  return out;
}

/// sqrt(mean |H - f|^2) over every channel and sample.
inline double rmse(const RationalModel& model, const SpectrumSet& spectra) {
  require(model.channels() == spectra.channels(), ErrorKind::usage,
          "rmse: channel count mismatch");
  require(spectra.size() > 0, ErrorKind::usage, "rmse: empty spectra");
  const SpectrumSet h = evaluate(model, spectra.freqs);
  return std::sqrt((h.data - spectra.data).cwiseAbs2().mean());
}

struct FitReport {
  RationalModel model;
  std::vector<double> rmse_per_iteration;  ///< residue fit after each relocation
};

namespace frvf_detail {

inline RationalModel run_fit(const SpectrumSet& spectra_in, const FitConfig& cfg,
                             std::vector<double>* history) {
  cfg.validate();
  const SpectrumSet spectra = in_band(spectra_in, cfg);
  const Band band = cfg.band ? *cfg.band : Band{0.0, spectra.freqs[spectra.size() - 1]};
  PoleSet poles = init_poles(band, cfg.n_poles);
  for (int it = 0; it < cfg.n_iterations; ++it) {
    poles = pole_relocation_step(spectra, poles, cfg).first;
    if (history) history->push_back(rmse(fit_residues(spectra, poles, cfg), spectra));
  }
  poles.stage = PoleStage::final;
  return fit_residues(spectra, poles, cfg);
}

}  // namespace frvf_detail

inline RationalModel fit(const SpectrumSet& spectra, const FitConfig& cfg) {
  return frvf_detail::run_fit(spectra, cfg, nullptr);
}

inline FitReport fit_with_report(const SpectrumSet& spectra, const FitConfig& cfg) {
  FitReport r;
  r.model = frvf_detail::run_fit(spectra, cfg, &r.rmse_per_iteration);
  return r;
}

/// One mode per complex pair; shapes are the channel residues of the upper
/// pole. Real poles carry no oscillation and are reported as diagnostics.
inline ModeSet extract_modes(const RationalModel& model, std::optional<int> order = std::nullopt) {
  const int src = order.value_or(static_cast<int>(model.poles.size()));
  ModeSet out;
  for (std::size_t n = 0; n < model.poles.size(); ++n) {
    const cplx p = model.poles[n];
    if (p.imag() == 0.0) {
      out.diagnostics.push_back("real pole " + std::to_string(p.real()) +
                                " excluded from modal extraction");
      continue;
    }
    if (p.imag() < 0.0) continue;
    out.modes.push_back(make_mode(p, model.residues.col(static_cast<Index>(n)), src));
  }
  out.sort_by_frequency();
  return out;
}

}  // namespace oma
