#pragma once

// Euler-Bernoulli cantilever bench: assembly, eigenanalysis, impulse
// response by exact modal superposition, seeded measurement noise.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oma/error.hpp"
#include "oma/types.hpp"

namespace oma {

/// I-section. H is the overall depth, so the clear web height is H - 2*t_f.
struct ISection {
  double H = 0.0;
  double W = 0.0;
  double t_w = 0.0;
  double t_f = 0.0;

  double area() const { return 2.0 * W * t_f + (H - 2.0 * t_f) * t_w; }
  double second_moment() const {
    const double web = H - 2.0 * t_f;
    return W * H * H * H / 12.0 - (W - t_w) * web * web * web / 12.0;
  }
};

struct BeamSpec {
  double length = 0.0;
  int n_elements = 0;
  ISection section;
  double density = 0.0;
  double young_modulus = 0.0;
  double damping = 0.0;  ///< modal damping ratio applied to every mode

  /// The 2 m aluminium validation beam. E = 68.9 GPa is the handbook value
  /// for 6061-T6 and is what reproduces the reference frequencies.
  static BeamSpec reference() {
    return BeamSpec{2.0, 8, {0.025, 0.050, 0.0015, 0.0025}, 2700.0, 68.9e9, 0.03};
  }

  void validate() const {
    require(n_elements >= 1, ErrorKind::usage, "beam: n_elements must be at least 1");
    require(length > 0.0 && density > 0.0 && young_modulus > 0.0, ErrorKind::usage,
            "beam: length, density and Young's modulus must be positive");
    const ISection& s = section;
    require(s.H > 0.0 && s.W > 0.0 && s.t_w > 0.0 && s.t_f > 0.0, ErrorKind::usage,
            "beam: section dimensions must be positive");
    require(s.t_w < s.W, ErrorKind::usage, "beam: web thickness must be below flange width");
    require(2.0 * s.t_f < s.H, ErrorKind::usage, "beam: flanges thicker than the section depth");
    require(damping > 0.0 && damping < 1.0, ErrorKind::usage,
            "beam: damping ratio must lie in (0, 1)");
  }
};

/// Reduced (clamped) system. dof_map[node] = {translation, rotation} row
/// indices, -1 where the DOF is constrained or absent. Node 0 is the root.
struct StructuralModel {
  Eigen::MatrixXd M;
  Eigen::MatrixXd K;
  Eigen::MatrixXd C;
  std::vector<std::array<Index, 2>> dof_map;
  double damping = 0.0;

  Index size() const { return M.rows(); }

  std::vector<Index> translation_dofs() const {
    std::vector<Index> out;
    for (const auto& d : dof_map) {
      if (d[0] >= 0) out.push_back(d[0]);
    }
    return out;
  }
};

/// Undamped modes, M-normalised, ascending.
struct ModalBasis {
  Eigen::VectorXd omega;  // rad/s
  Eigen::MatrixXd phi;    // dof x mode
};

inline ModalBasis modal_basis(const Eigen::MatrixXd& M, const Eigen::MatrixXd& K) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(K, M);
  require(es.info() == Eigen::Success, ErrorKind::numerical,
          "eigenanalysis: generalized eigensolver failed");
  require(es.eigenvalues().minCoeff() > 0.0, ErrorKind::numerical,
          "eigenanalysis: stiffness is not positive definite");
  return {es.eigenvalues().cwiseSqrt(), es.eigenvectors()};
}

/// C = M Phi diag(2 zeta omega) Phi^T M with M-normalised Phi.
inline Eigen::MatrixXd modal_damping_matrix(const Eigen::MatrixXd& M, const ModalBasis& b,
                                            double zeta) {
  const Eigen::MatrixXd mp = M * b.phi;
  Eigen::MatrixXd c = mp * (2.0 * zeta * b.omega).asDiagonal() * mp.transpose();
  return 0.5 * (c + c.transpose());
}

/// Wraps arbitrary symmetric M and K (one translational DOF per row) as a
/// model with uniform modal damping.
inline StructuralModel from_matrices(Eigen::MatrixXd M, Eigen::MatrixXd K, double zeta) {
  require(M.rows() == M.cols() && K.rows() == K.cols() && M.rows() == K.rows() && M.rows() > 0,
          ErrorKind::usage, "model: M and K must be square and the same size");
  require(zeta >= 0.0 && zeta < 1.0, ErrorKind::usage, "model: damping must lie in [0, 1)");
  StructuralModel m;
  m.M = std::move(M);
  m.K = std::move(K);
  m.damping = zeta;
  m.C = modal_damping_matrix(m.M, modal_basis(m.M, m.K), zeta);
  m.dof_map.push_back({-1, -1});
  for (Index i = 0; i < m.size(); ++i) m.dof_map.push_back({i, -1});
  return m;
}

inline StructuralModel assemble_model(const BeamSpec& spec) {
  spec.validate();
  const int ne = spec.n_elements;
  const double l = spec.length / ne;
  const double ei = spec.young_modulus * spec.section.second_moment();
  const double rho_a = spec.density * spec.section.area();

  Eigen::Matrix4d me;
  me << 156, 22 * l, 54, -13 * l,
        22 * l, 4 * l * l, 13 * l, -3 * l * l,
        54, 13 * l, 156, -22 * l,
        -13 * l, -3 * l * l, -22 * l, 4 * l * l;
  me *= rho_a * l / 420.0;
  Eigen::Matrix4d ke;
  ke << 12, 6 * l, -12, 6 * l,
        6 * l, 4 * l * l, -6 * l, 2 * l * l,
        -12, -6 * l, 12, -6 * l,
        6 * l, 2 * l * l, -6 * l, 4 * l * l;
  ke *= ei / (l * l * l);

  const Index full = 2 * (ne + 1);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(full, full);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(full, full);
  for (int e = 0; e < ne; ++e) {
    M.block<4, 4>(2 * e, 2 * e) += me;
    K.block<4, 4>(2 * e, 2 * e) += ke;
  }

  StructuralModel model;
  const Index n = full - 2;  // root w and theta removed
  model.M = M.bottomRightCorner(n, n);
  model.K = K.bottomRightCorner(n, n);
  model.damping = spec.damping;
  model.C = modal_damping_matrix(model.M, modal_basis(model.M, model.K), spec.damping);
  model.dof_map.push_back({-1, -1});
  for (int node = 1; node <= ne; ++node) {
    model.dof_map.push_back({2 * (node - 1), 2 * (node - 1) + 1});
  }
  return model;
}

/// Undamped eigenmodes; shapes span the free translational DOFs.
inline ModeSet analytic_modes(const StructuralModel& model) {
  const ModalBasis b = modal_basis(model.M, model.K);
  const std::vector<Index> w = model.translation_dofs();
  ModeSet out;
  for (Index j = 0; j < b.omega.size(); ++j) {
    Eigen::VectorXcd shape(static_cast<Index>(w.size()));
    for (std::size_t i = 0; i < w.size(); ++i) shape[static_cast<Index>(i)] = b.phi(w[i], j);
    normalize_shape(shape);
    out.modes.push_back(Mode{b.omega[j] / two_pi, model.damping, std::move(shape), std::nullopt});
  }
  return out;
}

enum class PulseShape {
  rectangular,  ///< amplitude [N] held for one sample period
  dirac,        ///< ideal impulse; amplitude is the impulse [N s]
};

struct ImpulseOptions {
  int force_node = 1;
  double amplitude = 1.0;
  double fs = 3600.0;
  double duration = 30.0;
  PulseShape pulse = PulseShape::rectangular;
};

/// Transverse displacement at every free translational DOF, computed mode by
/// mode in closed form (uniform modal damping keeps the modes uncoupled).
inline TimeSeriesSet impulse_response(const StructuralModel& model, const ImpulseOptions& opt) {
  require(opt.fs > 0.0 && std::isfinite(opt.fs), ErrorKind::usage,
          "impulse: sampling rate must be positive");
  require(opt.duration > 0.0, ErrorKind::usage, "impulse: duration must be positive");
  require(opt.force_node >= 0 && opt.force_node < static_cast<int>(model.dof_map.size()),
          ErrorKind::usage, "impulse: force node out of range");
  const Index fdof = model.dof_map[static_cast<std::size_t>(opt.force_node)][0];
  require(fdof >= 0, ErrorKind::usage,
          "impulse: force node " + std::to_string(opt.force_node) + " is clamped");

  const ModalBasis b = modal_basis(model.M, model.K);
  const std::vector<Index> w = model.translation_dofs();
  const double dt = 1.0 / opt.fs;
  const auto n = static_cast<Index>(std::llround(opt.duration * opt.fs));
  require(n >= 2, ErrorKind::usage, "impulse: duration shorter than two samples");
  const double zeta = model.damping;

  TimeSeriesSet out;
  out.dt = dt;
  out.data = Eigen::MatrixXd::Zero(static_cast<Index>(w.size()), n);
  for (std::size_t i = 0; i < w.size(); ++i) out.labels.push_back("w" + std::to_string(i + 1));

  Eigen::VectorXd q(n);
  for (Index j = 0; j < b.omega.size(); ++j) {
    const double wn = b.omega[j];
    const double wd = wn * std::sqrt(1.0 - zeta * zeta);
    const double sigma = zeta * wn;
    const double gain = opt.amplitude * b.phi(fdof, j);
    // E(t) = e^{-sigma t} (cos wd t + sigma/wd sin wd t), the free decay of a
    // unit initial displacement; a step of force P gives (P/wn^2)(1 - E(t)).
    auto decay = [&](double t) {
      return std::exp(-sigma * t) * (std::cos(wd * t) + sigma / wd * std::sin(wd * t));
    };
    for (Index k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) * dt;
      if (opt.pulse == PulseShape::dirac) {
        q[k] = gain * std::exp(-sigma * t) * std::sin(wd * t) / wd;
      } else if (k == 0) {
        q[k] = 0.0;
      } else if (k == 1) {
        q[k] = gain * (1.0 - decay(t)) / (wn * wn);
      } else {
        q[k] = gain * (decay(t - dt) - decay(t)) / (wn * wn);
      }
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      out.data.row(static_cast<Index>(i)) += b.phi(w[i], j) * q.transpose();
    }
  }
  return out;
}

/// Adds fraction * std(channel) * N(0, 1) to every channel. Draws are made
/// channel by channel from one mt19937_64 stream, so output depends only on
/// the input and the seed.
inline TimeSeriesSet add_noise(const TimeSeriesSet& ts, double fraction, std::uint64_t seed) {
  require(fraction >= 0.0 && std::isfinite(fraction), ErrorKind::usage,
          "noise: fraction must be non-negative");
  TimeSeriesSet out = ts;
  if (fraction == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Index c = 0; c < ts.channels(); ++c) {
    const auto row = ts.data.row(c);
    const double mean = row.mean();
    const double sd = std::sqrt((row.array() - mean).square().mean());
    for (Index k = 0; k < ts.samples(); ++k) out.data(c, k) += fraction * sd * gauss(rng);
  }
  return out;
}

}  // namespace oma
