#pragma once

// Model-order sweeps, pole screening, stable-mode selection and tracking.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oma/era.hpp"
#include "oma/error.hpp"
#include "oma/frvf.hpp"
#include "oma/types.hpp"

namespace oma {

/// |a^H b|^2 / ((a^H a)(b^H b))
inline double mac(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  require(a.size() == b.size(), ErrorKind::usage, "mac: shape lengths differ");
  const double na = a.squaredNorm();
  const double nb = b.squaredNorm();
  require(na > 0.0 && nb > 0.0, ErrorKind::usage, "mac: zero shape vector");
  return std::min(1.0, std::norm(a.dot(b)) / (na * nb));
}

struct ScreenCriteria {
  int k_min = 8;
  int k_max = 100;
  int k_step = 2;
  double zeta_min = 0.01;
  double zeta_max = 0.05;
  double f_min = 0.0;
  double f_max = 1300.0;
  double df_stab = 0.01;     ///< relative
  double dzeta_stab = 0.3;   ///< relative
  double mac_stab = 0.95;
  double epsilon = 0.1;      ///< relative alignment radius
  int n_mac = 5;

  void validate() const {
    require(k_min >= 1 && k_min <= k_max && k_step >= 1, ErrorKind::usage,
            "stabilization: invalid order range");
    require(zeta_min <= zeta_max && f_min <= f_max, ErrorKind::usage,
            "stabilization: invalid damping or frequency range");
    require(df_stab > 0.0 && dzeta_stab > 0.0 && mac_stab > 0.0 && mac_stab <= 1.0 &&
                epsilon > 0.0,
            ErrorKind::usage, "stabilization: tolerances must be positive");
    require(n_mac >= 1, ErrorKind::usage, "stabilization: n_mac must be at least 1");
  }

  std::vector<int> orders() const {
    std::vector<int> out;
    for (int k = k_min; k <= k_max; k += k_step) out.push_back(k);
    return out;
  }

  /// Strictly inside both ranges always passes; the bounds are inclusive.
  bool admits(const Mode& m) const {
    return m.damping >= zeta_min && m.damping <= zeta_max && m.frequency >= f_min &&
           m.frequency <= f_max;
  }
};

struct StabilityFlags {
  bool frequency = false;
  bool damping = false;
  bool shape = false;

  bool all() const { return frequency && damping && shape; }
};

struct DiagramOrder {
  int order = 0;
  ModeSet modes;                      ///< after the hard screen
  std::vector<StabilityFlags> flags;  ///< parallel to modes.modes
  std::optional<std::string> failure;
};

struct StabilizationDiagram {
  std::vector<DiagramOrder> orders;
};

inline ModeSet hard_screen(const ModeSet& in, const ScreenCriteria& crit) {
  ModeSet out;
  out.diagnostics = in.diagnostics;
  for (const Mode& m : in.modes) {
    if (crit.admits(m)) out.modes.push_back(m);
  }
  return out;
}

/// Sorts by order and compares every mode with its relative-frequency
/// nearest neighbour one step (k_step) lower. Ties go to the higher MAC.
inline void compute_flags(StabilizationDiagram& diag, const ScreenCriteria& crit) {
  std::stable_sort(diag.orders.begin(), diag.orders.end(),
                   [](const DiagramOrder& a, const DiagramOrder& b) { return a.order < b.order; });
  for (std::size_t i = 0; i < diag.orders.size(); ++i) {
    DiagramOrder& cur = diag.orders[i];
    cur.modes.sort_by_frequency();
    cur.flags.assign(cur.modes.size(), StabilityFlags{});
    if (i == 0) continue;
    const DiagramOrder& prev = diag.orders[i - 1];
    if (prev.order != cur.order - crit.k_step || prev.failure) continue;
    for (std::size_t m = 0; m < cur.modes.size(); ++m) {
      const Mode& a = cur.modes[m];
      const Mode* best = nullptr;
      double best_d = 0.0;
      double best_mac = 0.0;
      for (const Mode& b : prev.modes.modes) {
        const double d = std::abs(b.frequency - a.frequency) / a.frequency;
        const double mc = mac(a.shape, b.shape);
        if (!best || d < best_d || (d == best_d && mc > best_mac)) {
          best = &b;
          best_d = d;
          best_mac = mc;
        }
      }
      if (!best) continue;
      cur.flags[m].frequency = best_d <= crit.df_stab;
      cur.flags[m].damping = std::abs(best->damping - a.damping) / a.damping <= crit.dzeta_stab;
      cur.flags[m].shape = best_mac >= crit.mac_stab;
    }
  }
}

/// Runs `identify(order)` for every order in the criteria. Failures are
/// recorded against their order and the sweep moves on.
inline StabilizationDiagram sweep(const std::function<ModeSet(int)>& identify,
                                  const ScreenCriteria& crit) {
  crit.validate();
  StabilizationDiagram diag;
  for (int k : crit.orders()) {
    DiagramOrder entry;
    entry.order = k;
    try {
      entry.modes = hard_screen(identify(k), crit);
    } catch (const Error& e) {
      entry.failure = e.what();
    }
    diag.orders.push_back(std::move(entry));
  }
  compute_flags(diag, crit);
  return diag;
}

/// Model order = number of poles.
inline StabilizationDiagram sweep_frvf(const SpectrumSet& spectra, const ScreenCriteria& crit,
                                       FitConfig base) {
  return sweep(
      [&](int k) {
        base.n_poles = k;
        return extract_modes(fit(spectra, base), k);
      },
      crit);
}

/// Model order = retained states; one SVD serves every order.
inline StabilizationDiagram sweep_era(const CorrelationSet& corr, const ScreenCriteria& crit,
                                      const EraConfig& base) {
  const EraRealizer realizer(corr, base);
  return sweep([&](int k) { return realizer.modes(k); }, crit);
}

namespace stab_detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Member {
  int order;
  const Mode* mode;
};

}  // namespace stab_detail

/// Groups fully stable modes into alignments (relative distance to the
/// running median frequency <= epsilon) and keeps those stable over at least
/// n_mac consecutive orders. Frequency and damping are alignment medians;
/// the shape comes from the first order of the first qualifying run.
inline ModeSet select_stable(const StabilizationDiagram& in, const ScreenCriteria& crit) {
  crit.validate();
  StabilizationDiagram diag = in;
  compute_flags(diag, crit);

  using stab_detail::Member;
  std::vector<std::vector<Member>> alignments;
  std::vector<std::vector<double>> freqs;
  for (const DiagramOrder& o : diag.orders) {
    for (std::size_t m = 0; m < o.modes.size(); ++m) {
      if (!o.flags[m].all()) continue;
      const Mode& mode = o.modes[m];
      std::size_t best = alignments.size();
      double best_d = 0.0;
      for (std::size_t a = 0; a < alignments.size(); ++a) {
        const double med = stab_detail::median(freqs[a]);
        const double d = std::abs(mode.frequency - med) / med;
        if (d <= crit.epsilon && (best == alignments.size() || d < best_d)) {
          best = a;
          best_d = d;
        }
      }
      if (best == alignments.size()) {
        alignments.emplace_back();
        freqs.emplace_back();
      }
      alignments[best].push_back({o.order, &mode});
      freqs[best].push_back(mode.frequency);
    }
  }

  ModeSet out;
  for (std::size_t a = 0; a < alignments.size(); ++a) {
    std::vector<int> ks;
    for (const Member& m : alignments[a]) ks.push_back(m.order);
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

    std::optional<int> start;
    int run = 1;
    for (std::size_t i = 0; i < ks.size() && !start; ++i) {
      run = (i > 0 && ks[i] - ks[i - 1] == crit.k_step) ? run + 1 : 1;
      if (run >= crit.n_mac) start = ks[i - static_cast<std::size_t>(run - 1)];
    }
    if (!start) continue;

    const double f_med = stab_detail::median(freqs[a]);
    std::vector<double> zetas;
    const Mode* rep = nullptr;
    for (const Member& m : alignments[a]) {
      zetas.push_back(m.mode->damping);
      if (m.order == *start &&
          (!rep || std::abs(m.mode->frequency - f_med) < std::abs(rep->frequency - f_med))) {
        rep = m.mode;
      }
    }
    out.modes.push_back(Mode{f_med, stab_detail::median(zetas), rep->shape, *start});
  }
  out.sort_by_frequency();
  return out;
}

struct TrackMatch {
  std::size_t reference = 0;
  std::size_t candidate = 0;
  double df_percent = 0.0;  ///< 100 (f_cand - f_ref) / f_ref
  double mac = 0.0;
  bool accepted = false;
  std::string reason;  ///< why a pairing was rejected; empty when accepted
};

struct TrackReport {
  std::vector<TrackMatch> matches;
  std::vector<std::size_t> unmatched_reference;
  std::vector<std::size_t> unmatched_candidate;
};

/// Greedy pairing by descending MAC among pairs within the relative
/// frequency window. Damping plays no part.
inline TrackReport track(const ModeSet& reference, const ModeSet& candidate, double f_tol,
                         double mac_min) {
  require(f_tol > 0.0 && mac_min >= 0.0 && mac_min <= 1.0, ErrorKind::usage,
          "track: invalid thresholds");
  std::optional<Index> channels;
  for (const ModeSet* set : {&reference, &candidate}) {
    for (const Mode& m : set->modes) {
      if (!channels) channels = m.shape.size();
      require(m.shape.size() == *channels, ErrorKind::data,
              "track: mode shapes are defined on different channel sets");
    }
  }

  struct Pair {
    std::size_t r, c;
    double df, mc;
  };
  std::vector<Pair> pairs;
  for (std::size_t r = 0; r < reference.size(); ++r) {
    for (std::size_t c = 0; c < candidate.size(); ++c) {
      const double fr = reference[r].frequency;
      const double df = (candidate[c].frequency - fr) / fr;
      if (std::abs(df) <= f_tol) {
        pairs.push_back({r, c, df, mac(reference[r].shape, candidate[c].shape)});
      }
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.mc != b.mc) return a.mc > b.mc;
    return std::abs(a.df) < std::abs(b.df);
  });

  std::vector<bool> used_r(reference.size(), false), used_c(candidate.size(), false);
  TrackReport rep;
  for (const Pair& p : pairs) {
    if (used_r[p.r] || used_c[p.c]) continue;
    used_r[p.r] = used_c[p.c] = true;
    TrackMatch m{p.r, p.c, 100.0 * p.df, p.mc, p.mc >= mac_min, {}};
    if (!m.accepted) {
      m.reason = "MAC " + std::to_string(p.mc) + " below " + std::to_string(mac_min);
    }
    rep.matches.push_back(std::move(m));
  }
  std::sort(rep.matches.begin(), rep.matches.end(),
            [](const TrackMatch& a, const TrackMatch& b) { return a.reference < b.reference; });
  for (std::size_t r = 0; r < reference.size(); ++r) {
    if (!used_r[r]) rep.unmatched_reference.push_back(r);
  }
  for (std::size_t c = 0; c < candidate.size(); ++c) {
    if (!used_c[c]) rep.unmatched_candidate.push_back(c);
  }
  return rep;
}

}  // namespace oma
