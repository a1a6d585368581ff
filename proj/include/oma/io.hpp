#pragma once

// CSV and JSON interchange. Numbers are written in shortest round-trip form
// so every artifact parses back to identical doubles.

#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "oma/beam.hpp"
#include "oma/era.hpp"
#include "oma/error.hpp"
#include "oma/frvf.hpp"
#include "oma/signals.hpp"
#include "oma/stabilization.hpp"
#include "oma/types.hpp"

namespace oma {

using json = nlohmann::json;

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::data, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::data, "cannot write " + path);
  out << text;
  out.close();
  require(!out.fail(), ErrorKind::data, "write failed for " + path);
}

// ---------------------------------------------------------------- CSV

namespace io_detail {

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) {
      cell.remove_suffix(1);
    }
    out.push_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_number(std::string_view cell, const std::string& where) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && cell.front() == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  require(res.ec == std::errc() && res.ptr == last && first != last, ErrorKind::data,
          where + ": not a number '" + std::string(cell) + "'");
  require(std::isfinite(v), ErrorKind::data, where + ": non-finite value");
  return v;
}

}  // namespace io_detail

/// `time,<label>...` header, then one row per sample. Timestamps are taken
/// as they are; see to_time_series for the uniform-grid check.
inline RawRecord parse_csv(const std::string& text, const std::string& name = "csv") {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  RawRecord rec;
  std::vector<std::vector<double>> rows;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = io_detail::split(line);
    const std::string where = name + ":" + std::to_string(line_no);
    if (rec.labels.empty() && rows.empty()) {
      require(cells.size() >= 2, ErrorKind::data, where + ": header needs time and a channel");
      require(cells[0] == "time", ErrorKind::data, where + ": first column must be 'time'");
      for (std::size_t c = 1; c < cells.size(); ++c) rec.labels.emplace_back(cells[c]);
      continue;
    }
    require(cells.size() == rec.labels.size() + 1, ErrorKind::data,
            where + ": expected " + std::to_string(rec.labels.size() + 1) + " columns, found " +
                std::to_string(cells.size()));
    std::vector<double> row;
    for (const auto& cell : cells) row.push_back(io_detail::parse_number(cell, where));
    rows.push_back(std::move(row));
  }
  require(!rec.labels.empty(), ErrorKind::data, name + ": empty CSV");
  require(!rows.empty(), ErrorKind::data, name + ": no data rows");

  rec.samples.resize(static_cast<Index>(rec.labels.size()), static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rec.timestamps.push_back(rows[k][0]);
    for (std::size_t c = 0; c < rec.labels.size(); ++c) {
      rec.samples(static_cast<Index>(c), static_cast<Index>(k)) = rows[k][c + 1];
    }
  }
  return rec;
}

/// Requires a uniform grid (relative jitter below 1e-6 of the step).
inline TimeSeriesSet to_time_series(const RawRecord& rec, const std::string& name = "csv") {
  const std::size_t n = rec.timestamps.size();
  require(n >= 2, ErrorKind::data, name + ": need at least two samples");
  const double t0 = rec.timestamps.front();
  const double dt = (rec.timestamps.back() - t0) / static_cast<double>(n - 1);
  require(dt > 0.0, ErrorKind::data, name + ": timestamps do not increase");
  for (std::size_t k = 0; k < n; ++k) {
    const double expect = t0 + static_cast<double>(k) * dt;
    require(std::abs(rec.timestamps[k] - expect) <= 1e-6 * dt, ErrorKind::data,
            name + ": row " + std::to_string(k + 1) +
                " is off the uniform grid; run preprocess to resample");
  }
  TimeSeriesSet ts{dt, t0, rec.samples, rec.labels};
  ts.validate();
  return ts;
}

inline std::string format_csv(const TimeSeriesSet& ts) {
  std::string out = "time";
  for (Index c = 0; c < ts.channels(); ++c) {
    out += ',';
    out += c < static_cast<Index>(ts.labels.size()) ? ts.labels[c] : "ch" + std::to_string(c + 1);
  }
  out += '\n';
  for (Index k = 0; k < ts.samples(); ++k) {
    out += format_double(ts.time(k));
    for (Index c = 0; c < ts.channels(); ++c) {
      out += ',';
      out += format_double(ts.data(c, k));
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------- JSON

namespace io_detail {

inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                       const std::string& what) {
  require(j.is_object(), ErrorKind::usage, what + ": expected a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || item.key() == a;
    require(known, ErrorKind::usage, what + ": unknown key '" + item.key() + "'");
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& value, const std::string& what) {
  if (!j.contains(key)) return;
  try {
    value = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::usage, what + ": bad value for '" + key + "'");
  }
}

inline json complex_json(cplx z) { return json::array({z.real(), z.imag()}); }

inline cplx complex_from(const json& j, const std::string& what) {
  require(j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number(), ErrorKind::data,
          what + ": complex values are [re, im] pairs");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline json band_json(const Band& b) { return json::array({b.f_min, b.f_max}); }

inline Band band_from(const json& j, const std::string& what) {
  require(j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number(), ErrorKind::usage,
          what + ": ranges are [min, max]");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace io_detail

inline json parse_json(const std::string& text, const std::string& name) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::usage, name + ": " + e.what());
  }
}

// BeamSpec

inline json to_json(const BeamSpec& s) {
  return {{"length", s.length},
          {"n_elements", s.n_elements},
          {"section", {{"H", s.section.H}, {"W", s.section.W}, {"t_w", s.section.t_w},
                       {"t_f", s.section.t_f}}},
          {"density", s.density},
          {"young_modulus", s.young_modulus},
          {"damping", s.damping}};
}

inline BeamSpec beam_spec_from_json(const json& j) {
  const std::string what = "beam spec";
  io_detail::check_keys(j, {"length", "n_elements", "section", "density", "young_modulus",
                            "damping"}, what);
  BeamSpec s = BeamSpec::reference();
  io_detail::read_opt(j, "length", s.length, what);
  io_detail::read_opt(j, "n_elements", s.n_elements, what);
  io_detail::read_opt(j, "density", s.density, what);
  io_detail::read_opt(j, "young_modulus", s.young_modulus, what);
  io_detail::read_opt(j, "damping", s.damping, what);
  if (j.contains("section")) {
    const json& sec = j["section"];
    io_detail::check_keys(sec, {"H", "W", "t_w", "t_f"}, what + " section");
    io_detail::read_opt(sec, "H", s.section.H, what);
    io_detail::read_opt(sec, "W", s.section.W, what);
    io_detail::read_opt(sec, "t_w", s.section.t_w, what);
    io_detail::read_opt(sec, "t_f", s.section.t_f, what);
  }
  s.validate();
  return s;
}

// FitConfig

inline std::string to_string(Weighting w) {
  switch (w) {
    case Weighting::none: return "none";
    case Weighting::weak_inverse: return "weak_inverse";
    case Weighting::strong_inverse: return "strong_inverse";
  }
  return "none";
}

inline Weighting weighting_from_string(const std::string& s) {
  if (s == "none") return Weighting::none;
  if (s == "weak_inverse") return Weighting::weak_inverse;
  if (s == "strong_inverse") return Weighting::strong_inverse;
  throw Error(ErrorKind::usage, "unknown weighting '" + s + "'");
}

inline json to_json(const FitConfig& c) {
  json j = {{"n_poles", c.n_poles},         {"n_iterations", c.n_iterations},
            {"weighting", to_string(c.weighting)}, {"relaxed", c.relaxed},
            {"fast", c.fast},               {"include_d", c.include_d},
            {"include_e", c.include_e},     {"strict_rank", c.strict_rank}};
  if (c.band) j["band"] = io_detail::band_json(*c.band);
  return j;
}

inline FitConfig fit_config_from_json(const json& j) {
  const std::string what = "frvf config";
  io_detail::check_keys(j, {"n_poles", "n_iterations", "weighting", "relaxed", "fast",
                            "include_d", "include_e", "strict_rank", "band"}, what);
  FitConfig c;
  io_detail::read_opt(j, "n_poles", c.n_poles, what);
  io_detail::read_opt(j, "n_iterations", c.n_iterations, what);
  io_detail::read_opt(j, "relaxed", c.relaxed, what);
  io_detail::read_opt(j, "fast", c.fast, what);
  io_detail::read_opt(j, "include_d", c.include_d, what);
  io_detail::read_opt(j, "include_e", c.include_e, what);
  io_detail::read_opt(j, "strict_rank", c.strict_rank, what);
  std::string w = "none";
  io_detail::read_opt(j, "weighting", w, what);
  c.weighting = weighting_from_string(w);
  if (j.contains("band")) c.band = io_detail::band_from(j["band"], what);
  c.validate();
  return c;
}

// EraConfig

inline json to_json(const EraConfig& c) {
  return {{"rows", c.rows},
          {"cols", c.cols},
          {"truncation", c.truncation},
          {"shift", c.shift},
          {"shift_mode", c.shift_mode == ShiftMode::lag_advance ? "lag_advance" : "start_offset"}};
}

inline EraConfig era_config_from_json(const json& j) {
  const std::string what = "era config";
  io_detail::check_keys(j, {"rows", "cols", "truncation", "shift", "shift_mode"}, what);
  EraConfig c;
  io_detail::read_opt(j, "rows", c.rows, what);
  io_detail::read_opt(j, "cols", c.cols, what);
  io_detail::read_opt(j, "truncation", c.truncation, what);
  io_detail::read_opt(j, "shift", c.shift, what);
  std::string mode = "start_offset";
  io_detail::read_opt(j, "shift_mode", mode, what);
  if (mode == "lag_advance") c.shift_mode = ShiftMode::lag_advance;
  else if (mode == "start_offset") c.shift_mode = ShiftMode::start_offset;
  else throw Error(ErrorKind::usage, what + ": unknown shift_mode '" + mode + "'");
  c.validate();
  return c;
}

// ScreenCriteria

inline json to_json(const ScreenCriteria& c) {
  return {{"orders", {{"min", c.k_min}, {"max", c.k_max}, {"step", c.k_step}}},
          {"damping_range", {c.zeta_min, c.zeta_max}},
          {"freq_range", {c.f_min, c.f_max}},
          {"df_stab", c.df_stab},
          {"dzeta_stab", c.dzeta_stab},
          {"mac_stab", c.mac_stab},
          {"epsilon", c.epsilon},
          {"n_mac", c.n_mac}};
}

inline ScreenCriteria screen_criteria_from_json(const json& j) {
  const std::string what = "stabilization criteria";
  io_detail::check_keys(j, {"orders", "damping_range", "freq_range", "df_stab", "dzeta_stab",
                            "mac_stab", "epsilon", "n_mac"}, what);
  ScreenCriteria c;
  if (j.contains("orders")) {
    const json& o = j["orders"];
    io_detail::check_keys(o, {"min", "max", "step"}, what + " orders");
    io_detail::read_opt(o, "min", c.k_min, what);
    io_detail::read_opt(o, "max", c.k_max, what);
    io_detail::read_opt(o, "step", c.k_step, what);
  }
  if (j.contains("damping_range")) {
    const Band b = io_detail::band_from(j["damping_range"], what);
    c.zeta_min = b.f_min;
    c.zeta_max = b.f_max;
  }
  if (j.contains("freq_range")) {
    const Band b = io_detail::band_from(j["freq_range"], what);
    c.f_min = b.f_min;
    c.f_max = b.f_max;
  }
  io_detail::read_opt(j, "df_stab", c.df_stab, what);
  io_detail::read_opt(j, "dzeta_stab", c.dzeta_stab, what);
  io_detail::read_opt(j, "mac_stab", c.mac_stab, what);
  io_detail::read_opt(j, "epsilon", c.epsilon, what);
  io_detail::read_opt(j, "n_mac", c.n_mac, what);
  c.validate();
  return c;
}

// Rotation config: [{"channels": [i, j, k], "yaw": deg, "pitch": deg, "roll": deg}]
// with 1-based channel numbers.

inline std::vector<SensorTriad> rotation_from_json(const json& j) {
  const std::string what = "rotation config";
  require(j.is_array(), ErrorKind::usage, what + ": expected a list of triads");
  std::vector<SensorTriad> out;
  constexpr double deg = std::numbers::pi / 180.0;
  for (const json& t : j) {
    io_detail::check_keys(t, {"channels", "yaw", "pitch", "roll"}, what);
    require(t.contains("channels") && t["channels"].is_array() && t["channels"].size() == 3,
            ErrorKind::usage, what + ": each triad needs three channels");
    SensorTriad triad;
    for (int a = 0; a < 3; ++a) {
      require(t["channels"][a].is_number_integer(), ErrorKind::usage,
              what + ": channel numbers must be integers");
      triad.channels[a] = t["channels"][a].get<Index>() - 1;
    }
    double yaw = 0, pitch = 0, roll = 0;
    io_detail::read_opt(t, "yaw", yaw, what);
    io_detail::read_opt(t, "pitch", pitch, what);
    io_detail::read_opt(t, "roll", roll, what);
    triad.angles = {yaw * deg, pitch * deg, roll * deg};
    out.push_back(triad);
  }
  return out;
}

// ModeSet

inline json to_json(const ModeSet& ms, const std::vector<std::string>& labels = {}) {
  json modes = json::array();
  for (const Mode& m : ms.modes) {
    json shape = json::array();
    for (Index i = 0; i < m.shape.size(); ++i) shape.push_back(io_detail::complex_json(m.shape[i]));
    json jm = {{"frequency", m.frequency}, {"damping", m.damping}, {"shape", shape}};
    jm["source_order"] = m.source_order ? json(*m.source_order) : json("analytic");
    modes.push_back(std::move(jm));
  }
  json j = {{"modes", modes}, {"diagnostics", ms.diagnostics}};
  if (!labels.empty()) j["labels"] = labels;
  return j;
}

inline ModeSet mode_set_from_json(const json& j, std::vector<std::string>* labels = nullptr) {
  const std::string what = "mode set";
  require(j.is_object() && j.contains("modes") && j["modes"].is_array(), ErrorKind::data,
          what + ": missing 'modes' list");
  ModeSet ms;
  try {
    for (const json& jm : j["modes"]) {
      Mode m;
      m.frequency = jm.at("frequency").get<double>();
      m.damping = jm.at("damping").get<double>();
      const json& shape = jm.at("shape");
      m.shape.resize(static_cast<Index>(shape.size()));
      for (std::size_t i = 0; i < shape.size(); ++i) {
        m.shape[static_cast<Index>(i)] = io_detail::complex_from(shape[i], what);
      }
      if (jm.contains("source_order") && jm["source_order"].is_number_integer()) {
        m.source_order = jm["source_order"].get<int>();
      }
      ms.modes.push_back(std::move(m));
    }
    if (j.contains("diagnostics")) {
      ms.diagnostics = j["diagnostics"].get<std::vector<std::string>>();
    }
    if (labels && j.contains("labels")) *labels = j["labels"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::data, what + ": " + e.what());
  }
  return ms;
}

// RationalModel

inline json to_json(const RationalModel& m) {
  json poles = json::array();
  for (const cplx& p : m.poles) poles.push_back(io_detail::complex_json(p));
  json residues = json::array();
  for (Index v = 0; v < m.channels(); ++v) {
    json row = json::array();
    for (Index n = 0; n < m.residues.cols(); ++n) {
      row.push_back(io_detail::complex_json(m.residues(v, n)));
    }
    residues.push_back(std::move(row));
  }
  return {{"poles", poles},
          {"residues", residues},
          {"d", std::vector<double>(m.d.data(), m.d.data() + m.d.size())},
          {"e", std::vector<double>(m.e.data(), m.e.data() + m.e.size())},
          {"labels", m.labels}};
}

inline RationalModel rational_model_from_json(const json& j) {
  const std::string what = "rational model";
  RationalModel m;
  try {
    for (const json& p : j.at("poles")) m.poles.push_back(io_detail::complex_from(p, what));
    const json& res = j.at("residues");
    const auto d = j.at("d").get<std::vector<double>>();
    const auto e = j.at("e").get<std::vector<double>>();
    require(d.size() == res.size() && e.size() == res.size(), ErrorKind::data,
            what + ": d, e and residues disagree on the channel count");
    m.residues.resize(static_cast<Index>(res.size()), static_cast<Index>(m.poles.size()));
    for (std::size_t v = 0; v < res.size(); ++v) {
      require(res[v].size() == m.poles.size(), ErrorKind::data,
              what + ": residue row length differs from the pole count");
      for (std::size_t n = 0; n < m.poles.size(); ++n) {
        m.residues(static_cast<Index>(v), static_cast<Index>(n)) =
            io_detail::complex_from(res[v][n], what);
      }
    }
    m.d = Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Index>(d.size()));
    m.e = Eigen::Map<const Eigen::VectorXd>(e.data(), static_cast<Index>(e.size()));
    if (j.contains("labels")) m.labels = j["labels"].get<std::vector<std::string>>();
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::data, what + ": " + ex.what());
  }
  return m;
}

// Diagram and tracking reports

inline json to_json(const StabilizationDiagram& d) {
  json orders = json::array();
  for (const DiagramOrder& o : d.orders) {
    json modes = json::array();
    for (std::size_t m = 0; m < o.modes.size(); ++m) {
      const StabilityFlags f = m < o.flags.size() ? o.flags[m] : StabilityFlags{};
      modes.push_back({{"frequency", o.modes[m].frequency},
                       {"damping", o.modes[m].damping},
                       {"freq_stable", f.frequency},
                       {"damp_stable", f.damping},
                       {"shape_stable", f.shape}});
    }
    json jo = {{"order", o.order}, {"modes", modes}};
    if (o.failure) jo["failure"] = *o.failure;
    orders.push_back(std::move(jo));
  }
  return {{"orders", orders}};
}

inline std::string format_diagram_csv(const StabilizationDiagram& d) {
  std::string out = "order,frequency,damping,freq_stable,damp_stable,shape_stable\n";
  for (const DiagramOrder& o : d.orders) {
    for (std::size_t m = 0; m < o.modes.size(); ++m) {
      const StabilityFlags f = m < o.flags.size() ? o.flags[m] : StabilityFlags{};
      out += std::to_string(o.order) + ',' + format_double(o.modes[m].frequency) + ',' +
             format_double(o.modes[m].damping) + ',' + (f.frequency ? "1" : "0") + ',' +
             (f.damping ? "1" : "0") + ',' + (f.shape ? "1" : "0") + '\n';
    }
  }
  return out;
}

inline json to_json(const TrackReport& r) {
  json matches = json::array();
  for (const TrackMatch& m : r.matches) {
    json jm = {{"reference", m.reference},
               {"candidate", m.candidate},
               {"df_percent", m.df_percent},
               {"mac", m.mac},
               {"accepted", m.accepted}};
    if (!m.accepted) jm["reason"] = m.reason;
    matches.push_back(std::move(jm));
  }
  return {{"matches", matches},
          {"unmatched_reference", r.unmatched_reference},
          {"unmatched_candidate", r.unmatched_candidate}};
}

inline std::string format_track_csv(const TrackReport& r) {
  std::string out = "reference,candidate,df_percent,mac,accepted,reason\n";
  for (const TrackMatch& m : r.matches) {
    out += std::to_string(m.reference + 1) + ',' + std::to_string(m.candidate + 1) + ',' +
           format_double(m.df_percent) + ',' + format_double(m.mac) + ',' +
           (m.accepted ? "1" : "0") + ',' + m.reason + '\n';
  }
  for (std::size_t i : r.unmatched_reference) {
    out += std::to_string(i + 1) + ",,,,0,unmatched reference mode\n";
  }
  for (std::size_t i : r.unmatched_candidate) {
    out += "," + std::to_string(i + 1) + ",,,0,unmatched candidate mode\n";
  }
  return out;
}

}  // namespace oma
