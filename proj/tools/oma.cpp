// oma: command-line front end. Each stage reads and writes files so every
// experiment is a reproducible shell loop over configs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "oma/oma.hpp"

#ifndef OMA_VERSION
#define OMA_VERSION "0.0.0"
#endif

namespace {

using oma::Error;
using oma::ErrorKind;
using oma::json;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage: return 1;
    case ErrorKind::data: return 2;
    case ErrorKind::numerical: return 3;
  }
  return 2;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Collects provenance for one command and writes it next to the outputs.
/// Timings live here only, so the artifacts themselves stay byte-stable.
class Manifest {
 public:
  Manifest(std::string command, std::string prefix)
      : command_(std::move(command)), prefix_(std::move(prefix)) {}

  std::string path() const { return prefix_ + ".manifest.json"; }
  std::string name() const {
    const auto slash = path().find_last_of('/');
    return slash == std::string::npos ? path() : path().substr(slash + 1);
  }

  std::string read_input(const std::string& file) {
    std::string text = oma::read_text(file);
    inputs_.push_back({{"path", file}, {"fnv1a64", hex64(fnv1a(text))}});
    return text;
  }

  std::string read_config(const std::string& file) {
    configs_.push_back(file);
    return read_input(file);
  }

  void set(const std::string& key, json value) { extra_[key] = std::move(value); }

  template <class F>
  auto timed(const std::string& stage, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto result = f();
    timings_[stage] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
  }

  /// JSON artifacts carry a pointer back to this manifest.
  void write_json(const std::string& file, json j) {
    j["manifest"] = name();
    write(file, j.dump(2) + "\n");
  }

  void write(const std::string& file, const std::string& text) {
    oma::write_text(file, text);
    outputs_.push_back(file);
  }

  void finish() const {
    json j = {{"tool", "oma"},           {"version", OMA_VERSION}, {"command", command_},
              {"configs", configs_},     {"inputs", inputs_},      {"outputs", outputs_},
              {"timings_s", timings_}};
    for (const auto& [k, v] : extra_.items()) j[k] = v;
    oma::write_text(path(), j.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::string prefix_;
  std::vector<std::string> configs_;
  json inputs_ = json::array();
  std::vector<std::string> outputs_;
  std::map<std::string, double> timings_;
  json extra_ = json::object();
};

// ------------------------------------------------------------ shared options

struct NextOptions {
  int reference = 1;  // 1-based
  int max_lag = 1000;
  bool unbiased = false;
  bool no_detrend = false;

  void add(CLI::App* app) {
    app->add_option("--reference", reference, "reference channel (1-based)")->capture_default_str();
    app->add_option("--max-lag", max_lag, "maximum correlation lag in samples")->capture_default_str();
    app->add_flag("--unbiased", unbiased, "use the 1/(N-l) correlation estimator");
    app->add_flag("--no-detrend", no_detrend, "keep channel means");
  }

  oma::CorrelationOptions options() const {
    oma::CorrelationOptions o;
    o.normalization = unbiased ? oma::CorrelationNormalization::unbiased
                               : oma::CorrelationNormalization::biased;
    o.detrend = !no_detrend;
    return o;
  }

  oma::CorrelationSet run(const oma::TimeSeriesSet& ts) const {
    return oma::next_correlations(ts, reference - 1, max_lag, options());
  }

  json to_json() const {
    return {{"reference", reference},
            {"max_lag", max_lag},
            {"normalization", unbiased ? "unbiased" : "biased"},
            {"detrend", !no_detrend}};
  }
};

oma::TimeSeriesSet load_series(Manifest& man, const std::string& path) {
  return oma::to_time_series(oma::parse_csv(man.read_input(path), path), path);
}

struct FrvfOverrides {
  std::optional<int> n_poles, n_iterations;
  std::optional<std::string> weighting;
  std::vector<double> band;

  void add(CLI::App* app) {
    app->add_option("--n-poles", n_poles, "frvf: number of poles");
    app->add_option("--n-iterations", n_iterations, "frvf: relocation iterations");
    app->add_option("--weighting", weighting, "frvf: none | weak_inverse | strong_inverse");
    app->add_option("--band", band, "analysis band f_min f_max [Hz]")->expected(2);
  }

  void apply(oma::FitConfig& cfg) const {
    if (n_poles) cfg.n_poles = *n_poles;
    if (n_iterations) cfg.n_iterations = *n_iterations;
    if (weighting) cfg.weighting = oma::weighting_from_string(*weighting);
    if (!band.empty()) cfg.band = oma::Band{band[0], band[1]};
    cfg.validate();
  }
};

struct EraOverrides {
  std::optional<oma::Index> rows, cols, truncation, shift;

  void add(CLI::App* app) {
    app->add_option("--rows", rows, "era: Hankel block rows");
    app->add_option("--cols", cols, "era: Hankel columns");
    app->add_option("--truncation", truncation, "era: retained singular values");
    app->add_option("--shift", shift, "era: shift parameter");
  }

  void apply(oma::EraConfig& cfg) const {
    if (rows) cfg.rows = *rows;
    if (cols) cfg.cols = *cols;
    if (truncation) cfg.truncation = *truncation;
    if (shift) cfg.shift = *shift;
    cfg.validate();
  }
};

oma::Band nyquist_band(const oma::CorrelationSet& corr) { return {0.0, 0.5 / corr.dt}; }

// ------------------------------------------------------------ simulate

struct SimulateArgs {
  std::string spec, out;
  double noise = 0.0;
  std::uint64_t seed = 1;
  double fs = 3600.0;
  double duration = 30.0;
  int force_node = 1;
  double amplitude = 1.0;
};

void cmd_simulate(const SimulateArgs& a) {
  Manifest man("simulate", a.out);
  oma::BeamSpec spec = oma::BeamSpec::reference();
  if (!a.spec.empty()) {
    spec = oma::beam_spec_from_json(oma::parse_json(man.read_config(a.spec), a.spec));
  }
  const oma::StructuralModel model = oma::assemble_model(spec);
  const oma::ModeSet truth = oma::analytic_modes(model);
  oma::ImpulseOptions opt;
  opt.fs = a.fs;
  opt.duration = a.duration;
  opt.force_node = a.force_node;
  opt.amplitude = a.amplitude;
  oma::TimeSeriesSet ts = man.timed("simulate", [&] { return oma::impulse_response(model, opt); });
  ts = oma::add_noise(ts, a.noise, a.seed);

  man.set("seed", a.seed);
  man.set("noise", a.noise);
  man.write(a.out + ".csv", oma::format_csv(ts));
  json j = oma::to_json(truth, ts.labels);
  j["beam"] = oma::to_json(spec);
  man.write_json(a.out + ".modes.json", j);
  man.finish();
}

// ------------------------------------------------------------ preprocess

struct PreprocessArgs {
  std::vector<std::string> inputs;
  std::string rotation, out;
  std::optional<double> rate;
  double target_rate = 10.0;
  std::optional<int> factor;
};

void cmd_preprocess(const PreprocessArgs& a) {
  Manifest man("preprocess", a.out);
  std::vector<oma::RawRecord> records;
  for (const auto& path : a.inputs) records.push_back(oma::parse_csv(man.read_input(path), path));

  double rate = 0.0;
  if (a.rate) {
    rate = *a.rate;
  } else {
    // nominal rate of the first record from its median step
    const auto& t = records.front().timestamps;
    std::vector<double> steps;
    for (std::size_t k = 1; k < t.size(); ++k) {
      if (t[k] > t[k - 1]) steps.push_back(t[k] - t[k - 1]);
    }
    oma::require(!steps.empty(), ErrorKind::data, a.inputs.front() + ": cannot infer a rate");
    std::nth_element(steps.begin(), steps.begin() + steps.size() / 2, steps.end());
    rate = 1.0 / steps[steps.size() / 2];
  }

  oma::TimeSeriesSet ts = man.timed("align", [&] { return oma::ingest_and_align(records, rate); });
  if (!a.rotation.empty()) {
    const auto triads = oma::rotation_from_json(oma::parse_json(man.read_config(a.rotation), a.rotation));
    ts = man.timed("rotate", [&] { return oma::apply_rotation(ts, triads); });
  }

  int factor = 1;
  if (a.factor) {
    factor = *a.factor;
  } else if (rate > a.target_rate) {
    const double ratio = rate / a.target_rate;
    factor = static_cast<int>(std::lround(ratio));
    oma::require(std::abs(ratio - factor) < 1e-6 * ratio, ErrorKind::usage,
                 "preprocess: rate " + oma::format_double(rate) + " Hz is not a multiple of the " +
                     oma::format_double(a.target_rate) + " Hz target; pass --factor");
  }
  ts = man.timed("decimate", [&] { return oma::decimate(ts, factor); });

  man.set("rate", rate);
  man.set("factor", factor);
  man.write(a.out + ".csv", oma::format_csv(ts));
  man.finish();
}

// ------------------------------------------------------------ identify

struct IdentifyArgs {
  std::string data, method = "frvf", config, out;
  NextOptions next;
  FrvfOverrides frvf;
  EraOverrides era;
};

void cmd_identify(const IdentifyArgs& a) {
  Manifest man("identify", a.out);
  const oma::TimeSeriesSet ts = load_series(man, a.data);
  const oma::CorrelationSet corr = man.timed("next", [&] { return a.next.run(ts); });
  json cfg_json = json::object();
  if (!a.config.empty()) cfg_json = oma::parse_json(man.read_config(a.config), a.config);

  json report = {{"method", a.method}, {"next", a.next.to_json()}};
  oma::ModeSet modes;
  if (a.method == "frvf") {
    oma::FitConfig cfg = oma::fit_config_from_json(cfg_json);
    a.frvf.apply(cfg);
    if (!cfg.band) cfg.band = nyquist_band(corr);
    const oma::SpectrumSet spectra = oma::correlations_to_spectra(corr, *cfg.band);
    const oma::FitReport fr = man.timed("frvf", [&] { return oma::fit_with_report(spectra, cfg); });
    modes = oma::extract_modes(fr.model, cfg.n_poles);
    report["config"] = oma::to_json(cfg);
    report["rmse_per_iteration"] = fr.rmse_per_iteration;
    report["rmse"] = oma::rmse(fr.model, spectra);
    report["model"] = oma::to_json(fr.model);
  } else if (a.method == "era") {
    oma::EraConfig cfg = oma::era_config_from_json(cfg_json);
    a.era.apply(cfg);
    const oma::EraRealizer realizer = man.timed("hankel_svd", [&] { return oma::EraRealizer(corr, cfg); });
    modes = man.timed("era", [&] { return realizer.modes(cfg.truncation); });
    const auto& sv = realizer.singular_values();
    report["config"] = oma::to_json(cfg);
    report["singular_values"] = std::vector<double>(sv.data(), sv.data() + sv.size());
  } else {
    throw Error(ErrorKind::usage, "identify: unknown method '" + a.method + "'");
  }
  man.write_json(a.out + ".modes.json", oma::to_json(modes, ts.labels));
  man.write_json(a.out + ".report.json", report);
  man.finish();
}

// ------------------------------------------------------------ stabilize

struct StabilizeArgs {
  std::string data, method = "frvf", config, criteria, out;
  NextOptions next;
  FrvfOverrides frvf;
  EraOverrides era;
};

void cmd_stabilize(const StabilizeArgs& a) {
  Manifest man("stabilize", a.out);
  const oma::TimeSeriesSet ts = load_series(man, a.data);
  const oma::CorrelationSet corr = man.timed("next", [&] { return a.next.run(ts); });
  json cfg_json = json::object();
  if (!a.config.empty()) cfg_json = oma::parse_json(man.read_config(a.config), a.config);
  oma::ScreenCriteria crit;
  if (!a.criteria.empty()) {
    crit = oma::screen_criteria_from_json(oma::parse_json(man.read_config(a.criteria), a.criteria));
  }

  oma::StabilizationDiagram diag;
  json summary = {{"method", a.method}, {"next", a.next.to_json()}, {"criteria", oma::to_json(crit)}};
  if (a.method == "frvf") {
    oma::FitConfig cfg = oma::fit_config_from_json(cfg_json);
    a.frvf.apply(cfg);
    if (!cfg.band) cfg.band = oma::Band{crit.f_min, std::min(crit.f_max, 0.5 / corr.dt)};
    const oma::SpectrumSet spectra = oma::correlations_to_spectra(corr, *cfg.band);
    diag = man.timed("sweep", [&] { return oma::sweep_frvf(spectra, crit, cfg); });
    summary["config"] = oma::to_json(cfg);
  } else if (a.method == "era") {
    oma::EraConfig cfg = oma::era_config_from_json(cfg_json);
    a.era.apply(cfg);
    diag = man.timed("sweep", [&] { return oma::sweep_era(corr, crit, cfg); });
    summary["config"] = oma::to_json(cfg);
  } else {
    throw Error(ErrorKind::usage, "stabilize: unknown method '" + a.method + "'");
  }
  const oma::ModeSet stable = oma::select_stable(diag, crit);

  json dj = oma::to_json(diag);
  dj.update(summary);
  man.write_json(a.out + ".diagram.json", dj);
  man.write(a.out + ".diagram.csv", oma::format_diagram_csv(diag));
  man.write_json(a.out + ".modes.json", oma::to_json(stable, ts.labels));
  man.finish();
}

// ------------------------------------------------------------ track

struct TrackArgs {
  std::string reference, out;
  std::vector<std::string> candidates;
  double f_tol = 0.10;
  double mac_min = 0.7;
};

void cmd_track(const TrackArgs& a) {
  Manifest man("track", a.out);
  const oma::ModeSet ref =
      oma::mode_set_from_json(oma::parse_json(man.read_input(a.reference), a.reference));
  json reports = json::array();
  std::string csv = "candidate_file,reference,candidate,df_percent,mac,accepted,reason\n";
  for (const auto& path : a.candidates) {
    const oma::ModeSet cand = oma::mode_set_from_json(oma::parse_json(man.read_input(path), path));
    const oma::TrackReport rep = oma::track(ref, cand, a.f_tol, a.mac_min);
    reports.push_back({{"candidate_file", path}, {"report", oma::to_json(rep)}});
    std::istringstream lines(oma::format_track_csv(rep));
    std::string line;
    std::getline(lines, line);  // header
    while (std::getline(lines, line)) csv += path + "," + line + "\n";
  }
  man.write_json(a.out + ".track.json", {{"reference_file", a.reference},
                                         {"f_tol", a.f_tol},
                                         {"mac_min", a.mac_min},
                                         {"candidates", reports}});
  man.write(a.out + ".track.csv", csv);
  man.finish();
}

// ------------------------------------------------------------ plotdata

struct PlotArgs {
  std::string report, data, diagram, out;
};

void cmd_plotdata(const PlotArgs& a) {
  oma::require(!a.report.empty() || !a.diagram.empty(), ErrorKind::usage,
               "plotdata: give --report with --data, or --diagram");
  Manifest man("plotdata", a.out);
  if (!a.report.empty()) {
    oma::require(!a.data.empty(), ErrorKind::usage, "plotdata: --report needs --data");
    const json rep = oma::parse_json(man.read_input(a.report), a.report);
    oma::require(rep.value("method", "") == "frvf" && rep.contains("model"), ErrorKind::data,
                 a.report + ": not an frvf identify report");
    const json& nx = rep.at("next");
    NextOptions next;
    next.reference = nx.at("reference").get<int>();
    next.max_lag = nx.at("max_lag").get<int>();
    next.unbiased = nx.at("normalization").get<std::string>() == "unbiased";
    next.no_detrend = !nx.at("detrend").get<bool>();
    const oma::FitConfig cfg = oma::fit_config_from_json(rep.at("config"));

    const oma::TimeSeriesSet ts = load_series(man, a.data);
    const oma::SpectrumSet spectra = oma::correlations_to_spectra(next.run(ts), *cfg.band);
    const oma::RationalModel model = oma::rational_model_from_json(rep.at("model"));
    oma::require(model.channels() == spectra.channels(), ErrorKind::data,
                 "plotdata: model and data channel counts differ");
    const oma::SpectrumSet fitted = oma::evaluate(model, spectra.freqs);

    std::string csv = "x,y,series\n";
    for (oma::Index c = 0; c < spectra.channels(); ++c) {
      const std::string label = c < static_cast<oma::Index>(ts.labels.size())
                                    ? ts.labels[c] : std::to_string(c + 1);
      for (const auto& [tag, set] : {std::pair{"data", &spectra}, std::pair{"fit", &fitted}}) {
        for (oma::Index k = 0; k < set->size(); ++k) {
          csv += oma::format_double(set->freqs[k]) + ',' +
                 oma::format_double(std::abs(set->data(c, k))) + ',' + tag + ':' + label + '\n';
        }
      }
    }
    man.write(a.out + ".frf.csv", csv);

    std::string rm = "x,y,series\n";
    const auto hist = rep.at("rmse_per_iteration").get<std::vector<double>>();
    for (std::size_t i = 0; i < hist.size(); ++i) {
      rm += std::to_string(i + 1) + ',' + oma::format_double(hist[i]) + ",rmse\n";
    }
    man.write(a.out + ".rmse.csv", rm);
  }
  if (!a.diagram.empty()) {
    const json d = oma::parse_json(man.read_input(a.diagram), a.diagram);
    std::string csv = "x,y,series\n";
    try {
      for (const json& o : d.at("orders")) {
        const int order = o.at("order").get<int>();
        for (const json& m : o.at("modes")) {
          const bool f = m.at("freq_stable").get<bool>();
          const bool all = f && m.at("damp_stable").get<bool>() && m.at("shape_stable").get<bool>();
          const char* series = all ? "stable" : f ? "frequency_stable" : "unstable";
          csv += oma::format_double(m.at("frequency").get<double>()) + ',' + std::to_string(order) +
                 ',' + series + '\n';
        }
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::data, a.diagram + ": " + e.what());
    }
    man.write(a.out + ".diagram.csv", csv);
  }
  man.finish();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Operational modal analysis with NExT-FRVF and NExT-ERA"};
  app.set_version_flag("--version", OMA_VERSION);
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "simulate the cantilever beam impulse response");
  s->add_option("--spec", sim.spec, "beam spec JSON (default: reference beam)");
  s->add_option("--noise", sim.noise, "noise level as a fraction of channel std")->capture_default_str();
  s->add_option("--seed", sim.seed, "noise seed")->capture_default_str();
  s->add_option("--fs", sim.fs, "sampling rate [Hz]")->capture_default_str();
  s->add_option("--duration", sim.duration, "record length [s]")->capture_default_str();
  s->add_option("--force-node", sim.force_node, "loaded node (root is 0)")->capture_default_str();
  s->add_option("--amplitude", sim.amplitude, "pulse force [N]")->capture_default_str();
  s->add_option("--out", sim.out, "output prefix")->required();

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "align, rotate and decimate raw records");
  p->add_option("--in", pre.inputs, "raw record CSV (repeatable)")->required();
  p->add_option("--rate", pre.rate, "alignment rate [Hz] (default: first record's rate)");
  p->add_option("--rotation", pre.rotation, "rotation config JSON");
  p->add_option("--target-rate", pre.target_rate, "rate after decimation [Hz]")->capture_default_str();
  p->add_option("--factor", pre.factor, "explicit decimation factor (overrides --target-rate)");
  p->add_option("--out", pre.out, "output prefix")->required();

  IdentifyArgs id;
  auto* i = app.add_subcommand("identify", "NExT followed by FRVF or ERA");
  i->add_option("--data", id.data, "time-series CSV")->required();
  i->add_option("--method", id.method, "frvf | era")->capture_default_str();
  i->add_option("--config", id.config, "method config JSON");
  i->add_option("--out", id.out, "output prefix")->required();
  id.next.add(i);
  id.frvf.add(i);
  id.era.add(i);

  StabilizeArgs st;
  auto* z = app.add_subcommand("stabilize", "model-order sweep and stable-mode selection");
  z->add_option("--data", st.data, "time-series CSV")->required();
  z->add_option("--method", st.method, "frvf | era")->capture_default_str();
  z->add_option("--config", st.config, "method config JSON");
  z->add_option("--criteria", st.criteria, "stabilization criteria JSON");
  z->add_option("--out", st.out, "output prefix")->required();
  st.next.add(z);
  st.frvf.add(z);
  st.era.add(z);

  TrackArgs tr;
  auto* t = app.add_subcommand("track", "match candidate mode sets against a reference");
  t->add_option("--reference", tr.reference, "reference modes JSON")->required();
  t->add_option("--candidate", tr.candidates, "candidate modes JSON (repeatable)")->required();
  t->add_option("--f-tol", tr.f_tol, "relative frequency tolerance")->capture_default_str();
  t->add_option("--mac-min", tr.mac_min, "minimum MAC")->capture_default_str();
  t->add_option("--out", tr.out, "output prefix")->required();

  PlotArgs pl;
  auto* g = app.add_subcommand("plotdata", "export (x, y, series) CSVs for plotting");
  g->add_option("--report", pl.report, "identify report JSON (frvf)");
  g->add_option("--data", pl.data, "time-series CSV the report was fitted on");
  g->add_option("--diagram", pl.diagram, "stabilization diagram JSON");
  g->add_option("--out", pl.out, "output prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*s) cmd_simulate(sim);
    else if (*p) cmd_preprocess(pre);
    else if (*i) cmd_identify(id);
    else if (*z) cmd_stabilize(st);
    else if (*t) cmd_track(tr);
    else if (*g) cmd_plotdata(pl);
  } catch (const Error& e) {
    std::cerr << "oma: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "oma: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
