// Scenario builders: each call reproduces one measurement of the enhanced
// readout study and returns its data as a table with provenance metadata.
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nvreadout/photodynamics.hpp"
#include "nvreadout/pulse_engine.hpp"
#include "nvreadout/spin_model.hpp"
#include "nvreadout/types.hpp"

namespace nvreadout {

struct ExperimentSettings {
  double trace_duration = 6000.0;  // ns, readout transients and SNR curves
  double bin_width = 1.0;          // ns
  int shots = 1;
  double readout = 4000.0;      // ns, t_p used for sequence signals (Rabi, spectra)
  double dark_wait = 5000.0;    // ns
  double mw_rabi = 10.0;        // MHz, electron drive
  double rf_rabi = 0.5;         // MHz, nuclear drive
  double mw_probe_rabi = 0.1;   // MHz, hyperfine-selective ODMR probe
  double rf_probe_rabi = 0.02;  // MHz, Zeeman-selective nuclear probe
  double selectivity_window = 10.0;
  double excited_lifetime = 10.0;  // ns, sets the excited-state ESR linewidth
  FlipFlopOptions flip_flop;

  SequenceSettings sequence() const {
    SequenceSettings s;
    s.bin_width = bin_width;
    s.dark_wait = dark_wait;
    s.flip_flop = flip_flop;
    s.pulses.selectivity_window = selectivity_window;
    return s;
  }
};

/// Tabular output: the first column is the independent variable, every
/// column name carries its unit suffix.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  nlohmann::json metadata = nlohmann::json::object();
};

inline nlohmann::json to_json(const NvParameters& p) {
  return {{"d_gs", p.d_gs}, {"d_es", p.d_es},       {"a_gs", p.a_gs},       {"a_es", p.a_es},
          {"q", p.q},       {"gamma_e", p.gamma_e}, {"gamma_n", p.gamma_n}, {"nuclear_spin", p.nuclear_spin}};
}

inline nlohmann::json to_json(const RateParameters& r) {
  return {{"k_exc", r.k_exc},         {"k_rad", r.k_rad},         {"k_isc_pm1", r.k_isc_pm1},
          {"k_isc_0", r.k_isc_0},     {"k_singlet", r.k_singlet}, {"detection_efficiency", r.detection_efficiency}};
}

inline nlohmann::json to_json(const ExperimentSettings& s) {
  nlohmann::json j = {{"trace_duration", s.trace_duration},
                      {"bin_width", s.bin_width},
                      {"shots", s.shots},
                      {"readout", s.readout},
                      {"dark_wait", s.dark_wait},
                      {"mw_rabi", s.mw_rabi},
                      {"rf_rabi", s.rf_rabi},
                      {"mw_probe_rabi", s.mw_probe_rabi},
                      {"rf_probe_rabi", s.rf_probe_rabi},
                      {"selectivity_window", s.selectivity_window},
                      {"excited_lifetime", s.excited_lifetime},
                      {"flip_flop_epsilon", s.flip_flop.epsilon}};
  j["forced_lac_probability"] = s.flip_flop.forced_lac_probability ? nlohmann::json(*s.flip_flop.forced_lac_probability)
                                                                  : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json provenance(const std::string& experiment, const NvParameters& params, const RateParameters* rates,
                                 const ExperimentSettings& settings) {
  nlohmann::json j;
  j["experiment"] = experiment;
  j["library"] = std::string("nvreadout ") + kVersion;
  j["nv_parameters"] = to_json(params);
  if (rates) j["rate_parameters"] = to_json(*rates);
  j["settings"] = to_json(settings);
  return j;
}

/// Comma-free state tag for column names, e.g. "(0;+1)" or "(-1;+1)e".
inline std::string column_tag(const SpinStateLabel& s) {
  if (s.manifold == Manifold::singlet) return "S(" + format_half_integer(s.m_i) + ")";
  std::string out = "(" + format_half_integer(s.m_s) + ";" + format_half_integer(s.m_i) + ")";
  return s.manifold == Manifold::excited ? out + "e" : out;
}

inline std::string column_tag(const StatePair& p) { return column_tag(p.a) + column_tag(p.b); }

inline std::vector<double> bin_edges(double duration, double bin_width) {
  const int n = bin_count(duration, bin_width);
  std::vector<double> out(n);
  for (int k = 0; k < n; ++k) out[k] = (k + 1) * bin_width;
  return out;
}

// ---------------------------------------------------------------------------
// Conventional versus enhanced readout

struct ReadoutComparison {
  double field = 0.0;
  FluorescenceTrace bright;        // |0,+I>
  FluorescenceTrace conventional;  // |-1,+I>
  FluorescenceTrace enhanced;      // |-1,-I>
  double signal_conventional = 0.0;
  double signal_enhanced = 0.0;
  double signal_ratio = 0.0;
  SnrCurve snr_conventional;
  SnrCurve snr_enhanced;
  double snr_ratio = 0.0;
  nlohmann::json metadata;

  Table transients() const {
    Table t{"transient", {"t_ns", "n_bright", "n_conventional", "n_enhanced", "diff_conventional", "diff_enhanced"}, {}, metadata};
    for (std::size_t i = 0; i < bright.values.size(); ++i) {
      const double b = bright.values[i], c = conventional.values[i], e = enhanced.values[i];
      t.rows.push_back({(i + 1) * bright.bin_width, b, c, e, b - c, b - e});
    }
    return t;
  }

  Table snr_table() const {
    Table t{"snr", {"t_p_ns", "signal_conventional", "signal_enhanced", "snr_conventional", "snr_enhanced"}, {}, metadata};
    for (std::size_t i = 0; i < snr_conventional.pulse_lengths.size(); ++i)
      t.rows.push_back({snr_conventional.pulse_lengths[i], snr_conventional.signal[i], snr_enhanced.signal[i],
                        snr_conventional.snr[i], snr_enhanced.snr[i]});
    return t;
  }
};

/// Readout transients of |0,+I>, |-1,+I> and |-1,-I>, the dark states
/// prepared from |0,+I> by symbolic pi-pulses, with integrated signals and
/// SNR curves over every bin edge of the trace.
inline ReadoutComparison conventional_vs_enhanced(const NvParameters& params, const RateParameters& rates, double field,
                                                  const ExperimentSettings& settings = {}) {
  const double top = params.nuclear_spin;
  const auto m = build_rate_matrix(params, rates, field, true, settings.flip_flop);
  const auto ground_eig = eigensystem(params, field, Manifold::ground);
  const auto bright0 = PopulationVector::pure(m.scheme, ground(0, top));

  auto prepare = [&](const std::vector<Pulse>& pulses) {
    PopulationVector p = bright0;
    for (const auto& pulse : pulses) p = apply_pulse(p, pulse, ground_eig);
    return p;
  };
  auto trace = [&](const PopulationVector& p0, const SpinStateLabel& label) {
    auto t = fluorescence_trace(m, rates, p0, settings.trace_duration, settings.bin_width);
    t.initial_state = label;
    return t;
  };

  ReadoutComparison out;
  out.field = field;
  out.bright = trace(bright0, ground(0, top));
  out.conventional = trace(prepare(conventional_preparation(top)), ground(-1, top));
  out.enhanced = trace(prepare(enhanced_preparation(top)), ground(-1, -top));

  const double t_end = out.bright.duration();
  out.signal_conventional = cumulative_signal(out.bright, out.conventional, t_end);
  out.signal_enhanced = cumulative_signal(out.bright, out.enhanced, t_end);
  out.signal_ratio = out.signal_enhanced / out.signal_conventional;

  const auto grid = bin_edges(settings.trace_duration, settings.bin_width);
  out.snr_conventional = snr_curve(out.bright, out.conventional, grid, settings.shots, ReadoutMode::conventional);
  out.snr_enhanced = snr_curve(out.bright, out.enhanced, grid, settings.shots, ReadoutMode::enhanced);
  out.snr_ratio = out.snr_enhanced.max_snr() / out.snr_conventional.max_snr();

  out.metadata = provenance("conventional_vs_enhanced", params, &rates, settings);
  out.metadata["field_G"] = field;
  return out;
}

// ---------------------------------------------------------------------------
// Electron Rabi oscillations

struct RabiResult {
  ReadoutMode mode = ReadoutMode::conventional;
  double drive_frequency = 0.0;  // MHz
  Spectrum points;               // x = mw pulse duration (ns)
  nlohmann::json metadata;

  /// Peak-to-peak signal over the duration grid.
  double contrast() const {
    auto [lo, hi] = std::minmax_element(points.begin(), points.end(),
                                        [](const auto& a, const auto& b) { return a.signal < b.signal; });
    return hi->signal - lo->signal;
  }
};

/// Sweeps the duration of a resonant mw pulse on |0,+I> <-> |-1,+I>; the
/// enhanced mode moves |-1,+I> down to |-1,-I> with rf pi-pulses before the
/// readout. A zero duration means no mw pulse.
inline RabiResult rabi_experiment(const NvParameters& params, const RateParameters& rates, double field, ReadoutMode mode,
                                  const std::vector<double>& durations, const ExperimentSettings& settings = {}) {
  if (durations.empty()) throw std::invalid_argument("duration grid is empty");
  const double top = params.nuclear_spin;
  const SequenceRunner runner(params, rates, field, settings.sequence());
  const double f = transition_frequency(runner.ground_eigensystem(), ground(0, top), ground(-1, top));
  const auto reference = runner.readout(runner.initial_state(), settings.readout);

  std::vector<Pulse> nuclear;
  if (mode == ReadoutMode::enhanced) {
    auto chain = enhanced_preparation(top);
    nuclear.assign(chain.begin() + 1, chain.end());
  }

  RabiResult out;
  out.mode = mode;
  out.drive_frequency = f;
  for (double d : durations) {
    if (d < 0.0) throw std::invalid_argument("mw duration must be >= 0");
    PulseSequence seq{{}, field, settings.readout};
    if (d > 0.0) seq.pulses.push_back(Pulse::driven(PulseKind::mw, f, settings.mw_rabi, d));
    seq.pulses.insert(seq.pulses.end(), nuclear.begin(), nuclear.end());
    const auto r = runner.run(seq, reference);
    out.points.push_back({d, r.trace.cumulative(settings.readout), r.signal});
  }
  out.metadata = provenance("rabi", params, &rates, settings);
  out.metadata["field_G"] = field;
  out.metadata["mode"] = to_string(mode);
  out.metadata["drive_frequency_MHz"] = f;
  return out;
}

// ---------------------------------------------------------------------------
// Spectra

struct SpectrumResult {
  std::string axis = "frequency_MHz";
  Spectrum points;
  nlohmann::json metadata;

  Table table(const std::string& name) const {
    Table t{name, {axis, "counts", "contrast"}, {}, metadata};
    for (const auto& p : points) t.rows.push_back({p.x, p.counts, p.signal});
    return t;
  }
};

/// Positions of the `count` deepest local minima of the counts, ascending.
inline std::vector<double> deepest_dips(const Spectrum& s, std::size_t count) {
  std::vector<std::size_t> minima;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    const double c = s[i].counts;
    if (c < s[i - 1].counts && c <= s[i + 1].counts) minima.push_back(i);
  }
  std::stable_sort(minima.begin(), minima.end(), [&](std::size_t a, std::size_t b) { return s[a].counts < s[b].counts; });
  if (minima.size() > count) minima.resize(count);
  std::vector<double> out;
  for (auto i : minima) out.push_back(s[i].x);
  std::sort(out.begin(), out.end());
  return out;
}

/// Ground-state ODMR: a hyperfine-selective mw pi-pulse of swept frequency
/// after initialisation, then readout.
inline SpectrumResult odmr_spectrum(const NvParameters& params, const RateParameters& rates, double field,
                                    const std::vector<double>& frequencies, const ExperimentSettings& settings = {}) {
  PulseSequence tmpl{{Pulse::pi(PulseKind::mw, 0.0, settings.mw_probe_rabi)}, field, settings.readout};
  SpectrumResult out;
  out.points = sweep(tmpl, SweepAxis::frequency_of(0), frequencies, params, rates, settings.sequence());
  out.metadata = provenance("odmr", params, &rates, settings);
  out.metadata["field_G"] = field;
  return out;
}

/// Nuclear spin resonance in the m_S = 0 or m_S = -1 branch: |0,+I> is
/// moved to |m_S,+I-1>, a selective rf pi-pulse of swept frequency acts,
/// and the population left in |m_S,+I-1> is mapped back to |0,+I>. Nuclear
/// states the probe moved away are read out through the flip-flop cascade.
inline SpectrumResult nuclear_resonance_spectrum(const NvParameters& params, const RateParameters& rates, double field,
                                                 int electron_branch, const std::vector<double>& frequencies,
                                                 const ExperimentSettings& settings = {}) {
  if (electron_branch != 0 && electron_branch != -1) throw std::invalid_argument("electron branch must be 0 or -1");
  const double top = params.nuclear_spin;
  const int b = electron_branch;
  std::vector<Pulse> pulses;
  if (b == -1) pulses.push_back(Pulse::symbolic(PulseKind::mw, ground(0, top), ground(-1, top)));
  pulses.push_back(Pulse::symbolic(PulseKind::rf, ground(b, top), ground(b, top - 1.0)));
  const std::size_t probe = pulses.size();
  pulses.push_back(Pulse::pi(PulseKind::rf, 0.0, settings.rf_probe_rabi));
  pulses.push_back(Pulse::symbolic(PulseKind::rf, ground(b, top - 1.0), ground(b, top)));
  if (b == -1) pulses.push_back(Pulse::symbolic(PulseKind::mw, ground(-1, top), ground(0, top)));

  PulseSequence tmpl{pulses, field, settings.readout};
  SpectrumResult out;
  out.points = sweep(tmpl, SweepAxis::frequency_of(probe), frequencies, params, rates, settings.sequence());
  out.metadata = provenance("nuclear_resonance", params, &rates, settings);
  out.metadata["field_G"] = field;
  out.metadata["electron_branch"] = b;
  return out;
}

struct EsrLine {
  double m_i = 0.0;
  double frequency = 0.0;  // MHz
};

struct EsrSpectrum {
  std::vector<EsrLine> lines;
  double fwhm = 0.0;  // MHz
  Spectrum points;    // counts = summed Lorentzian intensity, signal = same
  nlohmann::json metadata;

  Table table() const {
    Table t{"esr_excited", {"frequency_MHz", "intensity"}, {}, metadata};
    for (const auto& p : points) t.rows.push_back({p.x, p.counts});
    return t;
  }
};

/// Lorentzian full width 1 / (pi tau) of a level with lifetime tau (ns), MHz.
inline double lifetime_linewidth(double lifetime_ns) { return 1e3 / (std::numbers::pi * lifetime_ns); }

/// Synthetic excited-state m_S = 0 <-> -1 spectrum: one unit-height
/// Lorentzian per nuclear projection at the diagonalised transition
/// frequency, width set by the excited-state lifetime.
inline EsrSpectrum excited_state_esr(const NvParameters& params, double field, const std::vector<double>& frequencies,
                                     const ExperimentSettings& settings = {}) {
  if (!(settings.excited_lifetime > 0.0)) throw std::invalid_argument("excited lifetime must be > 0");
  const auto eig = eigensystem(params, field, Manifold::excited);
  EsrSpectrum out;
  out.fwhm = lifetime_linewidth(settings.excited_lifetime);
  for (double m_i : nuclear_projections(params.nuclear_spin))
    out.lines.push_back({m_i, transition_frequency(eig, excited(0, m_i), excited(-1, m_i))});
  const double half = 0.5 * out.fwhm;
  for (double f : frequencies) {
    double v = 0.0;
    for (const auto& l : out.lines) v += half * half / ((f - l.frequency) * (f - l.frequency) + half * half);
    out.points.push_back({f, v, v});
  }
  out.metadata = provenance("esr_excited", params, nullptr, settings);
  out.metadata["field_G"] = field;
  return out;
}

// ---------------------------------------------------------------------------
// Field dependence

struct FieldScanRow {
  double field = 0.0;
  std::vector<double> lac_probabilities;  // one per anticrossing pair
  double signal_ratio = 0.0;
  double snr_ratio = 0.0;
  double optimal_tp_conventional = 0.0;
  double optimal_tp_enhanced = 0.0;
};

struct FieldScan {
  std::vector<StatePair> pairs;
  std::vector<FieldScanRow> rows;
  nlohmann::json metadata;

  Table table() const {
    Table t{"snr_vs_field", {"field_G"}, {}, metadata};
    for (const auto& p : pairs) t.columns.push_back("p_ff_" + column_tag(p));
    for (const char* c : {"signal_ratio", "snr_ratio", "t_p_conventional_ns", "t_p_enhanced_ns"}) t.columns.push_back(c);
    for (const auto& r : rows) {
      std::vector<double> row{r.field};
      row.insert(row.end(), r.lac_probabilities.begin(), r.lac_probabilities.end());
      row.insert(row.end(), {r.signal_ratio, r.snr_ratio, r.optimal_tp_conventional, r.optimal_tp_enhanced});
      t.rows.push_back(std::move(row));
    }
    return t;
  }
};

/// Enhanced-over-conventional signal and max-SNR ratios across fields.
inline FieldScan snr_vs_field(const NvParameters& params, const RateParameters& rates, const std::vector<double>& fields,
                              const ExperimentSettings& settings = {}) {
  if (fields.empty()) throw std::invalid_argument("field grid is empty");
  FieldScan out;
  out.pairs = lac_pairs(params.nuclear_spin);
  for (double b : fields) {
    const auto cmp = conventional_vs_enhanced(params, rates, b, settings);
    const auto lac = flip_flop_probability(params, b);
    FieldScanRow row;
    row.field = b;
    for (const auto& p : out.pairs) row.lac_probabilities.push_back(lac.probability(p.a, p.b));
    row.signal_ratio = cmp.signal_ratio;
    row.snr_ratio = cmp.snr_ratio;
    row.optimal_tp_conventional = cmp.snr_conventional.optimal_pulse_length();
    row.optimal_tp_enhanced = cmp.snr_enhanced.optimal_pulse_length();
    out.rows.push_back(std::move(row));
  }
  out.metadata = provenance("snr_vs_field", params, &rates, settings);
  out.metadata["fields_G"] = fields;
  return out;
}

}  // namespace nvreadout
