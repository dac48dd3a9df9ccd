// Simulation configuration: a line-based `key = value` document with `#`
// comments. Every key has a default; unknown keys and out-of-range values
// are rejected with the offending line or flag named.
#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nvreadout/experiments.hpp"
#include "nvreadout/photodynamics.hpp"
#include "nvreadout/types.hpp"

namespace nvreadout {

enum class OutputFormat { csv, json };

/// Field selection: "auto" (per-command default), "lac" (operating
/// anticrossing field), a value in G, or a range "start:stop:step".
struct FieldSpec {
  enum class Kind { automatic, lac, value, range };
  Kind kind = Kind::automatic;
  double start = 0.0;
  double stop = 0.0;
  double step = 0.0;

  friend bool operator==(const FieldSpec&, const FieldSpec&) = default;
};

struct SimulationConfig {
  std::string isotope = "14N";
  NvParameters nv;
  RateParameters rates;
  ExperimentSettings settings;
  FieldSpec field;
  std::string manifold = "ground";
  std::string frequency_range;  // empty: per-command default
  std::string duration_range;
  int branch = 0;
  std::vector<double> spins{1.0};
  OutputFormat format = OutputFormat::csv;
  std::string output;  // empty: <command>.<format>

  friend bool operator==(const SimulationConfig& a, const SimulationConfig& b) {
    return a.isotope == b.isotope && a.nv == b.nv && a.rates == b.rates && to_json(a.settings) == to_json(b.settings) &&
           a.field == b.field && a.manifold == b.manifold && a.frequency_range == b.frequency_range &&
           a.duration_range == b.duration_range && a.branch == b.branch && a.spins == b.spins && a.format == b.format &&
           a.output == b.output;
  }
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One `key = value` assignment and where it came from ("line 3", "--q").
struct ConfigEntry {
  std::string key;
  std::string value;
  std::string origin;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_number(const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected a number, got '" + text + "'");
  }
  if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument("expected a number, got '" + text + "'");
  return v;
}

inline int parse_int(const std::string& text) {
  const double v = parse_number(text);
  if (v != std::round(v)) throw std::invalid_argument("expected an integer, got '" + text + "'");
  return static_cast<int>(v);
}

/// Shortest decimal text that parses back to the same double.
inline std::string exact(double v) {
  char buf[40];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::stod(buf) == v) break;
  }
  return buf;
}

}  // namespace detail

/// "start:stop:step" (inclusive of stop within rounding) or a single value.
inline std::vector<double> parse_grid(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ':');) parts.push_back(detail::trim(part));
  if (parts.size() == 1) return {detail::parse_number(parts[0])};
  if (parts.size() != 3) throw std::invalid_argument("expected start:stop:step, got '" + text + "'");
  const double start = detail::parse_number(parts[0]);
  const double stop = detail::parse_number(parts[1]);
  const double step = detail::parse_number(parts[2]);
  if (!(step > 0.0) || stop < start) throw std::invalid_argument("grid '" + text + "' needs step > 0 and stop >= start");
  const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  if (n > 10'000'000) throw std::invalid_argument("grid '" + text + "' has too many points");
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = start + static_cast<double>(k) * step;
  return out;
}

inline FieldSpec parse_field_spec(const std::string& text) {
  if (text == "auto") return {};
  if (text == "lac") return {FieldSpec::Kind::lac};
  const auto grid = parse_grid(text);
  for (double b : grid)
    if (b < 0.0) throw std::invalid_argument("field must be >= 0 G");
  if (text.find(':') == std::string::npos) return {FieldSpec::Kind::value, grid[0], grid[0], 0.0};
  std::stringstream ss(text);
  std::string a, b, c;
  std::getline(ss, a, ':');
  std::getline(ss, b, ':');
  std::getline(ss, c, ':');
  return {FieldSpec::Kind::range, detail::parse_number(detail::trim(a)), detail::parse_number(detail::trim(b)),
          detail::parse_number(detail::trim(c))};
}

inline std::string to_string(const FieldSpec& f) {
  switch (f.kind) {
    case FieldSpec::Kind::automatic: return "auto";
    case FieldSpec::Kind::lac: return "lac";
    case FieldSpec::Kind::value: return detail::exact(f.start);
    case FieldSpec::Kind::range:
      return detail::exact(f.start) + ":" + detail::exact(f.stop) + ":" + detail::exact(f.step);
  }
  return "auto";
}

inline std::vector<double> parse_spins(const std::string& text) {
  std::vector<double> out;
  if (detail::trim(text).empty()) return out;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    const auto t = detail::trim(part);
    const auto slash = t.find('/');
    const double v = slash == std::string::npos
                         ? detail::parse_number(t)
                         : detail::parse_number(detail::trim(t.substr(0, slash))) / detail::parse_number(detail::trim(t.substr(slash + 1)));
    out.push_back(v);
  }
  theoretical_enhancement(out);  // validates half-integers
  return out;
}

namespace detail {

struct KeySpec {
  const char* name;
  const char* doc;
};

}  // namespace detail

/// Every accepted key with its meaning, in serialisation order.
inline const std::vector<detail::KeySpec>& config_schema() {
  static const std::vector<detail::KeySpec> keys = {
      {"isotope", "14N or 15N; selects the default Hamiltonian constants"},
      {"d_gs", "ground-state zero-field splitting, MHz"},
      {"d_es", "excited-state zero-field splitting, MHz"},
      {"a_gs", "ground-state hyperfine constant, MHz"},
      {"a_es", "excited-state hyperfine constant, MHz"},
      {"q", "nuclear quadrupole splitting, MHz"},
      {"gamma_e", "electron gyromagnetic ratio, MHz/G"},
      {"gamma_n", "nuclear gyromagnetic ratio, MHz/G"},
      {"nuclear_spin", "nuclear spin I (1 or 1/2 as 0.5)"},
      {"k_exc", "laser excitation rate, 1/ns"},
      {"k_rad", "radiative decay rate, 1/ns"},
      {"k_isc_pm1", "ISC rate from excited m_S = +-1, 1/ns"},
      {"k_isc_0", "ISC rate from excited m_S = 0, 1/ns"},
      {"k_singlet", "singlet decay rate, 1/ns"},
      {"detection_efficiency", "fraction of radiative decays detected"},
      {"field", "auto | lac | value in G | start:stop:step"},
      {"manifold", "ground | excited (levels)"},
      {"frequency_range", "start:stop:step in MHz (odmr, endor, esr-excited)"},
      {"duration_range", "start:stop:step in ns (rabi)"},
      {"branch", "electron branch 0 or -1 (endor)"},
      {"spins", "comma-separated nuclear spins (enhancement)"},
      {"trace_duration", "readout transient length, ns"},
      {"bin_width", "time bin, ns"},
      {"shots", "number of repetitions in the SNR"},
      {"readout", "readout pulse length for sequence signals, ns"},
      {"dark_wait", "dark relaxation after laser pulses, ns"},
      {"mw_rabi", "electron Rabi frequency, MHz"},
      {"rf_rabi", "nuclear Rabi frequency, MHz"},
      {"mw_probe_rabi", "ODMR probe Rabi frequency, MHz"},
      {"rf_probe_rabi", "nuclear probe Rabi frequency, MHz"},
      {"selectivity_window", "drive reaches transitions within window * Rabi frequency"},
      {"excited_lifetime", "excited-state lifetime for the ESR linewidth, ns"},
      {"forced_lac_probability", "none | flip-flop probability imposed on anticrossing pairs"},
      {"flip_flop_epsilon", "regulariser of the exchange rate at p = 1"},
      {"output_format", "csv | json"},
      {"output", "output file path (default <command>.<format>)"},
  };
  return keys;
}

inline bool is_config_key(const std::string& key) {
  for (const auto& k : config_schema())
    if (key == k.name) return true;
  return false;
}

namespace detail {

inline void apply_entry(SimulationConfig& c, const std::string& key, const std::string& v) {
  auto num = [&] { return parse_number(v); };
  if (key == "isotope") {
    if (v != "14N" && v != "15N") throw std::invalid_argument("expected 14N or 15N");
    c.isotope = v;
  } else if (key == "d_gs") c.nv.d_gs = num();
  else if (key == "d_es") c.nv.d_es = num();
  else if (key == "a_gs") c.nv.a_gs = num();
  else if (key == "a_es") c.nv.a_es = num();
  else if (key == "q") c.nv.q = num();
  else if (key == "gamma_e") c.nv.gamma_e = num();
  else if (key == "gamma_n") c.nv.gamma_n = num();
  else if (key == "nuclear_spin") c.nv.nuclear_spin = num();
  else if (key == "k_exc") c.rates.k_exc = num();
  else if (key == "k_rad") c.rates.k_rad = num();
  else if (key == "k_isc_pm1") c.rates.k_isc_pm1 = num();
  else if (key == "k_isc_0") c.rates.k_isc_0 = num();
  else if (key == "k_singlet") c.rates.k_singlet = num();
  else if (key == "detection_efficiency") c.rates.detection_efficiency = num();
  else if (key == "field") c.field = parse_field_spec(v);
  else if (key == "manifold") {
    if (v != "ground" && v != "excited") throw std::invalid_argument("expected ground or excited");
    c.manifold = v;
  } else if (key == "frequency_range") {
    parse_grid(v);
    c.frequency_range = v;
  } else if (key == "duration_range") {
    for (double d : parse_grid(v))
      if (d < 0.0) throw std::invalid_argument("durations must be >= 0");
    c.duration_range = v;
  } else if (key == "branch") {
    const int b = parse_int(v);
    if (b != 0 && b != -1) throw std::invalid_argument("must be 0 or -1");
    c.branch = b;
  } else if (key == "spins") c.spins = parse_spins(v);
  else if (key == "trace_duration") c.settings.trace_duration = num();
  else if (key == "bin_width") c.settings.bin_width = num();
  else if (key == "shots") c.settings.shots = parse_int(v);
  else if (key == "readout") c.settings.readout = num();
  else if (key == "dark_wait") c.settings.dark_wait = num();
  else if (key == "mw_rabi") c.settings.mw_rabi = num();
  else if (key == "rf_rabi") c.settings.rf_rabi = num();
  else if (key == "mw_probe_rabi") c.settings.mw_probe_rabi = num();
  else if (key == "rf_probe_rabi") c.settings.rf_probe_rabi = num();
  else if (key == "selectivity_window") c.settings.selectivity_window = num();
  else if (key == "excited_lifetime") c.settings.excited_lifetime = num();
  else if (key == "forced_lac_probability") {
    if (v == "none") c.settings.flip_flop.forced_lac_probability.reset();
    else c.settings.flip_flop.forced_lac_probability = num();
  } else if (key == "flip_flop_epsilon") c.settings.flip_flop.epsilon = num();
  else if (key == "output_format") {
    if (v == "csv") c.format = OutputFormat::csv;
    else if (v == "json") c.format = OutputFormat::json;
    else throw std::invalid_argument("expected csv or json");
  } else if (key == "output") c.output = v;
}

inline void validate_settings(const SimulationConfig& c) {
  const auto& s = c.settings;
  auto positive = [](double v, const char* key) {
    if (!(v > 0.0)) throw ConfigError(std::string("key '") + key + "': must be > 0");
  };
  positive(s.trace_duration, "trace_duration");
  positive(s.bin_width, "bin_width");
  positive(s.readout, "readout");
  positive(s.mw_rabi, "mw_rabi");
  positive(s.rf_rabi, "rf_rabi");
  positive(s.mw_probe_rabi, "mw_probe_rabi");
  positive(s.rf_probe_rabi, "rf_probe_rabi");
  positive(s.selectivity_window, "selectivity_window");
  positive(s.excited_lifetime, "excited_lifetime");
  positive(s.flip_flop.epsilon, "flip_flop_epsilon");
  if (s.dark_wait < 0.0) throw ConfigError("key 'dark_wait': must be >= 0");
  if (s.shots < 1) throw ConfigError("key 'shots': must be >= 1");
  if (s.trace_duration < s.bin_width) throw ConfigError("key 'trace_duration': must be at least one bin_width");
  if (s.readout < s.bin_width) throw ConfigError("key 'readout': must be at least one bin_width");
  if (auto p = s.flip_flop.forced_lac_probability; p && !(*p >= 0.0 && *p <= 1.0))
    throw ConfigError("key 'forced_lac_probability': must be in [0, 1]");
}

}  // namespace detail

/// Splits a document into entries; malformed lines are reported by number.
inline std::vector<ConfigEntry> read_entries(std::string_view text) {
  std::vector<ConfigEntry> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string origin = "line " + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(origin + ": expected 'key = value', got '" + body + "'");
    const auto key = detail::trim(body.substr(0, eq));
    const auto value = detail::trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ": missing key");
    if (value.empty()) throw ConfigError(origin + ": key '" + key + "' has no value");
    out.push_back({key, value, origin});
  }
  return out;
}

/// Builds a validated configuration from document entries followed by
/// overrides (later entries win over earlier sources, never within one).
inline SimulationConfig parse_config(std::string_view text, const std::vector<ConfigEntry>& overrides = {}) {
  auto file_entries = read_entries(text);

  std::map<std::string, std::string> seen;
  for (const auto& e : file_entries) {
    if (!is_config_key(e.key)) throw ConfigError(e.origin + ": unknown key '" + e.key + "'");
    if (auto it = seen.find(e.key); it != seen.end())
      throw ConfigError(e.origin + ": key '" + e.key + "' already set at " + it->second);
    seen[e.key] = e.origin;
  }
  for (const auto& e : overrides)
    if (!is_config_key(e.key)) throw ConfigError(e.origin + ": unknown key '" + e.key + "'");

  std::vector<ConfigEntry> all = file_entries;
  all.insert(all.end(), overrides.begin(), overrides.end());

  SimulationConfig c;
  // the isotope preset is applied first so that explicit constants override it
  for (const auto& e : all) {
    if (e.key != "isotope") continue;
    try {
      detail::apply_entry(c, e.key, e.value);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(e.origin + ": key 'isotope': " + ex.what());
    }
  }
  c.nv = c.isotope == "15N" ? NvParameters::nitrogen15() : NvParameters::nitrogen14();

  for (const auto& e : all) {
    if (e.key == "isotope") continue;
    try {
      detail::apply_entry(c, e.key, e.value);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(e.origin + ": key '" + e.key + "': " + ex.what());
    }
  }

  try {
    c.nv.validate();
    c.rates.validate();
  } catch (const std::invalid_argument& ex) {
    const std::string what = ex.what();
    const auto key = what.substr(0, what.find(':'));
    std::string origin = "defaults";
    for (const auto& e : all)
      if (e.key == key) origin = e.origin;
    throw ConfigError(origin + ": key '" + key + "'" + what.substr(what.find(':')));
  }
  detail::validate_settings(c);
  return c;
}

inline std::string value_of(const SimulationConfig& c, const std::string& key) {
  using detail::exact;
  const auto& s = c.settings;
  if (key == "isotope") return c.isotope;
  if (key == "d_gs") return exact(c.nv.d_gs);
  if (key == "d_es") return exact(c.nv.d_es);
  if (key == "a_gs") return exact(c.nv.a_gs);
  if (key == "a_es") return exact(c.nv.a_es);
  if (key == "q") return exact(c.nv.q);
  if (key == "gamma_e") return exact(c.nv.gamma_e);
  if (key == "gamma_n") return exact(c.nv.gamma_n);
  if (key == "nuclear_spin") return exact(c.nv.nuclear_spin);
  if (key == "k_exc") return exact(c.rates.k_exc);
  if (key == "k_rad") return exact(c.rates.k_rad);
  if (key == "k_isc_pm1") return exact(c.rates.k_isc_pm1);
  if (key == "k_isc_0") return exact(c.rates.k_isc_0);
  if (key == "k_singlet") return exact(c.rates.k_singlet);
  if (key == "detection_efficiency") return exact(c.rates.detection_efficiency);
  if (key == "field") return to_string(c.field);
  if (key == "manifold") return c.manifold;
  if (key == "frequency_range") return c.frequency_range.empty() ? "auto" : c.frequency_range;
  if (key == "duration_range") return c.duration_range.empty() ? "auto" : c.duration_range;
  if (key == "branch") return std::to_string(c.branch);
  if (key == "spins") {
    std::string out;
    for (double v : c.spins) out += (out.empty() ? "" : ",") + exact(v);
    return out;
  }
  if (key == "trace_duration") return exact(s.trace_duration);
  if (key == "bin_width") return exact(s.bin_width);
  if (key == "shots") return std::to_string(s.shots);
  if (key == "readout") return exact(s.readout);
  if (key == "dark_wait") return exact(s.dark_wait);
  if (key == "mw_rabi") return exact(s.mw_rabi);
  if (key == "rf_rabi") return exact(s.rf_rabi);
  if (key == "mw_probe_rabi") return exact(s.mw_probe_rabi);
  if (key == "rf_probe_rabi") return exact(s.rf_probe_rabi);
  if (key == "selectivity_window") return exact(s.selectivity_window);
  if (key == "excited_lifetime") return exact(s.excited_lifetime);
  if (key == "forced_lac_probability")
    return s.flip_flop.forced_lac_probability ? exact(*s.flip_flop.forced_lac_probability) : "none";
  if (key == "flip_flop_epsilon") return exact(s.flip_flop.epsilon);
  if (key == "output_format") return c.format == OutputFormat::csv ? "csv" : "json";
  if (key == "output") return c.output.empty() ? "auto" : c.output;
  throw std::invalid_argument("unknown key '" + key + "'");
}

/// The full effective configuration as a document parse_config accepts.
inline std::string serialize(const SimulationConfig& c) {
  std::string out;
  for (const auto& k : config_schema()) {
    const auto v = value_of(c, k.name);
    // "auto" placeholders round-trip as omitted keys
    if (v == "auto" && std::string(k.name) != "field") continue;
    if (std::string(k.name) == "spins" && v.empty()) continue;
    out += std::string(k.name) + " = " + v + "\n";
  }
  return out;
}

}  // namespace nvreadout
