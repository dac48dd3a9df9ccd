// Command dispatch for the nvreadout tool. Each command computes one table,
// writes it with the full effective configuration in a header block and
// prints a one-line summary.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "nvreadout/config.hpp"
#include "nvreadout/experiments.hpp"
#include "nvreadout/spin_model.hpp"

namespace nvreadout::cli {

struct CommandInfo {
  const char* name;
  const char* help;
};

inline const std::vector<CommandInfo>& commands() {
  static const std::vector<CommandInfo> list = {
      {"levels", "energy levels versus field (field range, manifold)"},
      {"lac", "excited-state flip-flop probabilities versus field"},
      {"transient", "readout transients of |0,+I>, |-1,+I> and |-1,-I>"},
      {"snr", "conventional and enhanced SNR versus readout length"},
      {"rabi", "electron Rabi oscillations with both readouts"},
      {"odmr", "ground-state ODMR spectrum"},
      {"endor", "nuclear resonance spectrum within the m_S = <branch> manifold"},
      {"esr-excited", "excited-state ESR lines with lifetime broadening"},
      {"enhancement", "ideal enhancement sqrt(1 + sum 2 I_k) for the spins list"},
      {"snr-vs-field", "signal and max-SNR ratios versus field"},
  };
  return list;
}

inline bool is_command(const std::string& name) {
  return std::any_of(commands().begin(), commands().end(), [&](const auto& c) { return name == c.name; });
}

struct CommandResult {
  Table table;
  std::string summary;
};

inline std::string fmt(double v, int digits = 9) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

namespace detail {

inline double scalar_field(const SimulationConfig& c, const std::string& command, double fallback) {
  switch (c.field.kind) {
    case FieldSpec::Kind::automatic: return fallback;
    case FieldSpec::Kind::lac: return lac_field(c.nv);
    case FieldSpec::Kind::value: return c.field.start;
    case FieldSpec::Kind::range: break;
  }
  throw std::invalid_argument("command '" + command + "' takes a single field, not a range");
}

inline std::vector<double> field_grid(const SimulationConfig& c, const std::vector<double>& fallback) {
  switch (c.field.kind) {
    case FieldSpec::Kind::automatic: return fallback;
    case FieldSpec::Kind::lac: return {lac_field(c.nv)};
    case FieldSpec::Kind::value: return {c.field.start};
    case FieldSpec::Kind::range: return parse_grid(to_string(c.field));
  }
  return fallback;
}

inline std::vector<double> linear(double lo, double hi, double step) {
  std::vector<double> out;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  for (std::size_t k = 0; k < n; ++k) out.push_back(lo + static_cast<double>(k) * step);
  return out;
}

inline std::string list(const std::vector<double>& v, const char* unit) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : ", ") + fmt(x, 8);
  return out + " " + unit;
}

inline CommandResult levels(const SimulationConfig& c) {
  const auto manifold = c.manifold == "excited" ? Manifold::excited : Manifold::ground;
  const auto fields = field_grid(c, linear(0.0, 1000.0, 1.0));
  const auto diagram = level_diagram(c.nv, fields, manifold);
  const SpinBasis basis(c.nv.nuclear_spin, manifold);
  const auto labels = branch_labels(diagram, basis);
  Table t{"levels", {"field_G"}, {}, provenance("levels", c.nv, nullptr, c.settings)};
  t.metadata["manifold"] = c.manifold;
  for (const auto& l : labels) t.columns.push_back("E" + column_tag(l) + "_MHz");
  for (const auto& pt : diagram) {
    std::vector<double> row{pt.field};
    for (Eigen::Index k = 0; k < pt.energies.size(); ++k) row.push_back(pt.energies(k));
    t.rows.push_back(std::move(row));
  }
  return {t, std::to_string(t.rows.size()) + " fields x " + std::to_string(labels.size()) + " " + c.manifold +
                 " levels"};
}

inline CommandResult lac(const SimulationConfig& c) {
  const double centre = std::round(c.nv.d_es / c.nv.gamma_e);
  const auto fields = field_grid(c, linear(std::max(0.0, centre - 150.0), centre + 150.0, 0.5));
  const auto pairs = flip_flop_pairs(c.nv.nuclear_spin, Manifold::excited);
  Table t{"lac", {"field_G"}, {}, provenance("lac", c.nv, nullptr, c.settings)};
  for (const auto& p : pairs) t.columns.push_back("p_ff_" + column_tag(p));
  for (double b : fields) {
    const auto a = flip_flop_probability(c.nv, b);
    std::vector<double> row{b};
    for (const auto& p : pairs) row.push_back(a.probability(p.a, p.b));
    t.rows.push_back(std::move(row));
  }
  const double star = lac_field(c.nv);
  t.metadata["lac_field_G"] = star;
  std::string summary = "LAC field = " + fmt(star, 8) + " G";
  for (const auto& p : lac_pairs(c.nv.nuclear_spin)) {
    const double b = anticrossing_field(c.nv, p, std::max(0.0, star - 150.0), star + 150.0);
    t.metadata["anticrossing_G"][to_string(p)] = b;
    summary += "; " + to_string(p) + " at " + fmt(b, 8) + " G";
  }
  return {t, summary};
}

inline CommandResult transient(const SimulationConfig& c, bool snr) {
  const double b = scalar_field(c, snr ? "snr" : "transient", lac_field(c.nv));
  const auto cmp = conventional_vs_enhanced(c.nv, c.rates, b, c.settings);
  if (!snr)
    return {cmp.transients(), "signal ratio = " + fmt(cmp.signal_ratio, 8) + " at B = " + fmt(b, 8) + " G"};
  return {cmp.snr_table(), "max SNR ratio = " + fmt(cmp.snr_ratio, 8) + " (t_p conventional = " +
                               fmt(cmp.snr_conventional.optimal_pulse_length(), 8) + " ns, enhanced = " +
                               fmt(cmp.snr_enhanced.optimal_pulse_length(), 8) + " ns) at B = " + fmt(b, 8) + " G"};
}

inline CommandResult rabi(const SimulationConfig& c) {
  const double b = scalar_field(c, "rabi", lac_field(c.nv));
  const auto durations = c.duration_range.empty() ? linear(0.0, 200.0, 2.0) : parse_grid(c.duration_range);
  const auto conv = rabi_experiment(c.nv, c.rates, b, ReadoutMode::conventional, durations, c.settings);
  const auto enh = rabi_experiment(c.nv, c.rates, b, ReadoutMode::enhanced, durations, c.settings);
  Table t{"rabi",
          {"duration_ns", "signal_conventional", "signal_enhanced", "counts_conventional", "counts_enhanced"},
          {},
          conv.metadata};
  t.metadata["mode"] = "conventional, enhanced";
  for (std::size_t i = 0; i < durations.size(); ++i)
    t.rows.push_back({durations[i], conv.points[i].signal, enh.points[i].signal, conv.points[i].counts,
                      enh.points[i].counts});
  return {t, "contrast ratio = " + fmt(enh.contrast() / conv.contrast(), 8) + " at B = " + fmt(b, 8) + " G"};
}

inline CommandResult odmr(const SimulationConfig& c) {
  const double b = scalar_field(c, "odmr", lac_field(c.nv));
  const double centre = c.nv.d_gs - c.nv.gamma_e * b;
  const double half = std::abs(c.nv.a_gs) * c.nv.nuclear_spin + 1.0;
  const auto freqs = c.frequency_range.empty() ? linear(std::max(0.0, std::round(centre - half)), std::round(centre + half), 0.01)
                                               : parse_grid(c.frequency_range);
  const auto r = odmr_spectrum(c.nv, c.rates, b, freqs, c.settings);
  const auto dips = deepest_dips(r.points, static_cast<std::size_t>(c.nv.nuclear_dim()));
  return {r.table("odmr"), "dips at " + list(dips, "MHz") + " (B = " + fmt(b, 8) + " G)"};
}

inline CommandResult endor(const SimulationConfig& c) {
  const double b = scalar_field(c, "endor", lac_field(c.nv));
  double half = std::abs(c.nv.gamma_n) * b + 1.0;
  if (c.branch == -1) half += std::abs(c.nv.a_gs);
  const auto freqs = c.frequency_range.empty() ? linear(std::max(0.0, std::round(c.nv.q - half)), std::round(c.nv.q + half), 0.002)
                                               : parse_grid(c.frequency_range);
  const auto r = nuclear_resonance_spectrum(c.nv, c.rates, b, c.branch, freqs, c.settings);
  const auto dips = deepest_dips(r.points, static_cast<std::size_t>(c.nv.nuclear_dim() - 1));
  return {r.table("endor"), "dips at " + list(dips, "MHz") + " (m_S = " + std::to_string(c.branch) + ", B = " +
                                fmt(b, 8) + " G)"};
}

inline CommandResult esr_excited(const SimulationConfig& c) {
  const double b = scalar_field(c, "esr-excited", 100.0);
  const double fwhm = lifetime_linewidth(c.settings.excited_lifetime);
  const double centre = std::abs(c.nv.d_es - c.nv.gamma_e * b);
  const double half = std::abs(c.nv.a_es) * c.nv.nuclear_spin + 5.0 * fwhm;
  const auto freqs = c.frequency_range.empty() ? linear(std::max(0.0, std::round(centre - half)), std::round(centre + half), 0.1)
                                               : parse_grid(c.frequency_range);
  const auto r = excited_state_esr(c.nv, b, freqs, c.settings);
  std::vector<double> lines;
  for (const auto& l : r.lines) lines.push_back(l.frequency);
  std::sort(lines.begin(), lines.end());
  auto t = r.table();
  t.metadata["fwhm_MHz"] = r.fwhm;
  t.metadata["lines_MHz"] = lines;
  return {t, "lines at " + list(lines, "MHz") + ", FWHM = " + fmt(r.fwhm, 8) + " MHz (B = " + fmt(b, 8) + " G)"};
}

inline CommandResult enhancement(const SimulationConfig& c) {
  if (c.spins.empty()) throw std::invalid_argument("key 'spins' lists no nuclear spins");
  Table t{"enhancement", {"spin_count", "spin_I", "enhancement"}, {}, nlohmann::json::object()};
  t.metadata["experiment"] = "enhancement";
  t.metadata["library"] = std::string("nvreadout ") + kVersion;
  t.metadata["spins"] = c.spins;
  for (std::size_t k = 1; k <= c.spins.size(); ++k)
    t.rows.push_back({static_cast<double>(k), c.spins[k - 1],
                      theoretical_enhancement(std::span<const double>(c.spins.data(), k))});
  return {t, "enhancement = " + fmt(theoretical_enhancement(c.spins), 8)};
}

inline CommandResult snr_vs_field(const SimulationConfig& c) {
  const double star = lac_field(c.nv);
  std::vector<double> fallback{0.0};
  for (double b : linear(std::max(25.0, star - 200.0), star + 200.0, 25.0)) fallback.push_back(b);
  const auto scan = nvreadout::snr_vs_field(c.nv, c.rates, field_grid(c, fallback), c.settings);
  const auto best = std::max_element(scan.rows.begin(), scan.rows.end(),
                                     [](const auto& a, const auto& b) { return a.snr_ratio < b.snr_ratio; });
  auto t = scan.table();
  t.metadata["lac_field_G"] = star;
  return {t, "max SNR ratio = " + fmt(best->snr_ratio, 8) + " at B = " + fmt(best->field, 8) + " G"};
}

}  // namespace detail

inline CommandResult run_command(const std::string& command, const SimulationConfig& c) {
  if (command == "levels") return detail::levels(c);
  if (command == "lac") return detail::lac(c);
  if (command == "transient") return detail::transient(c, false);
  if (command == "snr") return detail::transient(c, true);
  if (command == "rabi") return detail::rabi(c);
  if (command == "odmr") return detail::odmr(c);
  if (command == "endor") return detail::endor(c);
  if (command == "esr-excited") return detail::esr_excited(c);
  if (command == "enhancement") return detail::enhancement(c);
  if (command == "snr-vs-field") return detail::snr_vs_field(c);
  throw std::invalid_argument("unknown command '" + command + "'");
}

inline void write_csv(std::ostream& os, const std::string& command, const SimulationConfig& c, const Table& t) {
  os << "# nvreadout " << kVersion << "\n# command = " << command << "\n";
  for (const auto& k : config_schema()) os << "# " << k.name << " = " << value_of(c, k.name) << "\n";
  os << "# metadata = " << t.metadata.dump() << "\n";
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
  os << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << fmt(row[i]);
    os << "\n";
  }
}

inline nlohmann::json to_json(const std::string& command, const SimulationConfig& c, const Table& t) {
  auto round9 = [](double v) { return std::stod(fmt(v)); };
  nlohmann::json j;
  j["version"] = kVersion;
  j["command"] = command;
  for (const auto& k : config_schema()) j["config"][k.name] = value_of(c, k.name);
  j["metadata"] = t.metadata;
  j["columns"] = t.columns;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json r = nlohmann::json::array();
    for (double v : row) r.push_back(round9(v));
    j["rows"].push_back(std::move(r));
  }
  return j;
}

inline std::string output_path(const std::string& command, const SimulationConfig& c) {
  if (!c.output.empty()) return c.output;
  return command + (c.format == OutputFormat::csv ? ".csv" : ".json");
}

/// Runs `command`, writes its table and prints the summary. Returns 0 on
/// success, 1 on invalid input or numerical failure, 2 on unknown commands.
inline int dispatch(const std::string& command, const SimulationConfig& c, std::ostream& out, std::ostream& err) {
  if (!is_command(command)) {
    err << "error: unknown command '" << command << "'\n";
    return 2;
  }
  try {
    const auto result = run_command(command, c);
    const auto path = output_path(command, c);
    std::ofstream file(path);
    if (!file) throw std::runtime_error("cannot open '" + path + "' for writing");
    if (c.format == OutputFormat::csv) write_csv(file, command, c, result.table);
    else file << to_json(command, c, result.table).dump(2) << "\n";
    file.close();
    if (!file) throw std::runtime_error("failed writing '" + path + "'");
    out << result.summary << "\n" << "wrote " << path << " (" << result.table.rows.size() << " rows)\n";
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace nvreadout::cli
