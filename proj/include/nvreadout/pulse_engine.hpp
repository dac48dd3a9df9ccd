// Timed laser / microwave / radio-frequency pulse sequences acting on level
// populations. Drive pulses transfer population between ground-state
// levels with the two-level Rabi formula; coherences are not tracked.
#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nvreadout/photodynamics.hpp"
#include "nvreadout/spin_model.hpp"
#include "nvreadout/types.hpp"

namespace nvreadout {

enum class PulseKind { laser, mw, rf };
enum class Flip { none, pi, pi_half };

inline std::string to_string(PulseKind k) {
  switch (k) {
    case PulseKind::laser: return "laser";
    case PulseKind::mw: return "mw";
    case PulseKind::rf: return "rf";
  }
  return "unknown";
}

/// A single pulse. Drive pulses (mw/rf) are either given by frequency,
/// Rabi frequency and duration, or as a symbolic flip of a named
/// transition that is applied exactly.
struct Pulse {
  PulseKind kind = PulseKind::mw;
  double frequency = 0.0;       // MHz
  double rabi_frequency = 0.0;  // MHz
  double duration = 0.0;        // ns
  Flip flip = Flip::none;
  std::optional<StatePair> target;

  static Pulse laser(double duration) { return {PulseKind::laser, 0.0, 0.0, duration, Flip::none, std::nullopt}; }

  static Pulse driven(PulseKind kind, double frequency, double rabi_frequency, double duration) {
    return {kind, frequency, rabi_frequency, duration, Flip::none, std::nullopt};
  }

  /// Resonant pi-pulse of finite Rabi frequency: duration 1 / (2 Omega).
  static Pulse pi(PulseKind kind, double frequency, double rabi_frequency) {
    return driven(kind, frequency, rabi_frequency, 1e3 / (2.0 * rabi_frequency));
  }

  static Pulse symbolic(PulseKind kind, const SpinStateLabel& from, const SpinStateLabel& to, Flip flip = Flip::pi) {
    return {kind, 0.0, 0.0, 0.0, flip, StatePair{from, to}};
  }

  bool is_symbolic() const { return flip != Flip::none; }
};

struct PulseEngineOptions {
  /// A drive addresses a transition only if |detuning| < window * Omega.
  double selectivity_window = 10.0;
};

/// Population fraction moved across a two-level transition:
/// Omega^2 / (Omega^2 + delta^2) * sin^2(pi sqrt(Omega^2 + delta^2) t),
/// frequencies in MHz and t in ns.
inline double rabi_transfer(double rabi_frequency, double detuning, double duration) {
  const double omega2 = rabi_frequency * rabi_frequency;
  const double generalized = std::sqrt(omega2 + detuning * detuning);
  if (generalized == 0.0) return 0.0;
  const double s = std::sin(std::numbers::pi * generalized * duration * 1e-3);
  return omega2 / (generalized * generalized) * s * s;
}

/// Whether a pulse of `kind` drives |a> <-> |b> (mw: dm_S = +-1, dm_I = 0;
/// rf: dm_S = 0, dm_I = +-1), both in the ground manifold.
inline bool addresses(PulseKind kind, const SpinStateLabel& a, const SpinStateLabel& b) {
  if (a.manifold != Manifold::ground || b.manifold != Manifold::ground) return false;
  if (kind == PulseKind::mw) return std::abs(a.m_s - b.m_s) == 1 && a.m_i == b.m_i;
  if (kind == PulseKind::rf) return a.m_s == b.m_s && std::abs(a.m_i - b.m_i) == 1.0;
  return false;
}

/// All ground-state transitions driven by a pulse kind, in basis order.
inline std::vector<StatePair> driven_transitions(PulseKind kind, double nuclear_spin) {
  std::vector<StatePair> out;
  const auto projections = nuclear_projections(nuclear_spin);
  for (int m_s = -1; m_s <= 1; ++m_s) {
    for (double m_i : projections) {
      if (kind == PulseKind::mw && m_s < 1) out.push_back({ground(m_s, m_i), ground(m_s + 1, m_i)});
      if (kind == PulseKind::rf && m_i < nuclear_spin) out.push_back({ground(m_s, m_i), ground(m_s, m_i + 1.0)});
    }
  }
  return out;
}

namespace detail {

inline void mix(PopulationVector& p, const StatePair& pair, double transfer) {
  const int a = p.scheme.index(pair.a);
  const int b = p.scheme.index(pair.b);
  const double pa = p.values(a), pb = p.values(b);
  p.values(a) = pa + transfer * (pb - pa);
  p.values(b) = pb + transfer * (pa - pb);
}

}  // namespace detail

/// Applies a mw or rf pulse to ground-state populations. Drive pulses act on
/// every addressed transition inside the selectivity window, in basis order;
/// symbolic flips act only on their target.
inline PopulationVector apply_pulse(const PopulationVector& p, const Pulse& pulse, const Eigensystem& ground_eig,
                                    const PulseEngineOptions& options = {}) {
  if (pulse.kind == PulseKind::laser) throw std::invalid_argument("laser pulses are propagated by the rate model");
  if (ground_eig.basis.manifold() != Manifold::ground) throw std::invalid_argument("pulses need the ground-state eigensystem");
  PopulationVector out = p;

  if (pulse.is_symbolic()) {
    if (!pulse.target) throw std::invalid_argument("symbolic flip without a target transition");
    const auto& t = *pulse.target;
    if (!addresses(pulse.kind, t.a, t.b))
      throw std::invalid_argument(to_string(pulse.kind) + " pulse cannot drive " + to_string(t));
    detail::mix(out, t, pulse.flip == Flip::pi ? 1.0 : 0.5);
    return out;
  }

  if (!(pulse.rabi_frequency > 0.0)) throw std::invalid_argument("drive pulse needs a Rabi frequency > 0");
  if (!(pulse.duration > 0.0)) throw std::invalid_argument("drive pulse needs a duration > 0");
  const double window = options.selectivity_window * pulse.rabi_frequency;
  for (const auto& pair : driven_transitions(pulse.kind, p.scheme.nuclear_spin())) {
    const double f = transition_frequency(ground_eig, pair.a, pair.b);
    const double detuning = pulse.frequency - f;
    if (std::abs(detuning) >= window) continue;
    detail::mix(out, pair, rabi_transfer(pulse.rabi_frequency, detuning, pulse.duration));
  }
  return out;
}

/// Ordered pulses applied in the dark after initialisation, followed by a
/// laser readout of length `readout` (ns). Without a readout the sequence
/// is preparation-only.
struct PulseSequence {
  std::vector<Pulse> pulses;
  double field = 0.0;
  std::optional<double> readout = 3000.0;
};

struct SequenceSettings {
  double bin_width = 1.0;
  /// Dark interval after every laser pulse, letting excited and singlet
  /// populations relax before drive pulses act on the ground state.
  double dark_wait = 5000.0;
  FlipFlopOptions flip_flop;
  PulseEngineOptions pulses;
};

struct SequenceResult {
  PopulationVector prepared;
  FluorescenceTrace trace;
  FluorescenceTrace reference;  // readout of the initialised state without pulses
  double signal = 0.0;          // N_reference(t_p) - N(t_p)
};

/// Field-dependent machinery of a sequence run, built once and reused for
/// every sequence at the same field.
class SequenceRunner {
 public:
  SequenceRunner(const NvParameters& params, const RateParameters& rates, double field, SequenceSettings settings = {})
      : params_(params),
        rates_(rates),
        field_(field),
        settings_(settings),
        laser_on_(build_rate_matrix(params, rates, field, true, settings.flip_flop)),
        laser_off_(build_rate_matrix(params, rates, field, false, settings.flip_flop)),
        ground_eig_(eigensystem(params, field, Manifold::ground)),
        initial_(relax(steady_state(laser_on_))) {}

  double field() const { return field_; }
  const Eigensystem& ground_eigensystem() const { return ground_eig_; }
  const RateMatrix& laser_on() const { return laser_on_; }
  /// Laser-on steady state after the dark wait.
  const PopulationVector& initial_state() const { return initial_; }

  PopulationVector prepare(const std::vector<Pulse>& pulses) const {
    PopulationVector p = initial_;
    for (const auto& pulse : pulses) {
      if (pulse.kind == PulseKind::laser) {
        if (!(pulse.duration > 0.0)) throw std::invalid_argument("laser pulse needs a duration > 0");
        p = relax(propagate(laser_on_, p, pulse.duration));
      } else {
        p = apply_pulse(p, pulse, ground_eig_, settings_.pulses);
      }
    }
    return p;
  }

  FluorescenceTrace readout(const PopulationVector& p, double t_p) const {
    return fluorescence_trace(laser_on_, rates_, p, t_p, settings_.bin_width);
  }

  SequenceResult run(const PulseSequence& seq) const {
    if (std::abs(seq.field - field_) > 1e-12) throw std::invalid_argument("sequence field differs from the runner field");
    if (!seq.readout) throw std::invalid_argument("sequence is preparation-only and has no readout");
    return run(seq, readout(initial_, *seq.readout));
  }

  /// As run(seq), reusing a reference readout of the initial state.
  SequenceResult run(const PulseSequence& seq, const FluorescenceTrace& reference) const {
    if (std::abs(seq.field - field_) > 1e-12) throw std::invalid_argument("sequence field differs from the runner field");
    if (!seq.readout) throw std::invalid_argument("sequence is preparation-only and has no readout");
    auto prepared = prepare(seq.pulses);
    auto trace = readout(prepared, *seq.readout);
    const double signal = cumulative_signal(reference, trace, *seq.readout);
    return {std::move(prepared), std::move(trace), reference, signal};
  }

 private:
  PopulationVector relax(const PopulationVector& p) const { return propagate(laser_off_, p, settings_.dark_wait); }

  NvParameters params_;
  RateParameters rates_;
  double field_;
  SequenceSettings settings_;
  RateMatrix laser_on_;
  RateMatrix laser_off_;
  Eigensystem ground_eig_;
  PopulationVector initial_;
};

/// Initialise to the laser-on steady state, apply the pulses, read out.
inline SequenceResult run_sequence(const PulseSequence& seq, const NvParameters& params, const RateParameters& rates,
                                   const SequenceSettings& settings = {}) {
  return SequenceRunner(params, rates, seq.field, settings).run(seq);
}

struct SweepAxis {
  enum class Kind { frequency, duration, field };
  Kind kind = Kind::frequency;
  std::size_t pulse = 0;

  static SweepAxis frequency_of(std::size_t k) { return {Kind::frequency, k}; }
  static SweepAxis duration_of(std::size_t k) { return {Kind::duration, k}; }
  static SweepAxis magnetic_field() { return {Kind::field, 0}; }
};

struct SpectrumPoint {
  double x = 0.0;
  double counts = 0.0;  // N(t_p): dips at resonance
  double signal = 0.0;  // N_reference(t_p) - N(t_p)
};

using Spectrum = std::vector<SpectrumPoint>;

/// One run_sequence per grid value of the swept quantity.
inline Spectrum sweep(const PulseSequence& tmpl, const SweepAxis& axis, const std::vector<double>& grid,
                      const NvParameters& params, const RateParameters& rates, const SequenceSettings& settings = {}) {
  if (axis.kind != SweepAxis::Kind::field) {
    if (axis.pulse >= tmpl.pulses.size()) throw std::invalid_argument("sweep axis addresses a missing pulse");
    const auto& p = tmpl.pulses[axis.pulse];
    if (p.is_symbolic()) throw std::invalid_argument("cannot sweep a symbolic pulse");
    if (axis.kind == SweepAxis::Kind::frequency && p.kind == PulseKind::laser)
      throw std::invalid_argument("laser pulses have no sweepable frequency");
  }
  if (!tmpl.readout) throw std::invalid_argument("sweep needs a sequence with a readout");

  Spectrum out;
  out.reserve(grid.size());
  std::optional<SequenceRunner> runner;
  std::optional<FluorescenceTrace> reference;
  if (axis.kind != SweepAxis::Kind::field) {
    runner.emplace(params, rates, tmpl.field, settings);
    reference = runner->readout(runner->initial_state(), *tmpl.readout);
  }

  for (double x : grid) {
    PulseSequence seq = tmpl;
    SequenceResult r = [&] {
      switch (axis.kind) {
        case SweepAxis::Kind::frequency:
          seq.pulses[axis.pulse].frequency = x;
          return runner->run(seq, *reference);
        case SweepAxis::Kind::duration:
          seq.pulses[axis.pulse].duration = x;
          return runner->run(seq, *reference);
        case SweepAxis::Kind::field:
          seq.field = x;
          return run_sequence(seq, params, rates, settings);
      }
      throw std::logic_error("unhandled sweep axis");
    }();
    out.push_back({x, r.trace.cumulative(*seq.readout), r.signal});
  }
  return out;
}

/// Symbolic preparation of the conventional dark state |-1,+I> from |0,+I>.
inline std::vector<Pulse> conventional_preparation(double nuclear_spin) {
  return {Pulse::symbolic(PulseKind::mw, ground(0, nuclear_spin), ground(-1, nuclear_spin))};
}

/// |0,+I> -> |-1,+I> -> ... -> |-1,-I>: the mw pi-pulse followed by 2I
/// consecutive nuclear pi-pulses.
inline std::vector<Pulse> enhanced_preparation(double nuclear_spin) {
  auto out = conventional_preparation(nuclear_spin);
  for (double m_i = nuclear_spin; m_i > -nuclear_spin + 0.25; m_i -= 1.0)
    out.push_back(Pulse::symbolic(PulseKind::rf, ground(-1, m_i), ground(-1, m_i - 1.0)));
  return out;
}

}  // namespace nvreadout
