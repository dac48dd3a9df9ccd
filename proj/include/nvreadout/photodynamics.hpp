// Classical rate-equation model of the NV optical cycle.
//
// Levels: the (2I+1)-fold ground and excited triplets and the metastable
// singlet, which keeps only the nuclear projection. Optical transitions and
// every intersystem crossing conserve m_I; excited-state flip-flops at the
// anticrossing are folded into symmetric exchange rates. Times are in ns,
// rates in 1/ns.
#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nvreadout/spin_model.hpp"
#include "nvreadout/types.hpp"

namespace nvreadout {

/// Photodynamic rates. Only constraints on these are known (excited-state
/// lifetime ~10 ns, singlet lifetime ~250 ns, ISC mostly from m_S = +-1), so
/// the defaults satisfy those; detection_efficiency puts the steady-state
/// count rate near 300 kHz.
struct RateParameters {
  double k_exc = 0.1;
  double k_rad = 1.0 / 12.0;
  double k_isc_pm1 = 1.0 / 20.0;
  double k_isc_0 = 1.0 / 400.0;
  double k_singlet = 1.0 / 250.0;
  double detection_efficiency = 0.0091;

  double k_isc(int m_s) const { return m_s == 0 ? k_isc_0 : k_isc_pm1; }
  /// Total depopulation rate of an excited sublevel.
  double k_out(int m_s) const { return k_rad + k_isc(m_s); }

  void validate() const {
    auto positive = [](double v, const char* key) {
      if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(key) + ": must be > 0");
    };
    positive(k_exc, "k_exc");
    positive(k_rad, "k_rad");
    positive(k_isc_pm1, "k_isc_pm1");
    positive(k_singlet, "k_singlet");
    // k_isc_0 = 0 is allowed: it isolates the cascade in idealised checks
    if (!(k_isc_0 >= 0.0) || !std::isfinite(k_isc_0)) throw std::invalid_argument("k_isc_0: must be >= 0");
    if (!(detection_efficiency > 0.0) || detection_efficiency > 1.0)
      throw std::invalid_argument("detection_efficiency: must be in (0, 1]");
  }

  friend bool operator==(const RateParameters&, const RateParameters&) = default;
};

/// Ordering of the full level scheme: ground triplet, excited triplet,
/// singlet. Index arithmetic only; copying is free.
class LevelScheme {
 public:
  explicit LevelScheme(double nuclear_spin = 1.0) : nuclear_spin_(nuclear_spin) {}

  double nuclear_spin() const { return nuclear_spin_; }
  int nuclear_dim() const { return static_cast<int>(std::lround(2.0 * nuclear_spin_)) + 1; }
  int triplet_dim() const { return 3 * nuclear_dim(); }
  int size() const { return 2 * triplet_dim() + nuclear_dim(); }

  int index(const SpinStateLabel& s) const {
    const double k = s.m_i + nuclear_spin_;
    const int nuc = static_cast<int>(std::lround(k));
    if (std::abs(k - nuc) > 1e-12 || nuc < 0 || nuc >= nuclear_dim() || s.m_s < -1 || s.m_s > 1)
      throw std::invalid_argument("state " + to_string(s) + " is not in the level scheme");
    switch (s.manifold) {
      case Manifold::ground: return (s.m_s + 1) * nuclear_dim() + nuc;
      case Manifold::excited: return triplet_dim() + (s.m_s + 1) * nuclear_dim() + nuc;
      case Manifold::singlet:
        if (s.m_s != 0) throw std::invalid_argument("singlet labels carry m_S = 0");
        return 2 * triplet_dim() + nuc;
    }
    throw std::invalid_argument("unknown manifold");
  }

  SpinStateLabel label(int i) const {
    if (i < 0 || i >= size()) throw std::out_of_range("level index out of range");
    const int t = triplet_dim(), n = nuclear_dim();
    if (i >= 2 * t) return singlet(i - 2 * t - nuclear_spin_);
    const Manifold m = i < t ? Manifold::ground : Manifold::excited;
    const int j = i % t;
    return {j / n - 1, j % n - nuclear_spin_, m};
  }

  friend bool operator==(const LevelScheme&, const LevelScheme&) = default;

 private:
  double nuclear_spin_;
};

struct PopulationVector {
  LevelScheme scheme;
  Eigen::VectorXd values;

  static PopulationVector pure(const LevelScheme& scheme, const SpinStateLabel& s) {
    PopulationVector p{scheme, Eigen::VectorXd::Zero(scheme.size())};
    p.values(scheme.index(s)) = 1.0;
    return p;
  }

  double operator[](const SpinStateLabel& s) const { return values(scheme.index(s)); }
  double total() const { return values.sum(); }

  double manifold_total(Manifold m) const {
    double sum = 0.0;
    for (int i = 0; i < scheme.size(); ++i)
      if (scheme.label(i).manifold == m) sum += values(i);
    return sum;
  }

  /// Population summed over every level with nuclear projection m_i.
  double nuclear_population(double m_i) const {
    double sum = 0.0;
    for (int i = 0; i < scheme.size(); ++i)
      if (scheme.label(i).m_i == m_i) sum += values(i);
    return sum;
  }
};

struct RateMatrix {
  LevelScheme scheme;
  Eigen::MatrixXd generator;  // dp/dt = generator * p; column j holds the outflow of level j
  bool laser_on = false;
};

/// How excited-state flip-flops enter the rate model.
struct FlipFlopOptions {
  /// When set, every anticrossing pair gets exactly this probability and
  /// all other flip-flop pairs are switched off.
  std::optional<double> forced_lac_probability;
  /// Guards the exchange rate at p = 1.
  double epsilon = 1e-6;
};

namespace detail {

inline void add_rate(Eigen::MatrixXd& m, int from, int to, double rate) {
  m(to, from) += rate;
  m(from, from) -= rate;
}

}  // namespace detail

/// Exchange rate whose branching ratio against leaving the excited state
/// (rate k_out) equals the per-cycle flip-flop probability p.
inline double flip_flop_exchange_rate(double p, double k_out, double epsilon = 1e-6) {
  return k_out * p / (1.0 - p + epsilon);
}

inline RateMatrix build_rate_matrix(const NvParameters& params, const RateParameters& rates, double field, bool laser_on,
                                    const FlipFlopOptions& options = {}) {
  params.validate();
  rates.validate();
  if (options.forced_lac_probability && !(*options.forced_lac_probability >= 0.0 && *options.forced_lac_probability <= 1.0))
    throw std::invalid_argument("forced flip-flop probability must be in [0, 1]");
  if (!(options.epsilon > 0.0)) throw std::invalid_argument("flip-flop epsilon must be > 0");
  if (!(field >= 0.0) || !std::isfinite(field)) throw std::invalid_argument("field must be finite and >= 0 G");

  const LevelScheme scheme(params.nuclear_spin);
  const int n = scheme.size();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);

  for (int m_s = -1; m_s <= 1; ++m_s) {
    for (double m_i : nuclear_projections(params.nuclear_spin)) {
      const int g = scheme.index(ground(m_s, m_i));
      const int e = scheme.index(excited(m_s, m_i));
      if (laser_on) detail::add_rate(m, g, e, rates.k_exc);
      detail::add_rate(m, e, g, rates.k_rad);
      detail::add_rate(m, e, scheme.index(singlet(m_i)), rates.k_isc(m_s));
    }
  }
  for (double m_i : nuclear_projections(params.nuclear_spin))
    detail::add_rate(m, scheme.index(singlet(m_i)), scheme.index(ground(0, m_i)), rates.k_singlet);

  std::optional<LacAnalysis> lac;
  if (!options.forced_lac_probability) lac = flip_flop_probability(params, field);
  const auto pairs = flip_flop_pairs(params.nuclear_spin, Manifold::excited);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& pair = pairs[k];
    double p = 0.0;
    if (options.forced_lac_probability)
      p = is_lac_pair(pair) ? *options.forced_lac_probability : 0.0;
    else
      p = lac->pair_probabilities[k];
    if (p <= 0.0) continue;
    const double k_out = 0.5 * (rates.k_out(pair.a.m_s) + rates.k_out(pair.b.m_s));
    const double r = flip_flop_exchange_rate(p, k_out, options.epsilon);
    detail::add_rate(m, scheme.index(pair.a), scheme.index(pair.b), r);
    detail::add_rate(m, scheme.index(pair.b), scheme.index(pair.a), r);
  }
  return {scheme, std::move(m), laser_on};
}

// ---------------------------------------------------------------------------
// Propagation

namespace detail {

inline constexpr double kNegativeTolerance = 1e-12;

inline void clamp_populations(Eigen::VectorXd& p) {
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) < 0.0) {
      if (p(i) < -kNegativeTolerance)
        throw NumericalError("population " + std::to_string(i) + " went negative (" + std::to_string(p(i)) + ")");
      p(i) = 0.0;
    }
  }
}

inline void check_finite(const RateMatrix& m, const Eigen::VectorXd& p) {
  if (!m.generator.allFinite()) throw NumericalError("rate matrix has non-finite entries");
  if (!p.allFinite()) throw NumericalError("population vector has non-finite entries");
  if (p.size() != m.generator.rows()) throw std::invalid_argument("population vector does not match the rate matrix");
}

}  // namespace detail

/// One-step propagator exp(M h) together with the integral over the step of
/// a linear observable, w * int_0^h exp(M s) ds. Both come from a single
/// scaling-and-squaring Pade exponential of the augmented generator.
class Propagator {
 public:
  Propagator(const RateMatrix& m, double step, const Eigen::RowVectorXd& observable) : step_(step) {
    const Eigen::Index n = m.generator.rows();
    if (!(step > 0.0)) throw std::invalid_argument("propagation step must be > 0");
    if (observable.size() != n) throw std::invalid_argument("observable does not match the rate matrix");
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + 1, n + 1);
    aug.topLeftCorner(n, n) = m.generator;
    aug.bottomLeftCorner(1, n) = observable;
    const Eigen::MatrixXd e = (aug * step).exp();
    if (!e.allFinite()) throw NumericalError("matrix exponential is not finite");
    transition_ = e.topLeftCorner(n, n);
    integral_ = e.bottomLeftCorner(1, n);
  }

  explicit Propagator(const RateMatrix& m, double step)
      : Propagator(m, step, Eigen::RowVectorXd::Zero(m.generator.rows())) {}

  double step() const { return step_; }
  const Eigen::MatrixXd& transition() const { return transition_; }
  const Eigen::RowVectorXd& integral() const { return integral_; }

 private:
  double step_;
  Eigen::MatrixXd transition_;
  Eigen::RowVectorXd integral_;
};

inline int bin_count(double duration, double bin_width) {
  if (!(bin_width > 0.0) || !std::isfinite(bin_width)) throw std::invalid_argument("bin width must be > 0");
  if (!(duration >= bin_width * (1.0 - 1e-12)) || !std::isfinite(duration))
    throw std::invalid_argument("duration must be at least one bin width");
  return static_cast<int>(std::floor(duration / bin_width + 1e-9));
}

/// Populations at the bin edges 0, h, 2h, ... of a propagation.
struct Trajectory {
  LevelScheme scheme;
  double bin_width = 0.0;
  std::vector<Eigen::VectorXd> states;

  std::size_t size() const { return states.size(); }
  PopulationVector at(std::size_t i) const { return {scheme, states.at(i)}; }
};

/// p(t) = exp(M t) p0 at the bin edges, applying the cached one-bin
/// propagator repeatedly. Entries in (-1e-12, 0) are clamped to zero; larger
/// negatives raise NumericalError.
inline Trajectory evolve(const RateMatrix& m, const PopulationVector& p0, double duration, double bin_width) {
  detail::check_finite(m, p0.values);
  const int bins = bin_count(duration, bin_width);
  const Propagator prop(m, bin_width);
  Trajectory out{m.scheme, bin_width, {}};
  out.states.reserve(bins + 1);
  Eigen::VectorXd p = p0.values;
  out.states.push_back(p);
  for (int k = 0; k < bins; ++k) {
    p = prop.transition() * p;
    detail::clamp_populations(p);
    out.states.push_back(p);
  }
  return out;
}

/// Final state after `duration` under M, without storing the path.
inline PopulationVector propagate(const RateMatrix& m, const PopulationVector& p0, double duration) {
  detail::check_finite(m, p0.values);
  if (!(duration >= 0.0)) throw std::invalid_argument("duration must be >= 0");
  if (duration == 0.0) return p0;
  Eigen::VectorXd p = (m.generator * duration).exp() * p0.values;
  detail::clamp_populations(p);
  return {p0.scheme, std::move(p)};
}

/// Unique stationary state of a laser-on generator, normalised to unit sum.
inline PopulationVector steady_state(const RateMatrix& m) {
  if (!m.generator.allFinite()) throw NumericalError("rate matrix has non-finite entries");
  const Eigen::Index n = m.generator.rows();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m.generator);
  const auto& sigma = svd.singularValues();
  if (sigma(n - 2) <= 1e-11 * std::max(1.0, sigma(0)))
    throw NumericalError("rate matrix has a degenerate null space; no unique steady state");

  Eigen::MatrixXd a = m.generator;
  a.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;
  Eigen::VectorXd p = a.fullPivLu().solve(rhs);
  detail::clamp_populations(p);
  p /= p.sum();
  return {m.scheme, std::move(p)};
}

// ---------------------------------------------------------------------------
// Fluorescence

/// Expected detected photons per time bin for one readout shot.
struct FluorescenceTrace {
  double bin_width = 1.0;
  std::vector<double> values;
  std::optional<SpinStateLabel> initial_state;

  double duration() const { return bin_width * static_cast<double>(values.size()); }

  /// Number of whole bins inside [0, t_p].
  std::size_t bins_within(double t_p) const {
    if (!(t_p >= 0.0)) throw std::invalid_argument("pulse length must be >= 0");
    const auto n = static_cast<std::size_t>(std::floor(t_p / bin_width + 1e-9));
    if (n > values.size())
      throw std::invalid_argument("pulse length " + std::to_string(t_p) + " ns exceeds the trace duration " +
                                  std::to_string(duration()) + " ns");
    return n;
  }

  /// N(t_p): photons summed over the bins in [0, t_p].
  double cumulative(double t_p) const {
    const auto n = bins_within(t_p);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += values[i];
    return sum;
  }
};

/// Detection-weighted radiative rate on every excited level.
inline Eigen::RowVectorXd emission_weights(const LevelScheme& scheme, const RateParameters& rates) {
  Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(scheme.size());
  for (int i = 0; i < scheme.size(); ++i)
    if (scheme.label(i).manifold == Manifold::excited) w(i) = rates.detection_efficiency * rates.k_rad;
  return w;
}

inline FluorescenceTrace fluorescence_trace(const RateMatrix& laser_on, const RateParameters& rates,
                                            const PopulationVector& p0, double duration, double bin_width) {
  if (!laser_on.laser_on) throw std::invalid_argument("fluorescence needs a laser-on rate matrix");
  detail::check_finite(laser_on, p0.values);
  const int bins = bin_count(duration, bin_width);
  const Propagator prop(laser_on, bin_width, emission_weights(laser_on.scheme, rates));
  FluorescenceTrace trace{bin_width, {}, std::nullopt};
  trace.values.reserve(bins);
  Eigen::VectorXd p = p0.values;
  for (int k = 0; k < bins; ++k) {
    trace.values.push_back(std::max(0.0, prop.integral().dot(p)));
    p = prop.transition() * p;
    detail::clamp_populations(p);
  }
  return trace;
}

/// Readout transient for a system prepared in the ground-state level
/// `initial`.
inline FluorescenceTrace fluorescence_trace(const SpinStateLabel& initial, const NvParameters& params,
                                            const RateParameters& rates, double field, double duration,
                                            double bin_width, const FlipFlopOptions& options = {}) {
  if (initial.manifold != Manifold::ground)
    throw std::invalid_argument("readout must start from a ground-state level, got " + to_string(initial));
  const auto m = build_rate_matrix(params, rates, field, true, options);
  auto trace = fluorescence_trace(m, rates, PopulationVector::pure(m.scheme, initial), duration, bin_width);
  trace.initial_state = initial;
  return trace;
}

/// Steady-state detected count rate in photons per ns.
inline double steady_state_count_rate(const NvParameters& params, const RateParameters& rates, double field) {
  const auto m = build_rate_matrix(params, rates, field, true);
  const auto p = steady_state(m);
  return emission_weights(m.scheme, rates).dot(p.values);
}

/// Detection efficiency giving `target_rate` photons/ns in steady state.
inline double calibrated_detection_efficiency(const NvParameters& params, RateParameters rates, double field,
                                              double target_rate) {
  rates.detection_efficiency = 1.0;
  return target_rate / steady_state_count_rate(params, rates, field);
}

// ---------------------------------------------------------------------------
// Signal and SNR

/// N_bright(t_p) - N_dark(t_p).
inline double cumulative_signal(const FluorescenceTrace& bright, const FluorescenceTrace& dark, double t_p) {
  if (std::abs(bright.bin_width - dark.bin_width) > 1e-12 * bright.bin_width)
    throw std::invalid_argument("traces have different bin widths");
  return bright.cumulative(t_p) - dark.cumulative(t_p);
}

enum class ReadoutMode { conventional, enhanced };

inline std::string to_string(ReadoutMode m) { return m == ReadoutMode::conventional ? "conventional" : "enhanced"; }

struct SnrCurve {
  ReadoutMode mode = ReadoutMode::conventional;
  std::vector<double> pulse_lengths;
  std::vector<double> signal;
  std::vector<double> noise;
  std::vector<double> snr;
  std::size_t best = 0;

  double optimal_pulse_length() const { return pulse_lengths.at(best); }
  double max_snr() const { return snr.at(best); }
};

/// SNR(t_p) = (N_b - N_d) / sqrt(N_b + N_d), scaled by sqrt(shots).
inline SnrCurve snr_curve(const FluorescenceTrace& bright, const FluorescenceTrace& dark,
                          const std::vector<double>& pulse_lengths, int shots = 1,
                          ReadoutMode mode = ReadoutMode::conventional) {
  if (shots < 1) throw std::invalid_argument("shots must be >= 1");
  if (pulse_lengths.empty()) throw std::invalid_argument("pulse length grid is empty");
  if (std::abs(bright.bin_width - dark.bin_width) > 1e-12 * bright.bin_width)
    throw std::invalid_argument("traces have different bin widths");
  const auto nonzero = [](const FluorescenceTrace& t) {
    return std::any_of(t.values.begin(), t.values.end(), [](double v) { return v != 0.0; });
  };
  if (!nonzero(bright) && !nonzero(dark)) throw std::invalid_argument("both traces are identically zero");

  const auto prefix = [](const FluorescenceTrace& t) {
    std::vector<double> out(t.values.size() + 1, 0.0);
    for (std::size_t i = 0; i < t.values.size(); ++i) out[i + 1] = out[i] + t.values[i];
    return out;
  };
  const auto nb_prefix = prefix(bright);
  const auto nd_prefix = prefix(dark);

  SnrCurve out;
  out.mode = mode;
  const double scale = std::sqrt(static_cast<double>(shots));
  for (double t_p : pulse_lengths) {
    const double nb = nb_prefix[bright.bins_within(t_p)];
    const double nd = nd_prefix[dark.bins_within(t_p)];
    const double noise = std::sqrt(nb + nd);
    out.pulse_lengths.push_back(t_p);
    out.signal.push_back(nb - nd);
    out.noise.push_back(noise);
    out.snr.push_back(noise > 0.0 ? scale * (nb - nd) / noise : 0.0);
  }
  out.best = static_cast<std::size_t>(std::max_element(out.snr.begin(), out.snr.end()) - out.snr.begin());
  return out;
}

/// sqrt(1 + sum 2 I_n) for ancilla nuclei with spins I_n taking part in
/// the excited-state flip-flop cascade.
inline double theoretical_enhancement(std::span<const double> spins) {
  double sum = 0.0;
  for (double s : spins) {
    const double twice = 2.0 * s;
    if (!(s >= 0.5) || std::abs(twice - std::round(twice)) > 1e-12)
      throw std::invalid_argument("nuclear spins must be positive half-integers");
    sum += twice;
  }
  return std::sqrt(1.0 + sum);
}

}  // namespace nvreadout
