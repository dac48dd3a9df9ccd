// Core value types shared by every nvreadout module: physical constants,
// spin-state labels, the per-manifold product basis and the error types.
#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nvreadout {

inline constexpr const char* kVersion = "0.1.0";

/// Thrown when a state label cannot be matched to a single eigenvector.
class AmbiguousAssignment : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a numerical routine leaves its domain of validity
/// (non-finite input, negative populations, degenerate null spaces).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Manifold { ground, excited, singlet };

inline std::string to_string(Manifold m) {
  switch (m) {
    case Manifold::ground: return "ground";
    case Manifold::excited: return "excited";
    case Manifold::singlet: return "singlet";
  }
  return "unknown";
}

/// |m_S, m_I> in one manifold. m_I is a half-integer stored exactly as a
/// double; singlet labels keep m_S = 0 by convention.
struct SpinStateLabel {
  int m_s = 0;
  double m_i = 0.0;
  Manifold manifold = Manifold::ground;

  friend bool operator==(const SpinStateLabel&, const SpinStateLabel&) = default;
};

inline std::string format_half_integer(double v) {
  const double twice = std::round(2.0 * v);
  char buf[32];
  if (std::fmod(std::abs(twice), 2.0) == 1.0) {
    std::snprintf(buf, sizeof buf, "%s%d/2", twice < 0 ? "-" : "+", static_cast<int>(std::abs(twice)));
  } else {
    const int whole = static_cast<int>(twice / 2.0);
    if (whole == 0) return "0";
    std::snprintf(buf, sizeof buf, "%+d", whole);
  }
  return buf;
}

inline std::string to_string(const SpinStateLabel& s) {
  if (s.manifold == Manifold::singlet) return "S|" + format_half_integer(s.m_i) + ">";
  std::string out = "|" + format_half_integer(s.m_s) + "," + format_half_integer(s.m_i) + ">";
  return s.manifold == Manifold::excited ? out + "e" : out;
}

inline SpinStateLabel ground(int m_s, double m_i) { return {m_s, m_i, Manifold::ground}; }
inline SpinStateLabel excited(int m_s, double m_i) { return {m_s, m_i, Manifold::excited}; }
inline SpinStateLabel singlet(double m_i) { return {0, m_i, Manifold::singlet}; }

/// Constants of the ground- and excited-state spin Hamiltonians.
/// Energies in MHz, gyromagnetic ratios in MHz/G.
///
/// gamma_e and gamma_n are the standard free-electron and nitrogen values
/// (CODATA g_e mu_B / h = 2.8025 MHz/G; 14N: 0.3077 kHz/G, 15N: -0.4316 kHz/G).
struct NvParameters {
  double d_gs = 2870.0;
  double d_es = 1420.0;
  double a_gs = -2.166;
  double a_es = 40.0;
  double q = 4.945;
  double gamma_e = 2.8025;
  double gamma_n = 3.077e-4;
  double nuclear_spin = 1.0;

  static NvParameters nitrogen14() { return {}; }

  /// 15N (I = 1/2): no quadrupole term; hyperfine constants change sign
  /// with the nuclear gyromagnetic ratio.
  static NvParameters nitrogen15() {
    NvParameters p;
    p.a_gs = 3.03;
    p.a_es = -61.0;
    p.q = 0.0;
    p.gamma_n = -4.316e-4;
    p.nuclear_spin = 0.5;
    return p;
  }

  int nuclear_dim() const { return static_cast<int>(std::lround(2.0 * nuclear_spin)) + 1; }

  void validate() const {
    auto fail = [](const std::string& key, const std::string& what) {
      throw std::invalid_argument(key + ": " + what);
    };
    for (double v : {d_gs, d_es, a_gs, a_es, q, gamma_e, gamma_n, nuclear_spin})
      if (!std::isfinite(v)) fail("parameters", "non-finite value");
    if (d_gs <= 0) fail("d_gs", "must be > 0");
    if (d_es <= 0) fail("d_es", "must be > 0");
    if (q < 0) fail("q", "must be >= 0");
    if (gamma_e <= 0) fail("gamma_e", "must be > 0");
    if (std::abs(gamma_n) >= 1e-2 * gamma_e) fail("gamma_n", "|gamma_n| must be below 1e-2 * gamma_e");
    const double twice = 2.0 * nuclear_spin;
    if (nuclear_spin < 0.5 || std::abs(twice - std::round(twice)) > 1e-12 || nuclear_spin > 4.5)
      fail("nuclear_spin", "must be a half-integer in [1/2, 9/2]");
  }

  friend bool operator==(const NvParameters&, const NvParameters&) = default;
};

/// Nuclear projections -I, ..., +I in ascending order.
inline std::vector<double> nuclear_projections(double nuclear_spin) {
  const int n = static_cast<int>(std::lround(2.0 * nuclear_spin)) + 1;
  std::vector<double> out(n);
  for (int k = 0; k < n; ++k) out[k] = -nuclear_spin + k;
  return out;
}

/// Ordered product basis |m_S> (x) |m_I> of one triplet manifold, or the
/// nuclear-only basis of the singlet. m_S runs -1, 0, +1 and m_I ascends
/// within each electron block.
class SpinBasis {
 public:
  SpinBasis(double nuclear_spin, Manifold manifold) : nuclear_spin_(nuclear_spin), manifold_(manifold) {
    const auto projections = nuclear_projections(nuclear_spin);
    if (manifold == Manifold::singlet) {
      for (double m_i : projections) labels_.push_back({0, m_i, manifold});
    } else {
      for (int m_s = -1; m_s <= 1; ++m_s)
        for (double m_i : projections) labels_.push_back({m_s, m_i, manifold});
    }
  }

  int size() const { return static_cast<int>(labels_.size()); }
  int nuclear_dim() const { return static_cast<int>(std::lround(2.0 * nuclear_spin_)) + 1; }
  double nuclear_spin() const { return nuclear_spin_; }
  Manifold manifold() const { return manifold_; }
  const std::vector<SpinStateLabel>& labels() const { return labels_; }
  const SpinStateLabel& operator[](int i) const { return labels_.at(i); }

  std::optional<int> find(const SpinStateLabel& s) const {
    if (s.manifold != manifold_) return std::nullopt;
    for (int i = 0; i < size(); ++i)
      if (labels_[i] == s) return i;
    return std::nullopt;
  }

  int index(const SpinStateLabel& s) const {
    if (auto i = find(s)) return *i;
    throw std::invalid_argument("state " + to_string(s) + " is not in the " + to_string(manifold_) + " basis");
  }

  friend bool operator==(const SpinBasis& a, const SpinBasis& b) {
    return a.nuclear_spin_ == b.nuclear_spin_ && a.manifold_ == b.manifold_;
  }

 private:
  double nuclear_spin_;
  Manifold manifold_;
  std::vector<SpinStateLabel> labels_;
};

/// Unordered pair of states of the same manifold.
struct StatePair {
  SpinStateLabel a;
  SpinStateLabel b;

  bool matches(const SpinStateLabel& x, const SpinStateLabel& y) const {
    return (a == x && b == y) || (a == y && b == x);
  }
};

inline std::string to_string(const StatePair& p) { return "{" + to_string(p.a) + "," + to_string(p.b) + "}"; }

}  // namespace nvreadout
