// Ground- and excited-state spin Hamiltonians of the NV centre with its
// nitrogen nucleus, their spectral decomposition, level diagrams versus
// magnetic field and the flip-flop mixing at the excited-state anticrossing.
//
// B is always parallel to the NV axis. All energies are in MHz and all
// fields in Gauss.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "nvreadout/types.hpp"

namespace nvreadout {

struct HamiltonianMatrix {
  SpinBasis basis;
  Eigen::MatrixXcd entries;

  int dim() const { return static_cast<int>(entries.rows()); }
};

/// Spectral decomposition with ascending energies. Column k of `vectors`
/// is the eigenvector of energies(k) in `basis`, phase-fixed so that its
/// largest-magnitude component is real and positive.
struct Eigensystem {
  SpinBasis basis;
  Eigen::VectorXd energies;
  Eigen::MatrixXcd vectors;

  int size() const { return static_cast<int>(energies.size()); }

  /// |<label|psi_k>|^2
  double weight(int k, const SpinStateLabel& label) const {
    return std::norm(vectors(basis.index(label), k));
  }

  /// Index of the eigenvector carrying more than half of `label`, or an
  /// AmbiguousAssignment error when none does.
  int assigned_index(const SpinStateLabel& label) const {
    const int row = basis.index(label);
    // the margin keeps an exact 50/50 split ambiguous under rounding
    for (int k = 0; k < size(); ++k)
      if (std::norm(vectors(row, k)) > 0.5 + 1e-9) return k;
    throw AmbiguousAssignment("no eigenvector has more than half of its weight on " + to_string(label));
  }

  double energy_of(const SpinStateLabel& label) const { return energies(assigned_index(label)); }
};

namespace detail {

inline double raising_coefficient(double j, double m) { return std::sqrt(std::max(0.0, j * (j + 1.0) - m * (m + 1.0))); }

inline void check_hermitian(const Eigen::MatrixXcd& h) {
  if (h.rows() != h.cols()) throw std::invalid_argument("Hamiltonian must be square");
  if (!h.allFinite()) throw NumericalError("Hamiltonian has non-finite entries");
  const double err = (h - h.adjoint()).cwiseAbs().maxCoeff();
  if (err > 1e-12) throw std::invalid_argument("Hamiltonian is not Hermitian (max deviation " + std::to_string(err) + " MHz)");
}

inline void fix_phases(Eigen::MatrixXcd& vectors) {
  for (Eigen::Index k = 0; k < vectors.cols(); ++k) {
    Eigen::Index best = 0;
    double best_mag = -1.0;
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      // ties resolve to the lowest index
      const double mag = std::abs(vectors(i, k));
      if (mag > best_mag + 1e-12) {
        best_mag = mag;
        best = i;
      }
    }
    const std::complex<double> c = vectors(best, k);
    if (std::abs(c) > 0) vectors.col(k) *= std::conj(c) / std::abs(c);
  }
}

}  // namespace detail

/// H = D Sz^2 + gamma_e B Sz + A (S.I) + Q Iz^2 + gamma_n B Iz in the
/// |m_S, m_I> product basis, with D and A taken from `manifold`.
inline HamiltonianMatrix build_hamiltonian(const NvParameters& params, double field, Manifold manifold) {
  params.validate();
  if (!(field >= 0.0) || !std::isfinite(field)) throw std::invalid_argument("field must be finite and >= 0 G");
  if (manifold == Manifold::singlet) throw std::invalid_argument("the singlet has no spin Hamiltonian");

  const double d = manifold == Manifold::ground ? params.d_gs : params.d_es;
  const double a = manifold == Manifold::ground ? params.a_gs : params.a_es;
  const double nuclear_spin = params.nuclear_spin;

  SpinBasis basis(nuclear_spin, manifold);
  const int n = basis.size();
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(n, n);

  for (int col = 0; col < n; ++col) {
    const auto& s = basis[col];
    const double ms = s.m_s;
    const double mi = s.m_i;
    h(col, col) = d * ms * ms + params.gamma_e * field * ms + a * ms * mi + params.q * mi * mi + params.gamma_n * field * mi;

    // (A/2)(S+ I- + S- I+): only S+ I- is written, its adjoint fills the mirror entry
    if (s.m_s < 1 && mi > -nuclear_spin) {
      const int row = basis.index({s.m_s + 1, mi - 1.0, manifold});
      const double v = 0.5 * a * detail::raising_coefficient(1.0, ms) * detail::raising_coefficient(nuclear_spin, mi - 1.0);
      h(row, col) += v;
      h(col, row) += v;
    }
  }
  return {std::move(basis), std::move(h)};
}

inline Eigensystem eigensystem(const HamiltonianMatrix& h) {
  detail::check_hermitian(h.entries);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h.entries);
  if (solver.info() != Eigen::Success) throw NumericalError("eigensolver did not converge");
  Eigen::MatrixXcd vectors = solver.eigenvectors();
  detail::fix_phases(vectors);
  return {h.basis, solver.eigenvalues(), std::move(vectors)};
}

inline Eigensystem eigensystem(const NvParameters& params, double field, Manifold manifold) {
  return eigensystem(build_hamiltonian(params, field, manifold));
}

/// |E_a - E_b| between the eigenstates assigned to labels a and b.
inline double transition_frequency(const Eigensystem& eig, const SpinStateLabel& a, const SpinStateLabel& b) {
  const int ia = eig.assigned_index(a);
  const int ib = eig.assigned_index(b);
  if (ia == ib) throw AmbiguousAssignment(to_string(a) + " and " + to_string(b) + " resolve to the same eigenstate");
  return std::abs(eig.energies(ia) - eig.energies(ib));
}

// ---------------------------------------------------------------------------
// Level diagrams

struct LevelDiagramPoint {
  double field = 0.0;
  Eigen::VectorXd energies;  // branch order, not energy order
  Eigen::MatrixXcd vectors;  // column k belongs to branch k
};

/// Eigenvalues over a monotone field grid. Branches are continued by
/// maximal eigenvector overlap with the previous grid point, so true
/// crossings keep their diabatic identity while anticrossings follow the
/// adiabatic states.
inline std::vector<LevelDiagramPoint> level_diagram(const NvParameters& params, const std::vector<double>& fields,
                                                    Manifold manifold) {
  if (fields.empty()) throw std::invalid_argument("level diagram needs at least one field point");
  for (std::size_t i = 1; i < fields.size(); ++i)
    if (!(fields[i] > fields[i - 1])) throw std::invalid_argument("field grid must be strictly increasing");

  std::vector<LevelDiagramPoint> out;
  out.reserve(fields.size());
  for (double b : fields) {
    auto eig = eigensystem(params, b, manifold);
    if (out.empty()) {
      out.push_back({b, eig.energies, eig.vectors});
      continue;
    }
    const auto& prev = out.back().vectors;
    const int n = eig.size();
    const Eigen::MatrixXd overlap = (prev.adjoint() * eig.vectors).cwiseAbs2();

    std::vector<int> assignment(n, -1);
    std::vector<bool> used(n, false);
    for (int round = 0; round < n; ++round) {
      int best_branch = -1, best_state = -1;
      double best = -1.0;
      for (int br = 0; br < n; ++br) {
        if (assignment[br] >= 0) continue;
        for (int st = 0; st < n; ++st) {
          if (used[st]) continue;
          if (overlap(br, st) > best) {
            best = overlap(br, st);
            best_branch = br;
            best_state = st;
          }
        }
      }
      assignment[best_branch] = best_state;
      used[best_state] = true;
    }

    LevelDiagramPoint point{b, Eigen::VectorXd(n), Eigen::MatrixXcd(n, n)};
    for (int br = 0; br < n; ++br) {
      point.energies(br) = eig.energies(assignment[br]);
      point.vectors.col(br) = eig.vectors.col(assignment[br]);
    }
    out.push_back(std::move(point));
  }
  return out;
}

/// Name of each branch: the basis state with the largest weight at the
/// first field point.
inline std::vector<SpinStateLabel> branch_labels(const std::vector<LevelDiagramPoint>& diagram, const SpinBasis& basis) {
  std::vector<SpinStateLabel> out;
  if (diagram.empty()) return out;
  const auto& v = diagram.front().vectors;
  for (Eigen::Index k = 0; k < v.cols(); ++k) {
    Eigen::Index row = 0;
    v.col(k).cwiseAbs2().maxCoeff(&row);
    out.push_back(basis[static_cast<int>(row)]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Flip-flop mixing

/// Every hyperfine flip-flop pair {|m_S, m_I>, |m_S+1, m_I-1>} of a manifold.
inline std::vector<StatePair> flip_flop_pairs(double nuclear_spin, Manifold manifold) {
  std::vector<StatePair> out;
  for (int m_s = -1; m_s <= 0; ++m_s)
    for (double m_i : nuclear_projections(nuclear_spin))
      if (m_i > -nuclear_spin) out.push_back({{m_s, m_i, manifold}, {m_s + 1, m_i - 1.0, manifold}});
  return out;
}

/// The excited-state pairs {|0, m_I-1>, |-1, m_I>} that anticross for
/// B > 0 near D_es / gamma_e.
inline std::vector<StatePair> lac_pairs(double nuclear_spin) {
  std::vector<StatePair> out;
  for (const auto& p : flip_flop_pairs(nuclear_spin, Manifold::excited))
    if (p.a.m_s == -1) out.push_back({p.b, p.a});
  return out;
}

inline bool is_lac_pair(const StatePair& pair) {
  const auto& lo = pair.a.m_s < pair.b.m_s ? pair.a : pair.b;
  const auto& hi = pair.a.m_s < pair.b.m_s ? pair.b : pair.a;
  return lo.m_s == -1 && hi.m_s == 0 && lo.m_i == hi.m_i + 1.0;
}

/// Per-optical-cycle flip-flop probability between basis states a and b:
/// p = sum_k 2 |<a|psi_k>|^2 |<b|psi_k>|^2. Zero for unmixed states, one for
/// two states sharing two eigenvectors 50/50.
inline double pair_flip_flop_probability(const Eigensystem& eig, const SpinStateLabel& a, const SpinStateLabel& b) {
  const int ra = eig.basis.index(a);
  const int rb = eig.basis.index(b);
  double p = 0.0;
  for (int k = 0; k < eig.size(); ++k) p += 2.0 * std::norm(eig.vectors(ra, k)) * std::norm(eig.vectors(rb, k));
  return std::clamp(p, 0.0, 1.0);
}

struct LacAnalysis {
  double field = 0.0;
  std::vector<StatePair> pairs;
  std::vector<double> pair_probabilities;
  Eigensystem excited;

  /// Probability for any pair of excited-state labels, coupled or not.
  double probability(const SpinStateLabel& a, const SpinStateLabel& b) const {
    return pair_flip_flop_probability(excited, a, b);
  }
};

inline LacAnalysis flip_flop_probability(const NvParameters& params, double field) {
  auto eig = eigensystem(params, field, Manifold::excited);
  auto pairs = flip_flop_pairs(params.nuclear_spin, Manifold::excited);
  std::vector<double> probs;
  probs.reserve(pairs.size());
  for (const auto& p : pairs) probs.push_back(pair_flip_flop_probability(eig, p.a, p.b));
  return {field, std::move(pairs), std::move(probs), std::move(eig)};
}

/// Energy gap between the two eigenstates carrying most of the weight of
/// the pair {a, b}.
inline double pair_gap(const Eigensystem& eig, const SpinStateLabel& a, const SpinStateLabel& b) {
  const int ra = eig.basis.index(a);
  const int rb = eig.basis.index(b);
  int first = -1, second = -1;
  double w1 = -1.0, w2 = -1.0;
  for (int k = 0; k < eig.size(); ++k) {
    const double w = std::norm(eig.vectors(ra, k)) + std::norm(eig.vectors(rb, k));
    if (w > w1) {
      second = first;
      w2 = w1;
      first = k;
      w1 = w;
    } else if (w > w2) {
      second = k;
      w2 = w;
    }
  }
  return std::abs(eig.energies(first) - eig.energies(second));
}

namespace detail {

// Golden-section minimisation of a unimodal function on [lo, hi].
template <class F>
double golden_minimum(F&& f, double lo, double hi, double tol = 1e-6) {
  constexpr double inv_phi = 0.6180339887498949;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  while (hi - lo > tol) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    }
  }
  return 0.5 * (lo + hi);
}

template <class F>
double scan_then_refine(F&& objective, double lo, double hi, double step) {
  double best_b = lo, best = std::numeric_limits<double>::infinity();
  for (double b = lo; b <= hi + 1e-9; b += step) {
    const double v = objective(b);
    if (v < best) {
      best = v;
      best_b = b;
    }
  }
  return golden_minimum(objective, std::max(0.0, best_b - step), std::min(hi, best_b + step));
}

}  // namespace detail

/// Field of minimal excited-state gap between the branches of `pair`,
/// located by a grid scan on [lo, hi] refined by golden section.
inline double anticrossing_field(const NvParameters& params, const StatePair& pair, double lo, double hi,
                                 double step = 0.1) {
  if (!(lo >= 0.0) || !(hi > lo) || !(step > 0.0)) throw std::invalid_argument("invalid anticrossing search window");
  auto gap = [&](double b) { return pair_gap(eigensystem(params, b, Manifold::excited), pair.a, pair.b); };
  return detail::scan_then_refine(gap, lo, hi, step);
}

/// Operating field of the enhanced readout: the field maximising the
/// product of the flip-flop probabilities of all anticrossing pairs, i.e.
/// where every step of the readout cascade mixes best. Searched within
/// +-150 G of D_es / gamma_e.
inline double lac_field(const NvParameters& params, double step = 0.1) {
  const double centre = params.d_es / params.gamma_e;
  const auto pairs = lac_pairs(params.nuclear_spin);
  auto objective = [&](double b) {
    const auto eig = eigensystem(params, b, Manifold::excited);
    double prod = 1.0;
    for (const auto& p : pairs) prod *= pair_flip_flop_probability(eig, p.a, p.b);
    return -prod;
  };
  return detail::scan_then_refine(objective, std::max(0.0, centre - 150.0), centre + 150.0, step);
}

}  // namespace nvreadout
