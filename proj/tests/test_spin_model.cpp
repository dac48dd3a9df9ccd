#include <gtest/gtest.h>

#include "support.hpp"

using namespace nvreadout;
using testing_support::constants;
using testing_support::row;

namespace {

const NvParameters kDefaults;

}  // namespace

TEST(Parameters, DefaultsMatchPublishedConstants) {
  EXPECT_DOUBLE_EQ(kDefaults.d_gs, 2870.0);
  EXPECT_DOUBLE_EQ(kDefaults.d_es, 1420.0);
  EXPECT_DOUBLE_EQ(kDefaults.a_gs, -2.166);
  EXPECT_DOUBLE_EQ(kDefaults.a_es, 40.0);
  EXPECT_DOUBLE_EQ(kDefaults.q, 4.945);
  EXPECT_DOUBLE_EQ(kDefaults.nuclear_spin, 1.0);
  EXPECT_NO_THROW(kDefaults.validate());
  EXPECT_NO_THROW(NvParameters::nitrogen15().validate());
}

TEST(Parameters, ValidationNamesTheOffendingField) {
  auto expect_rejects = [](NvParameters p, const std::string& key) {
    try {
      p.validate();
      ADD_FAILURE() << "accepted invalid " << key;
    } catch (const std::invalid_argument& e) {
      EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
    }
  };
  NvParameters p = kDefaults;
  p.q = -1.0;
  expect_rejects(p, "q");
  p = kDefaults;
  p.d_es = 0.0;
  expect_rejects(p, "d_es");
  p = kDefaults;
  p.gamma_n = 0.1;
  expect_rejects(p, "gamma_n");
  p = kDefaults;
  p.nuclear_spin = 0.7;
  expect_rejects(p, "nuclear_spin");
}

TEST(Basis, SizesAndOrdering) {
  const SpinBasis g(1.0, Manifold::ground);
  EXPECT_EQ(g.size(), 9);
  EXPECT_EQ(g[0], ground(-1, -1.0));
  EXPECT_EQ(g[8], ground(1, 1.0));
  EXPECT_EQ(SpinBasis(0.5, Manifold::excited).size(), 6);
  EXPECT_EQ(SpinBasis(1.0, Manifold::singlet).size(), 3);
  EXPECT_THROW(g.index(excited(0, 0.0)), std::invalid_argument);
  EXPECT_EQ(to_string(ground(0, 1.0)), "|0,+1>");
  EXPECT_EQ(to_string(excited(-1, 0.5)), "|-1,+1/2>e");
}

TEST(Hamiltonian, MatchesKroneckerConstruction) {
  for (auto m : {Manifold::ground, Manifold::excited}) {
    for (double b : {0.0, 123.4, 500.0, 1000.0}) {
      const auto h = build_hamiltonian(kDefaults, b, m);
      const auto ref = oracle::hamiltonian(constants(kDefaults, m), b);
      EXPECT_LT((h.entries - ref).cwiseAbs().maxCoeff(), 1e-12) << "B = " << b;
    }
  }
  const auto n15 = NvParameters::nitrogen15();
  const auto h = build_hamiltonian(n15, 300.0, Manifold::excited);
  EXPECT_EQ(h.dim(), 6);
  EXPECT_LT((h.entries - oracle::hamiltonian(constants(n15, Manifold::excited), 300.0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Hamiltonian, ZeroFieldDiagonal) {
  const auto h = build_hamiltonian(kDefaults, 0.0, Manifold::ground);
  const auto& b = h.basis;
  EXPECT_DOUBLE_EQ(h.entries(b.index(ground(0, 0.0)), b.index(ground(0, 0.0))).real(), 0.0);
  const double expected = kDefaults.d_gs + kDefaults.q + kDefaults.a_gs;
  EXPECT_NEAR(h.entries(b.index(ground(1, 1.0)), b.index(ground(1, 1.0))).real(), expected, 1e-12);
  EXPECT_NEAR(h.entries(b.index(ground(-1, -1.0)), b.index(ground(-1, -1.0))).real(), expected, 1e-12);
}

TEST(Hamiltonian, OffDiagonalOnlyOnFlipFlopPairs) {
  const auto h = build_hamiltonian(kDefaults, 0.0, Manifold::ground);
  for (int i = 0; i < h.dim(); ++i) {
    for (int j = 0; j < h.dim(); ++j) {
      if (i == j) continue;
      const auto a = h.basis[i], c = h.basis[j];
      const bool same_sector = a.m_s + a.m_i == c.m_s + c.m_i;
      const bool flip_flop = std::abs(a.m_s - c.m_s) == 1 && same_sector;
      if (!flip_flop) EXPECT_EQ(std::abs(h.entries(i, j)), 0.0) << i << "," << j;
      else EXPECT_GT(std::abs(h.entries(i, j)), 0.0);
    }
  }
}

TEST(Hamiltonian, ExcitedPairDiagonalInsideAnticrossingWindow) {
  const auto h = build_hamiltonian(kDefaults, 0.0, Manifold::excited);
  const int i00 = h.basis.index(excited(0, 0.0)), i11 = h.basis.index(excited(-1, 1.0));
  // diagonal crossing read off the zero-field matrix: slope of E(-1,+1) is -(ge - gn)
  const double offset = h.entries(i11, i11).real() - h.entries(i00, i00).real();
  const double crossing = offset / (kDefaults.gamma_e - kDefaults.gamma_n);
  EXPECT_NEAR(offset, 1420.0 - 40.0 + 4.945, 1e-12);
  EXPECT_NEAR(crossing, 494.236, 1e-3);
  EXPECT_NEAR(kDefaults.d_es / kDefaults.gamma_e, 506.69, 0.01);
  const auto h507 = build_hamiltonian(kDefaults, 507.0, Manifold::excited);
  EXPECT_LT(std::abs(h507.entries(i00, i00).real() - h507.entries(i11, i11).real()), std::abs(kDefaults.a_es));
}

TEST(Hamiltonian, RejectsInvalidInput) {
  EXPECT_THROW(build_hamiltonian(kDefaults, -1.0, Manifold::ground), std::invalid_argument);
  EXPECT_THROW(build_hamiltonian(kDefaults, 10.0, Manifold::singlet), std::invalid_argument);
  NvParameters bad = kDefaults;
  bad.q = -1.0;
  EXPECT_THROW(build_hamiltonian(bad, 10.0, Manifold::ground), std::invalid_argument);
}

TEST(Eigensystem, DiagonalInputGivesSortedPermutation) {
  const SpinBasis basis(1.0, Manifold::ground);
  Eigen::VectorXd diag(9);
  diag << 5, -3, 8, 0.5, 2, 7, -1, 4, 6;
  HamiltonianMatrix h{basis, diag.cast<std::complex<double>>().asDiagonal()};
  const auto eig = eigensystem(h);
  std::vector<double> sorted(diag.data(), diag.data() + 9);
  std::sort(sorted.begin(), sorted.end());
  for (int k = 0; k < 9; ++k) {
    EXPECT_DOUBLE_EQ(eig.energies(k), sorted[k]);
    Eigen::Index r = 0;
    EXPECT_DOUBLE_EQ(eig.vectors.col(k).cwiseAbs().maxCoeff(&r), 1.0);
    EXPECT_DOUBLE_EQ(diag(r), sorted[k]);
    EXPECT_EQ(eig.vectors(r, k), std::complex<double>(1.0, 0.0));
  }
}

TEST(Eigensystem, RejectsNonHermitianInput) {
  auto h = build_hamiltonian(kDefaults, 100.0, Manifold::ground);
  h.entries(0, 1) += std::complex<double>(0.0, 1e-6);
  EXPECT_THROW(eigensystem(h), std::invalid_argument);
}

TEST(Eigensystem, UnitaryResidualsAndPhases) {
  for (auto m : {Manifold::ground, Manifold::excited}) {
    for (double b : {0.0, 250.0, 494.4, 505.0, 1024.0}) {
      const auto h = build_hamiltonian(kDefaults, b, m);
      const auto eig = eigensystem(h);
      const auto& v = eig.vectors;
      EXPECT_LT((v.adjoint() * v - Eigen::MatrixXcd::Identity(9, 9)).cwiseAbs().maxCoeff(), 1e-10);
      for (int k = 0; k < eig.size(); ++k) {
        EXPECT_LT((h.entries * v.col(k) - eig.energies(k) * v.col(k)).cwiseAbs().maxCoeff(), 1e-8);
        if (k > 0) {
          EXPECT_LE(eig.energies(k - 1), eig.energies(k));
        }
        // the largest component is real and positive; near-ties go to the lowest row
        const double top = v.col(k).cwiseAbs().maxCoeff();
        Eigen::Index r = 0;
        while (std::abs(v(r, k)) < top - 1e-12) ++r;
        EXPECT_EQ(v(r, k).imag(), 0.0);
        EXPECT_GT(v(r, k).real(), 0.0);
      }
    }
  }
}

TEST(Eigensystem, ZeroFieldCentredOnSplitting) {
  // at exactly 0 G |-1,+1> and |+1,-1> are degenerate and mix through |0,0>
  EXPECT_THROW(eigensystem(kDefaults, 0.0, Manifold::ground).energy_of(ground(-1, 1.0)), AmbiguousAssignment);
  const auto eig = eigensystem(kDefaults, 0.1, Manifold::ground);
  double sum = 0.0;
  for (double m_i : {-1.0, 0.0, 1.0}) {
    const double e0 = oracle::energy_of(oracle::hamiltonian(constants(kDefaults, Manifold::ground), 0.1),
                                        row(kDefaults, ground(0, m_i)));
    sum += eig.energy_of(ground(-1, m_i)) - e0;
  }
  EXPECT_NEAR(sum / 3.0, 2870.0, 3.0);
}

TEST(TransitionFrequency, HyperfineTripletAtLowField) {
  const auto eig = eigensystem(kDefaults, 10.0, Manifold::ground);
  const double fm = transition_frequency(eig, ground(0, -1.0), ground(-1, -1.0));
  const double f0 = transition_frequency(eig, ground(0, 0.0), ground(-1, 0.0));
  const double fp = transition_frequency(eig, ground(0, 1.0), ground(-1, 1.0));
  // A_gs < 0 puts m_I = +1 highest
  EXPECT_NEAR(fp - f0, 2.166, 0.02);
  EXPECT_NEAR(f0 - fm, 2.166, 0.02);
}

TEST(TransitionFrequency, MatchesDiagonalisationOracleAt500G) {
  const auto eig = eigensystem(kDefaults, 500.0, Manifold::ground);
  const auto ref = oracle::hamiltonian(constants(kDefaults, Manifold::ground), 500.0);
  auto oracle_f = [&](const SpinStateLabel& a, const SpinStateLabel& b) {
    return std::abs(oracle::energy_of(ref, row(kDefaults, a)) - oracle::energy_of(ref, row(kDefaults, b)));
  };
  const double f = transition_frequency(eig, ground(0, 1.0), ground(-1, 1.0));
  EXPECT_GT(f, 1460.0);
  EXPECT_LT(f, 1480.0);
  EXPECT_NEAR(f, oracle_f(ground(0, 1.0), ground(-1, 1.0)), 1e-9);

  const double up = transition_frequency(eig, ground(0, 0.0), ground(0, 1.0));
  const double down = transition_frequency(eig, ground(0, 0.0), ground(0, -1.0));
  // second-order hyperfine shifts both lines by about 2 kHz
  const double zeeman = 2.0 * kDefaults.gamma_n * 500.0;
  EXPECT_NEAR(up - down, zeeman, 0.02 * zeeman);
  EXPECT_NEAR(0.5 * (up + down), kDefaults.q, 0.02);
  EXPECT_GT(std::abs(up - down - zeeman), 1e-3);

  const double up_m1 = transition_frequency(eig, ground(-1, 0.0), ground(-1, 1.0));
  const double down_m1 = transition_frequency(eig, ground(-1, 0.0), ground(-1, -1.0));
  EXPECT_NEAR(up_m1, oracle_f(ground(-1, 0.0), ground(-1, 1.0)), 1e-9);
  EXPECT_NEAR(down_m1, oracle_f(ground(-1, 0.0), ground(-1, -1.0)), 1e-9);
  // the m_S = -1 pair is displaced by about |A| in opposite directions
  EXPECT_NEAR(up_m1 - up, std::abs(kDefaults.a_gs), 0.05);
  EXPECT_NEAR(down - down_m1, std::abs(kDefaults.a_gs), 0.05);
}

TEST(TransitionFrequency, AmbiguousAssignmentIsReported) {
  // a 50/50 superposition of two basis states cannot be labelled
  const SpinBasis basis(1.0, Manifold::ground);
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(9, 9);
  for (int i = 0; i < 9; ++i) h(i, i) = 10.0 * i;
  const int a = basis.index(ground(0, 0.0)), b = basis.index(ground(-1, 1.0));
  h(a, a) = h(b, b) = 40.0;
  h(a, b) = h(b, a) = 1.0;
  const auto eig = eigensystem(HamiltonianMatrix{basis, h});
  EXPECT_THROW(transition_frequency(eig, ground(0, 0.0), ground(1, 1.0)), AmbiguousAssignment);
  EXPECT_THROW(eig.assigned_index(ground(-1, 1.0)), AmbiguousAssignment);
  EXPECT_NO_THROW(transition_frequency(eig, ground(1, 1.0), ground(1, 0.0)));
}

TEST(LevelDiagram, SinglePointReducesToEigensystem) {
  const auto d = level_diagram(kDefaults, {321.0}, Manifold::excited);
  ASSERT_EQ(d.size(), 1u);
  const auto eig = eigensystem(kDefaults, 321.0, Manifold::excited);
  EXPECT_LT((d[0].energies - eig.energies).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LevelDiagram, ZeemanSlopeOfLowerBranch) {
  // labels are read at the first grid point, which must avoid the 0 G degeneracy
  std::vector<double> fields;
  for (double b = 1.0; b <= 1000.0; b += 1.0) fields.push_back(b);
  const auto d = level_diagram(kDefaults, fields, Manifold::ground);
  const SpinBasis basis(1.0, Manifold::ground);
  const auto labels = branch_labels(d, basis);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k].m_s != -1) continue;
    const double slope = (d[799].energies(k) - d[99].energies(k)) / 700.0;
    EXPECT_NEAR(slope, -kDefaults.gamma_e, 2e-3 * kDefaults.gamma_e) << to_string(labels[k]);
  }
}

TEST(LevelDiagram, AvoidedAndTrueCrossingsNear500G) {
  std::vector<double> fields;
  for (double b = 400.0; b <= 600.0; b += 0.5) fields.push_back(b);
  const auto d = level_diagram(kDefaults, fields, Manifold::excited);
  const SpinBasis basis(1.0, Manifold::excited);
  const auto labels = branch_labels(d, basis);
  auto branch = [&](const SpinStateLabel& s) {
    return static_cast<int>(std::find(labels.begin(), labels.end(), s) - labels.begin());
  };
  auto min_gap = [&](int i, int j) {
    double g = INFINITY;
    for (const auto& p : d) g = std::min(g, std::abs(p.energies(i) - p.energies(j)));
    return g;
  };
  // labels at 400 G: the anticrossing partners are far apart in energy there
  for (const auto& pair : lac_pairs(1.0)) EXPECT_GT(min_gap(branch(pair.a), branch(pair.b)), 50.0);
  // upper and lower branches of the pair anticross: the gap at closest approach stays finite
  auto eig_gap = [&](double b) {
    const auto eig = eigensystem(kDefaults, b, Manifold::excited);
    return pair_gap(eig, excited(0, 0.0), excited(-1, 1.0));
  };
  EXPECT_GT(eig_gap(anticrossing_field(kDefaults, lac_pairs(1.0)[1], 450, 550)), 50.0);
  // the uncoupled pair crosses: its energy difference changes sign along the tracked branches
  const int a = branch(excited(0, 1.0)), b = branch(excited(-1, -1.0));
  EXPECT_GT(d.front().energies(b) - d.front().energies(a), 0.0);
  EXPECT_LT(d.back().energies(b) - d.back().energies(a), 0.0);
}

TEST(LevelDiagram, RejectsBadGrids) {
  EXPECT_THROW(level_diagram(kDefaults, {}, Manifold::ground), std::invalid_argument);
  EXPECT_THROW(level_diagram(kDefaults, {1.0, 1.0}, Manifold::ground), std::invalid_argument);
  EXPECT_THROW(level_diagram(kDefaults, {2.0, 1.0}, Manifold::ground), std::invalid_argument);
}

TEST(FlipFlop, PairsAndLacPairs) {
  const auto pairs = flip_flop_pairs(1.0, Manifold::excited);
  EXPECT_EQ(pairs.size(), 4u);
  const auto lac = lac_pairs(1.0);
  ASSERT_EQ(lac.size(), 2u);
  for (const auto& p : lac) EXPECT_TRUE(is_lac_pair(p));
  EXPECT_TRUE(std::any_of(lac.begin(), lac.end(), [](const StatePair& p) {
    return p.matches(excited(0, 0.0), excited(-1, 1.0));
  }));
  EXPECT_FALSE(is_lac_pair({excited(0, 1.0), excited(1, 0.0)}));
  EXPECT_EQ(lac_pairs(0.5).size(), 1u);
}

TEST(FlipFlop, ZeroFieldMatchesTwoLevelEstimate) {
  // coupling <0,0|H|-1,+1> = A/2 * sqrt(2) * sqrt(2) = A; bare splitting from the diagonal
  const auto a = flip_flop_probability(kDefaults, 0.0);
  const auto h = build_hamiltonian(kDefaults, 0.0, Manifold::excited);
  for (std::size_t k = 0; k < a.pairs.size(); ++k) {
    const int i = h.basis.index(a.pairs[k].a), j = h.basis.index(a.pairs[k].b);
    const double estimate =
        oracle::two_level_flip_probability(std::abs(h.entries(i, j)), (h.entries(i, i) - h.entries(j, j)).real());
    EXPECT_NEAR(a.pair_probabilities[k], estimate, 0.05 * estimate) << to_string(a.pairs[k]);
    EXPECT_LT(a.pair_probabilities[k], 4e-3);
  }
}

TEST(FlipFlop, MaximalMixingAtMinimalGap) {
  for (const auto& pair : lac_pairs(1.0)) {
    const double b = anticrossing_field(kDefaults, pair, 400.0, 600.0);
    const auto at = flip_flop_probability(kDefaults, b);
    EXPECT_NEAR(at.probability(pair.a, pair.b), 1.0, 1e-3) << to_string(pair);
    for (double d : {-50.0, 50.0}) EXPECT_LT(flip_flop_probability(kDefaults, b + d).probability(pair.a, pair.b),
                                             at.probability(pair.a, pair.b));
    // monotone decay away from the anticrossing on both sides
    double prev = at.probability(pair.a, pair.b);
    for (double x = b + 1.0; x <= b + 150.0; x += 1.0) {
      const double p = flip_flop_probability(kDefaults, x).probability(pair.a, pair.b);
      EXPECT_LE(p, prev);
      prev = p;
    }
    prev = at.probability(pair.a, pair.b);
    for (double x = b - 1.0; x >= b - 150.0; x -= 1.0) {
      const double p = flip_flop_probability(kDefaults, x).probability(pair.a, pair.b);
      EXPECT_LE(p, prev);
      prev = p;
    }
  }
}

TEST(FlipFlop, UncoupledPairNeverMixes) {
  for (double b = 0.0; b <= 1000.0; b += 2.5)
    EXPECT_LT(flip_flop_probability(kDefaults, b).probability(excited(0, 1.0), excited(-1, -1.0)), 1e-6);
}

TEST(Anticrossing, LocatedFieldMatchesDenseScan) {
  const auto c = constants(kDefaults, Manifold::excited);
  for (const auto& pair : lac_pairs(1.0)) {
    const double located = anticrossing_field(kDefaults, pair, 400.0, 600.0);
    const double scanned = oracle::dense_gap_scan(c, row(kDefaults, pair.a), row(kDefaults, pair.b), 400.0, 600.0, 0.1);
    EXPECT_NEAR(located, scanned, 0.1) << to_string(pair);
  }
  // frozen from an independent prototype diagonalisation
  EXPECT_NEAR(anticrossing_field(kDefaults, {excited(0, 0.0), excited(-1, 1.0)}, 400.0, 600.0), 494.442, 0.05);
  EXPECT_NEAR(anticrossing_field(kDefaults, {excited(0, -1.0), excited(-1, 0.0)}, 400.0, 600.0), 504.981, 0.05);
  EXPECT_NEAR(lac_field(kDefaults), 499.71, 0.05);
  EXPECT_THROW(anticrossing_field(kDefaults, lac_pairs(1.0)[0], 600.0, 400.0), std::invalid_argument);
}
