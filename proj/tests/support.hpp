#pragma once

#include "nvreadout/experiments.hpp"
#include "oracles.hpp"

namespace testing_support {

inline oracle::Constants constants(const nvreadout::NvParameters& p, nvreadout::Manifold m) {
  const bool ground = m == nvreadout::Manifold::ground;
  return {ground ? p.d_gs : p.d_es, ground ? p.a_gs : p.a_es, p.q, p.gamma_e, p.gamma_n, p.nuclear_spin};
}

inline int row(const nvreadout::NvParameters& p, const nvreadout::SpinStateLabel& s) {
  return oracle::index(p.nuclear_spin, s.m_s, s.m_i);
}

}  // namespace testing_support
