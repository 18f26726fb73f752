#pragma once

// Small fixtures shared by the unit tests.

#include <cstddef>
#include <random>

#include "ltkd/matrix.hpp"
#include "ltkd/rng.hpp"

namespace ltkd::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -3.0,
                            double hi = 3.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = u(rng);
  return m;
}

}  // namespace ltkd::testing
