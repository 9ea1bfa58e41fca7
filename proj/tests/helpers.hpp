#pragma once

#include <random>

#include "ram/numerics.hpp"

namespace ram::test {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline RowVector random_row(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  return random_matrix(1, n, rng, scale);
}

}  // namespace ram::test
