#pragma once

#include <cmath>
#include <random>

#include "ropelab/types.hpp"

namespace ropelab::test {

inline bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

inline VectorXs random_vector(std::mt19937_64& rng, Index n, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  VectorXs v(n);
  for (Index i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

inline MatrixXs random_matrix(std::mt19937_64& rng, Index rows, Index cols, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  MatrixXs m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

}  // namespace ropelab::test
