#pragma once

#include "krls/kernel.hpp"
#include "krls/profile.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <random>

namespace krls::testing {

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                                double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = g(rng);
  return m;
}

inline std::size_t uniform(std::size_t lo, std::size_t hi, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// Profile initialized from q random samples and grown `steps` times with
/// batches of m KORMP-coded random samples.
inline Profile random_profile(const Kernel& kernel, Eigen::Index n, Eigen::Index q,
                              std::size_t steps, Eigen::Index m, double lambda,
                              std::mt19937_64& rng, double gamma = 0.1) {
  Profile p = Profile::init(gaussian(n, q, rng), kernel, gamma);
  const std::size_t s = static_cast<std::size_t>(std::max<Eigen::Index>(1, std::min<Eigen::Index>(3, q - 1)));
  for (std::size_t t = 0; t < steps; ++t) {
    const Eigen::MatrixXd x = gaussian(n, m, rng);
    p.grow(x, p.encode_columns(x, s), lambda);
  }
  return p;
}

}  // namespace krls::testing
