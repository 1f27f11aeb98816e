#include "krls/error.hpp"
#include "krls/kormp.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <limits>

using namespace krls;

namespace {

// Order recursive matching pursuit by definition: each step refits least
// squares on every candidate support and keeps the one with the smallest
// residual.
std::vector<std::size_t> brute_force_ormp(const Eigen::MatrixXd& d, const Eigen::VectorXd& x,
                                          std::size_t s) {
  std::vector<std::size_t> support;
  for (std::size_t step = 0; step < s; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t pick = 0;
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      if (std::find(support.begin(), support.end(), static_cast<std::size_t>(j)) != support.end())
        continue;
      Eigen::MatrixXd ds(d.rows(), static_cast<Eigen::Index>(support.size() + 1));
      for (std::size_t t = 0; t < support.size(); ++t)
        ds.col(static_cast<Eigen::Index>(t)) = d.col(static_cast<Eigen::Index>(support[t]));
      ds.col(ds.cols() - 1) = d.col(j);
      const Eigen::VectorXd w = ds.householderQr().solve(x);
      const double r = (x - ds * w).squaredNorm();
      if (r < best) {
        best = r;
        pick = static_cast<std::size_t>(j);
      }
    }
    support.push_back(pick);
  }
  return support;
}

}  // namespace

TEST_SUITE("kormp") {
  TEST_CASE("matches brute-force ORMP on explicit vectors") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const auto n = static_cast<Eigen::Index>(testing::uniform(6, 12, rng));
      const auto q = static_cast<Eigen::Index>(testing::uniform(4, 10, rng));
      const std::size_t s = testing::uniform(1, std::min<std::size_t>(4, static_cast<std::size_t>(q) - 1), rng);
      const Eigen::MatrixXd d = testing::gaussian(n, q, rng);
      const Eigen::VectorXd x = testing::gaussian(n, 1, rng);
      const SparseCode code = kormp::solve(d.transpose() * d, d.transpose() * x, x.squaredNorm(), s);
      const std::vector<std::size_t> expected = brute_force_ormp(d, x, s);
      REQUIRE(code.support == expected);

      Eigen::MatrixXd ds(n, static_cast<Eigen::Index>(s));
      for (std::size_t t = 0; t < s; ++t)
        ds.col(static_cast<Eigen::Index>(t)) = d.col(static_cast<Eigen::Index>(expected[t]));
      const Eigen::VectorXd w = ds.householderQr().solve(x);
      CHECK((code.coeffs - w).norm() <= 1e-10 * std::max(1.0, w.norm()));
      CHECK(code.sq_error == doctest::Approx((x - ds * w).squaredNorm()).epsilon(1e-9).scale(x.squaredNorm()));
    }
  }

  TEST_CASE("an exact atom is picked alone with zero error") {
    std::mt19937_64 rng(8);
    const Eigen::MatrixXd d = testing::gaussian(7, 5, rng);
    const Eigen::MatrixXd psi = d.transpose() * d;
    const Eigen::VectorXd x = 2.5 * d.col(3);
    const SparseCode code = kormp::solve(psi, d.transpose() * x, x.squaredNorm(), 3);
    REQUIRE(code.support.size() == 1);
    CHECK(code.support[0] == 3);
    CHECK(code.coeffs(0) == doctest::Approx(2.5));
    CHECK(code.sq_error <= 1e-10 * x.squaredNorm());
  }

  TEST_CASE("zero signal gives an empty code") {
    const Eigen::MatrixXd psi = Eigen::MatrixXd::Identity(4, 4);
    const SparseCode code = kormp::solve(psi, Eigen::VectorXd::Zero(4), 0.0, 2);
    CHECK(code.support.empty());
    CHECK(code.sq_error == 0.0);
    CHECK(code.dense(4).isZero());
  }

  TEST_CASE("ties go to the lowest index") {
    const Eigen::MatrixXd psi = Eigen::MatrixXd::Identity(3, 3);
    Eigen::VectorXd h(3);
    h << 1.0, 1.0, 1.0;
    const SparseCode code = kormp::solve(psi, h, 3.0, 1);
    REQUIRE(code.support.size() == 1);
    CHECK(code.support[0] == 0);
  }

  TEST_CASE("degenerate atoms are never selected") {
    Eigen::MatrixXd psi = Eigen::MatrixXd::Identity(3, 3);
    psi(1, 1) = 0.0;
    Eigen::VectorXd h(3);
    h << 0.1, 5.0, 0.2;
    const SparseCode code = kormp::solve(psi, h, 30.0, 2);
    CHECK(std::find(code.support.begin(), code.support.end(), 1u) == code.support.end());
  }

  TEST_CASE("dependent atoms are skipped") {
    std::mt19937_64 rng(21);
    Eigen::MatrixXd d = testing::gaussian(6, 4, rng);
    d.col(2) = -3.0 * d.col(0);
    const Eigen::VectorXd x = d.col(0) + 0.3 * d.col(1) + 0.1 * testing::gaussian(6, 1, rng);
    const SparseCode code = kormp::solve(d.transpose() * d, d.transpose() * x, x.squaredNorm(), 3);
    const bool both = std::find(code.support.begin(), code.support.end(), 0u) != code.support.end() &&
                      std::find(code.support.begin(), code.support.end(), 2u) != code.support.end();
    CHECK_FALSE(both);
  }

  TEST_CASE("residual_energy agrees with the reported error") {
    std::mt19937_64 rng(2);
    const Eigen::MatrixXd d = testing::gaussian(9, 6, rng);
    const Eigen::VectorXd x = testing::gaussian(9, 1, rng);
    const Eigen::MatrixXd psi = d.transpose() * d;
    const Eigen::VectorXd h = d.transpose() * x;
    const SparseCode code = kormp::solve(psi, h, x.squaredNorm(), 4);
    const double explicit_err = (x - d * code.dense(6)).squaredNorm();
    CHECK(kormp::residual_energy(psi, h, x.squaredNorm(), code) ==
          doctest::Approx(explicit_err).epsilon(1e-10));
    CHECK(code.sq_error == doctest::Approx(explicit_err).epsilon(1e-10));
  }

  TEST_CASE("bad arguments are rejected") {
    const Eigen::MatrixXd psi = Eigen::MatrixXd::Identity(3, 3);
    const Eigen::VectorXd h = Eigen::VectorXd::Ones(3);
    CHECK_THROWS_AS(kormp::solve(psi, h, 1.0, 0), InvalidArgument);
    CHECK_THROWS_AS(kormp::solve(psi, h, 1.0, 4), InvalidArgument);
    CHECK_THROWS_AS(kormp::solve(psi, Eigen::VectorXd::Ones(2), 1.0, 1), DimensionMismatch);
    CHECK_THROWS_AS(kormp::solve(psi, h, std::numeric_limits<double>::infinity(), 1), InvalidArgument);
  }
}
