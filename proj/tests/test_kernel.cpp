#include "krls/error.hpp"
#include "krls/kernel.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace krls;

TEST_SUITE("kernel") {
  TEST_CASE("closed forms on a hand-picked pair") {
    Eigen::VectorXd x(3), y(3);
    x << 1.0, -2.0, 0.5;
    y << 0.0, 3.0, 4.0;
    // x'y = -4, |x - y|^2 = 1 + 25 + 12.25
    CHECK(Kernel::linear().eval(x, y) == doctest::Approx(-4.0));
    CHECK(Kernel::polynomial(2, 1.0).eval(x, y) == doctest::Approx(9.0));
    CHECK(Kernel::polynomial(3, 2.0).eval(x, y) == doctest::Approx(-8.0));
    CHECK(Kernel::rbf(0.1).eval(x, y) == doctest::Approx(std::exp(-3.825)));
  }

  TEST_CASE("cross_gram agrees bit for bit with eval") {
    std::mt19937_64 rng(3);
    const Eigen::MatrixXd a = testing::gaussian(5, 4, rng);
    const Eigen::MatrixXd b = testing::gaussian(5, 3, rng);
    for (const Kernel& k : {Kernel::linear(), Kernel::polynomial(2, 1.0), Kernel::rbf(0.3)}) {
      const Eigen::MatrixXd g = k.cross_gram(a, b);
      REQUIRE(g.rows() == 4);
      REQUIRE(g.cols() == 3);
      for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 3; ++j) CHECK(g(i, j) == k.eval(a.col(i), b.col(j)));
    }
  }

  TEST_CASE("explicit feature map reproduces the polynomial kernel") {
    std::mt19937_64 rng(11);
    for (const auto& [degree, offset] : {std::pair{2, 1.0}, std::pair{3, 0.5}, std::pair{1, 2.0}}) {
      const Kernel k = Kernel::polynomial(degree, offset);
      const Eigen::MatrixXd x = testing::gaussian(4, 6, rng);
      const Eigen::MatrixXd phi = k.explicit_map_columns(x);
      CHECK(static_cast<std::size_t>(phi.rows()) == k.feature_dim(4));
      const Eigen::MatrixXd direct = k.cross_gram(x, x);
      CHECK((phi.transpose() * phi - direct).norm() <= 1e-12 * direct.norm());
    }
  }

  TEST_CASE("feature dimension is the binomial count") {
    CHECK(Kernel::polynomial(2, 1.0).feature_dim(3) == 10);
    CHECK(Kernel::polynomial(2, 1.0).feature_dim(8) == 45);
    CHECK(Kernel::polynomial(3, 1.0).feature_dim(2) == 10);
  }

  TEST_CASE("explicit map is refused for kernels without one") {
    const Eigen::VectorXd x = Eigen::VectorXd::Ones(3);
    CHECK_THROWS_AS(Kernel::rbf(1.0).explicit_map(x), UnsupportedKernel);
    CHECK_THROWS_AS(Kernel::linear().feature_dim(3), UnsupportedKernel);
  }

  TEST_CASE("kernel strings round trip") {
    for (const char* s : {"linear", "poly:2:1", "poly:3:0.5", "rbf:0.25"}) {
      const Kernel k = Kernel::parse(s);
      CHECK(Kernel::parse(k.to_string()) == k);
    }
    CHECK(Kernel::parse("poly:2:1") == Kernel::polynomial(2, 1.0));
    for (const char* bad : {"", "poly:0:1", "poly:2:x", "rbf:-1", "rbf", "sigmoid:1"})
      CHECK_THROWS_AS(Kernel::parse(bad), InvalidArgument);
  }

  TEST_CASE("bad operands are rejected") {
    const Kernel k = Kernel::polynomial();
    Eigen::VectorXd x = Eigen::VectorXd::Ones(3);
    const Eigen::VectorXd y = Eigen::VectorXd::Ones(4);
    CHECK_THROWS_AS(k.eval(x, y), DimensionMismatch);
    x(1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(k.eval(x, x), InvalidArgument);
  }
}
