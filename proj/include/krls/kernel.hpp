#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>

namespace krls {

enum class KernelKind { linear, polynomial, rbf };

/// Mercer kernel descriptor. Immutable once built; all members are pure.
///
/// polynomial: k(x,y) = (offset + x'y)^degree
/// rbf:        k(x,y) = exp(-gamma * |x - y|^2)
class Kernel {
 public:
  static Kernel linear();
  static Kernel polynomial(int degree = 2, double offset = 1.0);
  static Kernel rbf(double gamma);

  /// Parses "linear", "poly:<degree>:<offset>" or "rbf:<gamma>".
  static Kernel parse(const std::string& spec);

  KernelKind kind() const { return kind_; }
  int degree() const { return degree_; }
  double offset() const { return offset_; }
  double gamma() const { return gamma_; }

  /// Inverse of parse().
  std::string to_string() const;

  double eval(const Eigen::Ref<const Eigen::VectorXd>& x,
              const Eigen::Ref<const Eigen::VectorXd>& y) const;

  /// Entry (i,j) = k(a.col(i), b.col(j)).
  Eigen::MatrixXd cross_gram(const Eigen::Ref<const Eigen::MatrixXd>& a,
                             const Eigen::Ref<const Eigen::MatrixXd>& b) const;

  /// Dimension of the explicit feature space for inputs of dimension n
  /// (polynomial kernels only): C(n + degree, degree).
  std::size_t feature_dim(std::size_t n) const;

  /// Explicit feature map of a polynomial kernel, monomials in graded
  /// lexicographic order and weighted so <phi(x), phi(y)> = k(x, y).
  Eigen::VectorXd explicit_map(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// explicit_map applied column by column.
  Eigen::MatrixXd explicit_map_columns(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  bool operator==(const Kernel&) const = default;

 private:
  Kernel(KernelKind kind, int degree, double offset, double gamma);

  // Kernel value from the precomputed pieces; a single code path for eval and
  // cross_gram keeps identical inputs bit-identical.
  double apply(const double* x, const double* y, std::size_t n) const;

  KernelKind kind_ = KernelKind::linear;
  int degree_ = 1;
  double offset_ = 0.0;
  double gamma_ = 0.0;
};

}  // namespace krls
