#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace krls {

/// Sparse representation of one signal over a Q-atom dictionary.
struct SparseCode {
  /// Atom indices in the order they were selected.
  std::vector<std::size_t> support;
  /// Coefficients aligned with `support`.
  Eigen::VectorXd coeffs;
  /// Squared residual norm in feature space.
  double sq_error = 0.0;

  /// Expansion to a length-q vector, zero off the support.
  Eigen::VectorXd dense(std::size_t q) const;
};

namespace kormp {

/// Atoms whose squared norm is at most this fraction of the largest one are
/// never selected.
inline constexpr double kDegenerateAtomRatio = 1e-12;
/// A candidate whose component orthogonal to the current support keeps less
/// than this fraction of its squared norm is skipped as linearly dependent.
inline constexpr double kDependentAtomRatio = 1e-10;
/// Scores within this relative distance of the best one count as tied.
inline constexpr double kTieRatio = 1e-8;
/// Selection stops once the residual drops to this fraction of sigma2.
inline constexpr double kExactFitRatio = 1e-12;

/// Kernel order recursive matching pursuit.
///
/// Works only with the dictionary Gram matrix `psi` (D'D), the correlations
/// `h` (D'phi) and the signal energy `sigma2` (phi'phi). Each step picks the
/// atom whose component orthogonal to the already chosen atoms best explains
/// the residual; the basis of the chosen span is kept as coefficient vectors
/// so a step costs O(|support| * Q). Ties, up to kTieRatio, go to the lowest
/// atom index.
///
/// Coefficients on the final support are the least-squares solution
/// psi_SS * w_S = h_S.
SparseCode solve(const Eigen::Ref<const Eigen::MatrixXd>& psi,
                 const Eigen::Ref<const Eigen::VectorXd>& h, double sigma2, std::size_t s);

/// sigma2 - 2 h_S'w_S + w_S' psi_SS w_S for a given code.
double residual_energy(const Eigen::Ref<const Eigen::MatrixXd>& psi,
                       const Eigen::Ref<const Eigen::VectorXd>& h, double sigma2,
                       const SparseCode& code);

}  // namespace kormp
}  // namespace krls
