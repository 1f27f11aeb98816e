#pragma once

// Reference computations used to cross-check the recursive profile updates:
// direct (non-recursive) weighted least squares, dictionaries formed
// explicitly in a polynomial kernel's feature space, signal-domain ORMP and
// the batch kernel MOD training loop.

#include "krls/kernel.hpp"
#include "krls/kormp.hpp"
#include "krls/profile.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace krls::oracle {

struct WlsSolution {
  Eigen::MatrixXd inverse_code_gram;  ///< C
  Eigen::MatrixXd atom_weights;       ///< U
  Eigen::MatrixXd atom_gram;          ///< Psi
};

/// C = (W diag(lam) W' + xi I)^-1, U = C W diag(lam), Psi = U K U'.
WlsSolution batch_wls(const Eigen::MatrixXd& codes, const Eigen::VectorXd& lam, double xi,
                      const Eigen::MatrixXd& kernel_matrix);

/// Same with a diagonal regularizer diag(reg).
WlsSolution batch_wls(const Eigen::MatrixXd& codes, const Eigen::VectorXd& lam,
                      const Eigen::VectorXd& reg, const Eigen::MatrixXd& kernel_matrix);

/// Batch recomputation of (C, U, Psi) from a profile's W, lam, R and K.
WlsSolution batch_wls(const Profile& p);

/// Dictionary and samples mapped into a polynomial kernel's feature space.
struct ExplicitDictionary {
  Eigen::MatrixXd atoms;   ///< D = Phi U', F x Q
  Eigen::MatrixXd mapped;  ///< Phi, F x L

  static ExplicitDictionary from_profile(const Profile& p);
};

/// Signal-domain ORMP on explicit atoms, with the same selection rule,
/// tie-breaking and degeneracy thresholds as kormp::solve.
SparseCode explicit_ormp(const Eigen::MatrixXd& dictionary, const Eigen::VectorXd& signal,
                         std::size_t sparsity);

struct KmodOptions {
  std::size_t atoms = 30;
  std::size_t sparsity = 5;
  double gamma = 0.1;
  std::size_t iterations = 20;
  std::uint64_t seed = 0;
};

struct KmodHistory {
  /// Sum of squared coding residuals after each coding step.
  std::vector<double> coding_error;
  /// Regularized objective |Phi - D W|^2 + gamma |D|^2 with the codes of the
  /// iteration, before and after the dictionary update.
  std::vector<double> objective_before_update;
  std::vector<double> objective_after_update;
  /// Atoms re-seeded because no sample used them.
  std::size_t reseeded_atoms = 0;
};

struct KmodResult {
  Profile profile;
  KmodHistory history;
};

/// Batch kernel MOD: alternate KORMP coding of every sample with the direct
/// WLS dictionary update, atoms rescaled to unit norm after each update. The
/// dictionary starts from `atoms` distinct samples drawn with `seed`.
KmodResult batch_kmod(const Eigen::MatrixXd& samples, const Kernel& kernel,
                      const KmodOptions& options);

/// Sum over columns of |phi(x_j) - D w_j|^2 for D = Phi U'.
double total_representation_error(const Eigen::MatrixXd& kernel_matrix,
                                  const Eigen::MatrixXd& atom_weights,
                                  const Eigen::MatrixXd& atom_gram, const Eigen::MatrixXd& codes);

/// Relative residuals of the feature-space identities behind a grow step.
struct GrowIdentities {
  double weights = 0.0;     ///< new U  vs  C W diag(lam) formed directly
  double dictionary = 0.0;  ///< Phi U' after the step  vs  D + r alpha u'
  double gram = 0.0;        ///< new Psi  vs  D'D formed explicitly
};

/// Relative residuals of the feature-space identities behind a prune step.
struct PruneIdentities {
  double inverse = 0.0;       ///< new C  vs  direct inverse on the survivors
  double intermediate = 0.0;  ///< D - [phi_m lam_m - Phi v_m alpha_m] u_m'  vs  new D
  double projection = 0.0;    ///< Phi v_m  vs  phi_hat_m - phi_m + phi_m lam_m alpha_m^-1
  double dictionary = 0.0;    ///< D - r_m alpha_m u_m'  vs  new D
  double gram = 0.0;          ///< new Psi  vs  D'D formed explicitly
};

/// Applies Profile::grow to a copy of `before` and checks the result in
/// explicit feature space. Polynomial kernels only.
GrowIdentities explicit_grow_check(const Profile& before, const Eigen::MatrixXd& x,
                                   const Eigen::MatrixXd& w, double lambda);

/// Applies Profile::prune to a copy of `before` and checks the result in
/// explicit feature space. Polynomial kernels only.
PruneIdentities explicit_prune_check(const Profile& before, std::span<const std::size_t> indices);

/// |a - b|_F / max(|a|_F, |b|_F), zero when both vanish.
double relative_difference(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace krls::oracle
