#pragma once

#include "krls/kernel.hpp"
#include "krls/kormp.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>

namespace krls {

/// Kernel quantities that KORMP needs to code a batch of new samples.
struct CodeInputs {
  Eigen::MatrixXd h;       ///< Q x M, correlations of the atoms with each sample
  Eigen::MatrixXd sigma2;  ///< M x M, kernel matrix of the batch
  Eigen::MatrixXd kvec;    ///< L x M, kernel values against the retained samples
};

/// Relative residuals of the profile's defining identities.
struct ProfileResiduals {
  double consistency = 0.0;  ///< |C (W diag(lam) W' + R) - I|_F / sqrt(Q)
  double weights = 0.0;      ///< |U - C W diag(lam)| relative
  double gram = 0.0;         ///< |Psi - U K U'| relative
  double c_symmetry = 0.0;
  double psi_symmetry = 0.0;
  double k_symmetry = 0.0;
  double kernel = 0.0;       ///< |K - k(X, X)| relative
};

struct ProfileTolerances {
  double consistency = 1e-7;
  double weights = 1e-8;
  double gram = 1e-8;
  double symmetry = 1e-10;
  double kernel = 1e-10;
};

/// Online kernel dictionary state.
///
/// The dictionary lives in feature space as D = Phi(X) * U' and is never
/// formed. Alongside the retained samples X (N x L) the profile keeps
///
///   K   = k(X, X)                         L x L
///   W   sparse codes of the samples       Q x L
///   C   = (W diag(lam) W' + R)^-1         Q x Q
///   U   = C W diag(lam)                   Q x L
///   Psi = U K U' = D'D                    Q x Q
///
/// with R = xi * diag(reg_scale). xi starts at gamma and is multiplied by the
/// forgetting factor of every grow; reg_scale starts at one and absorbs the
/// atom rescaling done by normalize().
///
/// Mutations are transactional: on error the profile is left unchanged.
class Profile {
 public:
  /// L = Q = x0.cols(); W = I, C = U = I / (1 + gamma), all weights 1,
  /// xi = gamma.
  static Profile init(const Eigen::MatrixXd& x0, const Kernel& kernel, double gamma);

  /// Assembles a profile from stored matrices; only shapes are checked here.
  static Profile from_parts(const Kernel& kernel, Eigen::MatrixXd samples,
                            Eigen::MatrixXd kernel_matrix, Eigen::MatrixXd codes,
                            Eigen::MatrixXd inverse_code_gram, Eigen::MatrixXd atom_weights,
                            Eigen::MatrixXd atom_gram, Eigen::VectorXd sample_weights,
                            double regularizer, double base_regularizer,
                            Eigen::VectorXd regularizer_scale);

  Eigen::Index input_dim() const { return samples_.rows(); }
  Eigen::Index size() const { return samples_.cols(); }
  Eigen::Index atoms() const { return codes_.rows(); }

  const Kernel& kernel() const { return kernel_; }
  const Eigen::MatrixXd& samples() const { return samples_; }
  const Eigen::MatrixXd& kernel_matrix() const { return kernel_matrix_; }
  const Eigen::MatrixXd& codes() const { return codes_; }
  const Eigen::MatrixXd& inverse_code_gram() const { return inverse_code_gram_; }
  const Eigen::MatrixXd& atom_weights() const { return atom_weights_; }
  const Eigen::MatrixXd& atom_gram() const { return atom_gram_; }
  const Eigen::VectorXd& sample_weights() const { return sample_weights_; }
  double regularizer() const { return regularizer_; }
  double base_regularizer() const { return base_regularizer_; }
  const Eigen::VectorXd& regularizer_scale() const { return regularizer_scale_; }

  /// Diagonal regularizer R = xi * diag(reg_scale) as a vector.
  Eigen::VectorXd regularizer_diagonal() const { return regularizer_ * regularizer_scale_; }

  CodeInputs code_inputs(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  /// KORMP code of a single sample.
  SparseCode encode(const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t sparsity) const;

  /// Dense codes (Q x M) of every column of x.
  Eigen::MatrixXd encode_columns(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                 std::size_t sparsity) const;

  /// Squared feature-space residual of the KORMP code of x.
  double representation_error(const Eigen::Ref<const Eigen::VectorXd>& x,
                              std::size_t sparsity) const;

  /// Adds the M columns of x with codes w, discounting the past by lambda.
  /// Throws UpdateRejected if the M x M system is singular.
  void grow(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::MatrixXd>& w,
            double lambda);

  /// Removes the samples at `indices` (distinct, any order). Throws
  /// PruneRejected when the removal would make C singular, leave a row of W
  /// all-zero, or shrink the profile below Q samples.
  void prune(std::span<const std::size_t> indices);

  /// Why prune(indices) would be rejected, or an empty string if it is allowed.
  std::string prune_obstacle(std::span<const std::size_t> indices) const;

  /// Rescales atoms to unit norm (diag(Psi) = 1). Throws DegenerateAtom if an
  /// atom has squared norm <= 1e-14.
  void normalize();

  /// Divides atom j by scale(j), updating W, C, U, Psi and the regularizer.
  void rescale_atoms(const Eigen::Ref<const Eigen::VectorXd>& scale);

  /// Recomputes Psi = U K U' from scratch.
  void refresh_gram();

  /// Row norms of B = U'W: each sample's weight in reconstructing the profile.
  Eigen::VectorXd contribution_scores() const;

  ProfileResiduals residuals() const;

  /// Throws krls::Error naming every identity that exceeds its tolerance.
  void validate(const ProfileTolerances& tol = {}) const;

 private:
  Profile() = default;

  Kernel kernel_ = Kernel::linear();
  Eigen::MatrixXd samples_;
  Eigen::MatrixXd kernel_matrix_;
  Eigen::MatrixXd codes_;
  Eigen::MatrixXd inverse_code_gram_;
  Eigen::MatrixXd atom_weights_;
  Eigen::MatrixXd atom_gram_;
  Eigen::VectorXd sample_weights_;
  double regularizer_ = 0.0;
  double base_regularizer_ = 0.0;
  Eigen::VectorXd regularizer_scale_;
};

/// Relative gap below which a small system counts as singular.
inline constexpr double kSingularRatio = 1e-12;
/// Stricter gap for the prune downdate diag(1/lam_m) - w_m'C w_m: beyond it
/// the cancellation costs more accuracy than the WLS identities allow.
inline constexpr double kPruneSingularRatio = 1e-4;

/// Inverse of a small symmetric system, or nothing if its smallest singular
/// value is below `ratio` times `scale` (a magnitude of the terms it was built
/// from) or its condition number exceeds 1 / ratio. 1 x 1 systems are
/// inverted by division.
std::optional<Eigen::MatrixXd> invert_small(const Eigen::MatrixXd& a, double scale,
                                            double ratio = kSingularRatio);

// Snapshot persistence. The document is versioned and stores every matrix
// row-major with explicit dimensions; loading validates all invariants.
inline constexpr int kProfileFormatVersion = 1;

nlohmann::json profile_to_json(const Profile& p);
Profile profile_from_json(const nlohmann::json& doc);
void save_profile(const Profile& p, const std::filesystem::path& path);
Profile load_profile(const std::filesystem::path& path);

}  // namespace krls
