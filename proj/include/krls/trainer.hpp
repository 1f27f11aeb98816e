#pragma once

#include "krls/kernel.hpp"
#include "krls/profile.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace krls {

struct TrainerConfig {
  std::size_t atoms = 30;         ///< Q
  std::size_t max_profile = 200;  ///< L_max
  std::size_t batch_size = 10;    ///< M
  double gamma = 0.1;
  double delta = 0.99;            ///< coherence threshold
  std::size_t sparsity = 5;       ///< s
  double lambda0 = 0.98;
  double ramp_fraction = 0.8;
  std::size_t epochs = 1;
  std::size_t checkpoint_count = 20;
  double normalize_tol = 0.1;
  /// Recompute Psi = U K U' before each normalization check.
  bool refresh_psi = true;
  /// Mini-batches to run; 0 derives the count from the stream length and epochs.
  std::size_t batches = 0;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument describing the first violated constraint.
  void validate() const;
};

/// lambda0 at batch 0, rising linearly to 1 at floor(ramp_fraction * total),
/// then 1.
double forgetting_factor(const TrainerConfig& cfg, std::size_t batch_index,
                         std::size_t total_batches);

/// max_j |k(x, x_j)| / sqrt(k(x, x) K_jj) over the retained samples; samples
/// with K_jj = 0 are ignored. Returns 1 when k(x, x) = 0.
double coherence(const Profile& p, const Eigen::Ref<const Eigen::VectorXd>& x);

/// coherence(p, x) < delta, and false for a zero-energy x.
bool is_informative(const Profile& p, const Eigen::Ref<const Eigen::VectorXd>& x, double delta);

/// Up to `count` samples that can be pruned together: first-half columns in
/// ascending contribution score (ties by index), each accepted only if the
/// accumulated set keeps diag(1/lam_m) - w_m'C w_m regular and leaves no row
/// of W all-zero. When the first half runs short the scan continues over the
/// rest of the profile, excluding the newest `protect_newest` columns.
/// Returns fewer than `count` indices if no more valid candidates exist.
std::vector<std::size_t> select_prune_candidates(const Profile& p, std::size_t count,
                                                 std::size_t protect_newest = 0);

/// Batch counts at which checkpoints fall: floor(c * total / count) for
/// c = 1..count, without duplicates or zeros.
std::vector<std::size_t> checkpoint_batches(std::size_t total_batches, std::size_t count);

/// Cycles through the columns of a sample matrix.
class CyclicStream {
 public:
  explicit CyclicStream(const Eigen::MatrixXd& samples);

  /// The next m columns, wrapping around at the end.
  Eigen::MatrixXd take(std::size_t m);

  std::size_t position() const { return position_; }

 private:
  const Eigen::MatrixXd* samples_;
  std::size_t position_ = 0;
};

/// Mini-batches needed for cfg.epochs passes over n samples after the Q
/// initial ones, or cfg.batches if set.
std::size_t total_batches(const TrainerConfig& cfg, std::size_t n);

struct TrainerStats {
  std::size_t batches = 0;
  std::size_t grows = 0;
  std::size_t rejected_grows = 0;
  std::size_t skipped_batches = 0;   ///< no informative sample
  std::size_t discarded_samples = 0;
  std::size_t prunes = 0;
  std::size_t skipped_prunes = 0;
  std::size_t normalizations = 0;
  double grow_ms = 0.0;
  double prune_ms = 0.0;
};

/// What happened to one mini-batch.
struct StepOutcome {
  std::size_t accepted = 0;
  bool grown = false;
  bool pruned = false;
  bool normalized = false;
};

using WarningHandler = std::function<void(const std::string&)>;

/// Owns one profile and feeds it mini-batches.
class OnlineTrainer {
 public:
  /// Initializes the profile from the Q columns of `init`.
  OnlineTrainer(const Eigen::MatrixXd& init, const Kernel& kernel, const TrainerConfig& cfg);

  /// Gate, code, grow with forgetting factor `lambda`, then prune and
  /// normalize when the profile exceeds L_max. Rejected grows and prunes are
  /// reported through the warning handler and leave the profile valid.
  StepOutcome step(const Eigen::Ref<const Eigen::MatrixXd>& batch, double lambda);

  const Profile& profile() const { return profile_; }
  const TrainerStats& stats() const { return stats_; }
  const TrainerConfig& config() const { return cfg_; }

  void set_warning_handler(WarningHandler handler) { warn_ = std::move(handler); }

 private:
  void warn(const std::string& message) const;
  bool prune_to_budget(std::size_t newest);

  TrainerConfig cfg_;
  Profile profile_;
  TrainerStats stats_;
  WarningHandler warn_;
};

struct CheckpointView {
  std::size_t batch_index;  ///< mini-batches processed so far
  const Profile& profile;
  double grow_ms;           ///< cumulative
  double prune_ms;          ///< cumulative
};

struct TrainerCallbacks {
  std::function<void(const CheckpointView&)> on_checkpoint;
  WarningHandler on_warning;
};

struct TrainResult {
  Profile profile;
  TrainerStats stats;
};

/// Algorithm driver over a sample matrix used as a stream: the first Q columns
/// initialize the profile, then mini-batches of M columns are taken in order,
/// cycling for multiple epochs.
TrainResult train_online(const Eigen::MatrixXd& stream, const TrainerConfig& cfg,
                         const Kernel& kernel, const TrainerCallbacks& callbacks = {});

}  // namespace krls
