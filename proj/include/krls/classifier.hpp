#pragma once

#include "krls/dataset.hpp"
#include "krls/kernel.hpp"
#include "krls/oracle.hpp"
#include "krls/profile.hpp"
#include "krls/trainer.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace krls {

struct ClassProfile {
  std::string label;
  Profile profile;
};

/// One profile per class, all sharing the kernel and trainer configuration.
struct ClassifierModel {
  std::vector<ClassProfile> classes;
  Kernel kernel = Kernel::polynomial();
  TrainerConfig cfg;
};

/// Per-class streams: the class's samples in the given order.
using ClassStreams = std::vector<Eigen::MatrixXd>;

/// Column subset of a matrix.
Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& m, const std::vector<std::size_t>& cols);

/// Model state at one checkpoint, passed to fit's observer.
struct ModelCheckpoint {
  std::size_t batch_index;
  const std::vector<const Profile*>& profiles;
  double grow_ms;   ///< cumulative over all classes
  double prune_ms;  ///< cumulative over all classes
};

struct FitOptions {
  std::function<void(const ModelCheckpoint&)> on_checkpoint;
  WarningHandler on_warning;
};

/// Trains one profile per class. All classes run the same number of
/// mini-batches (enough for cfg.epochs passes over the largest class; smaller
/// classes cycle), in lockstep so checkpoints see every class at the same
/// batch index. Each class needs at least Q samples.
ClassifierModel fit(const ClassStreams& streams, const std::vector<std::string>& labels,
                    const TrainerConfig& cfg, const Kernel& kernel, const FitOptions& options = {},
                    std::vector<TrainerStats>* stats = nullptr);

/// Representation error of each column of x under each profile (classes x M).
Eigen::MatrixXd representation_errors(const std::vector<const Profile*>& profiles,
                                      const Eigen::MatrixXd& x, std::size_t sparsity);

/// Index of the smallest error in each column; ties go to the lowest index.
std::vector<std::size_t> argmin_classes(const Eigen::MatrixXd& errors);

/// Class index with minimum representation error at sparsity s.
std::size_t predict_index(const ClassifierModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                          std::size_t s);
const std::string& predict(const ClassifierModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                           std::size_t s);

/// Copy of x with exactly round(fraction * N) uniformly chosen entries zeroed.
Eigen::VectorXd corrupt_missing(const Eigen::Ref<const Eigen::VectorXd>& x, double fraction,
                                std::mt19937_64& rng);

/// Stratified fold of each sample: every class is shuffled with `seed` and
/// dealt round-robin to the k folds.
std::vector<std::size_t> stratified_folds(const Dataset& data, std::size_t k, std::uint64_t seed);

struct CheckpointAccuracy {
  std::size_t batch_index = 0;
  double accuracy = 0.0;
  double grow_ms = 0.0;
  double prune_ms = 0.0;
};

struct EvalReport {
  /// Fold number, or nullopt for the mean over folds.
  std::optional<std::size_t> fold;
  std::vector<CheckpointAccuracy> checkpoints;
  /// Final-checkpoint confusion counts, true class by predicted class.
  Eigen::MatrixXi confusion;
  double train_ms = 0.0;
  double eval_ms = 0.0;
};

struct CorruptionPoint {
  double fraction = 0.0;
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
};

struct CvOptions {
  std::size_t folds = 5;
  /// Missing-data fractions evaluated against the final dictionaries.
  std::vector<double> corruption;
  WarningHandler on_warning;
};

struct CvResult {
  std::vector<EvalReport> folds;
  EvalReport mean;
  std::vector<CorruptionPoint> corruption;
};

/// Stratified k-fold cross-validation of the online classifier. Each fold
/// trains on the other folds (class streams in shuffled order) and classifies
/// its held-out samples at every checkpoint.
CvResult cross_validate(const Dataset& data, const TrainerConfig& cfg, const Kernel& kernel,
                        const CvOptions& options);

struct KmodCvResult {
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
  std::vector<oracle::KmodHistory> histories;  ///< fold-major, then class
};

/// The same folds scored with batch KMOD dictionaries (Q atoms, sparsity s,
/// regularizer gamma from cfg).
KmodCvResult cross_validate_kmod(const Dataset& data, const TrainerConfig& cfg,
                                 const Kernel& kernel, std::size_t folds, std::size_t iterations);

/// Mean curve: per-checkpoint accuracy averaged over folds (timings too).
EvalReport mean_report(const std::vector<EvalReport>& folds);

nlohmann::json report_to_json(const EvalReport& r);

/// Rows "fold,batch_index,accuracy,grow_ms,prune_ms" for every fold then the
/// mean ("mean" in the fold column). Timings are left empty unless requested.
std::string reports_to_csv(const CvResult& result, bool timings);

}  // namespace krls
