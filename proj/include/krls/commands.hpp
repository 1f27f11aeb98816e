#pragma once

#include "krls/trainer.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace krls {

/// Everything a command needs. Defaults follow the reference protocol:
/// Q=30, L_max=200, M=10, gamma=0.1, s=5, lambda ramp 0.98 -> 1 over 80% of
/// the batches, polynomial kernel (2, 1), 5 folds, 20 checkpoints.
struct RunConfig {
  TrainerConfig trainer;
  std::string kernel = "poly:2:1";
  std::size_t folds = 5;
  std::filesystem::path data;
  std::filesystem::path out = "out";
  std::uint64_t seed = 0;
  /// Write measured grow/prune times into metrics CSVs. Off by default so
  /// that repeated runs produce identical files.
  bool timings = false;
  std::vector<double> fractions = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<std::size_t> bench_sizes = {100, 200, 400};
  std::size_t bench_repeats = 31;
  std::size_t kmod_iterations = 20;
  std::size_t synth_per_class = 600;

  /// Throws InvalidArgument on the first inconsistent value.
  void validate() const;
};

/// Overlays the keys of a JSON object onto `cfg`. Unknown keys and values of
/// the wrong type raise InvalidArgument.
void apply_config_json(RunConfig& cfg, const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
nlohmann::json run_config_to_json(const RunConfig& cfg);

/// Files a command wrote, relative to cfg.out.
struct CommandResult {
  std::vector<std::string> outputs;
  nlohmann::json summary;
};

// Each command validates cfg, echoes the resolved configuration to `log`,
// writes its artifacts plus manifest.json under cfg.out and returns what it
// wrote. On failure every file it created is removed before the exception
// propagates.
CommandResult cmd_train(const RunConfig& cfg, std::ostream& log);
CommandResult cmd_cv(const RunConfig& cfg, std::ostream& log);
CommandResult cmd_corrupt_eval(const RunConfig& cfg, std::ostream& log);
CommandResult cmd_bench_scaling(const RunConfig& cfg, std::ostream& log);
CommandResult cmd_batch_kmod(const RunConfig& cfg, std::ostream& log);
/// Writes the planted-dictionary benchmark (3 classes, N=20, 10 atoms per
/// class) to cfg.out/synthetic.csv.
CommandResult cmd_synth(const RunConfig& cfg, std::ostream& log);

struct ScalingPoint {
  std::size_t size = 0;  ///< L
  double grow_median_ms = 0.0;
  double prune_median_ms = 0.0;
};

/// Median wall time of a single-sample grow at profile size L (and of pruning
/// that sample again) for each requested size.
std::vector<ScalingPoint> measure_scaling(const Eigen::MatrixXd& samples, const Kernel& kernel,
                                          const TrainerConfig& cfg,
                                          const std::vector<std::size_t>& sizes,
                                          std::size_t repeats);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace krls
