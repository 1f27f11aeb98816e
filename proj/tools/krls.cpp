// Command-line driver: train, cv, corrupt-eval, bench-scaling, batch-kmod, synth.

#include "krls/commands.hpp"
#include "krls/error.hpp"

#include <CLI11.hpp>

#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> data;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> q;
  std::optional<std::size_t> l_max;
  std::optional<std::size_t> batch_size;
  std::optional<double> gamma;
  std::optional<double> delta;
  std::optional<std::size_t> sparsity;
  std::optional<std::string> kernel;
  std::optional<std::size_t> folds;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> checkpoints;
  std::optional<std::size_t> iterations;
  bool timings = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON config file");
  cmd->add_option("--data", o.data, "input CSV with a 'label' column");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--q", o.q, "atoms per dictionary (Q)");
  cmd->add_option("--l-max", o.l_max, "profile size limit (L_max)");
  cmd->add_option("--batch-size", o.batch_size, "mini-batch size (M)");
  cmd->add_option("--gamma", o.gamma, "regularizer");
  cmd->add_option("--delta", o.delta, "coherence threshold");
  cmd->add_option("--sparsity", o.sparsity, "sparsity level (s)");
  cmd->add_option("--kernel", o.kernel, "linear | poly:<degree>:<offset> | rbf:<gamma>");
  cmd->add_option("--folds", o.folds, "cross-validation folds");
  cmd->add_option("--epochs", o.epochs, "passes over the training data");
  cmd->add_option("--checkpoints", o.checkpoints, "evaluation points per run");
  cmd->add_option("--iterations", o.iterations, "batch KMOD iterations");
  cmd->add_flag("--timings", o.timings, "write measured grow/prune times into metrics CSVs");
}

krls::RunConfig resolve(const Overrides& o) {
  krls::RunConfig cfg;
  if (!o.config.empty()) cfg = krls::load_run_config(o.config, cfg);
  if (o.data) cfg.data = *o.data;
  if (o.out) cfg.out = *o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (o.q) cfg.trainer.atoms = *o.q;
  if (o.l_max) cfg.trainer.max_profile = *o.l_max;
  if (o.batch_size) cfg.trainer.batch_size = *o.batch_size;
  if (o.gamma) cfg.trainer.gamma = *o.gamma;
  if (o.delta) cfg.trainer.delta = *o.delta;
  if (o.sparsity) cfg.trainer.sparsity = *o.sparsity;
  if (o.kernel) cfg.kernel = *o.kernel;
  if (o.folds) cfg.folds = *o.folds;
  if (o.epochs) cfg.trainer.epochs = *o.epochs;
  if (o.checkpoints) cfg.trainer.checkpoint_count = *o.checkpoints;
  if (o.iterations) cfg.kmod_iterations = *o.iterations;
  if (o.timings) cfg.timings = true;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online kernel dictionary learning by recursive least squares"};
  app.require_subcommand(1);

  using Command = std::function<krls::CommandResult(const krls::RunConfig&, std::ostream&)>;
  const std::map<std::string, std::pair<std::string, Command>> commands = {
      {"train", {"train one dictionary per class and save the profiles", krls::cmd_train}},
      {"cv", {"k-fold cross-validated accuracy at each checkpoint", krls::cmd_cv}},
      {"corrupt-eval", {"accuracy against the fraction of missing entries", krls::cmd_corrupt_eval}},
      {"bench-scaling", {"grow/prune wall time against profile size", krls::cmd_bench_scaling}},
      {"batch-kmod", {"cross-validated accuracy of batch kernel MOD", krls::cmd_batch_kmod}},
      {"synth", {"write the planted-dictionary benchmark CSV", krls::cmd_synth}},
  };

  Overrides overrides;
  std::map<CLI::App*, const Command*> dispatch;
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    add_common(sub, overrides);
    dispatch[sub] = &entry.second;
  }

  CLI11_PARSE(app, argc, argv);

  for (const auto& [sub, run] : dispatch) {
    if (!sub->parsed()) continue;
    try {
      (*run)(resolve(overrides), std::cout);
      return 0;
    } catch (const std::exception& e) {
      std::cerr << sub->get_name() << ": error: " << e.what() << '\n';
      return 1;
    }
  }
  return 1;
}
