#include "krls/commands.hpp"

#include "krls/classifier.hpp"
#include "krls/dataset.hpp"
#include "krls/error.hpp"
#include "krls/oracle.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <ostream>
#include <system_error>

namespace krls {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::size_t as_size(const json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
    return static_cast<std::size_t>(v.get<std::int64_t>());
  throw InvalidArgument("config: '" + key + "' must be a non-negative integer");
}

double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw InvalidArgument("config: '" + key + "' must be a number");
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw InvalidArgument("config: '" + key + "' must be true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw InvalidArgument("config: '" + key + "' must be a string");
  return v.get<std::string>();
}

// Tracks files written by a command so a failure can take them back.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    if (!std::filesystem::exists(dir_, ec)) {
      std::filesystem::create_directories(dir_, ec);
      if (ec) throw Error("cannot create output directory " + dir_.string() + ": " + ec.message());
      created_dir_ = true;
    } else if (!std::filesystem::is_directory(dir_, ec)) {
      throw Error("output path " + dir_.string() + " is not a directory");
    }
  }

  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;

  ~OutputSet() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& name : names_) std::filesystem::remove(dir_ / name, ec);
    if (created_dir_) std::filesystem::remove(dir_, ec);
  }

  void write(const std::string& name, const std::string& text) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw Error("cannot open " + (dir_ / name).string() + " for writing");
    names_.push_back(name);
    out << text;
    if (!out) throw Error("failed writing " + (dir_ / name).string());
  }

  void commit() { committed_ = true; }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> names_;
  bool created_dir_ = false;
  bool committed_ = false;
};

TrainerConfig trainer_config(const RunConfig& cfg) {
  TrainerConfig t = cfg.trainer;
  t.seed = cfg.seed;
  return t;
}

void echo_config(const std::string& command, const RunConfig& cfg, std::ostream& log) {
  log << command << ": resolved config " << run_config_to_json(cfg).dump() << '\n';
  log << command << ": seed " << cfg.seed << '\n';
}

Dataset load_data(const RunConfig& cfg) {
  if (cfg.data.empty()) throw InvalidArgument("no input data (--data)");
  return ingest_csv(cfg.data);
}

void finish(OutputSet& outputs, const std::string& command, const RunConfig& cfg,
            Clock::time_point start, const json& summary, CommandResult& result) {
  json manifest;
  manifest["command"] = command;
  manifest["config"] = run_config_to_json(cfg);
  manifest["seed"] = cfg.seed;
  manifest["versions"] = {{"krls", kVersion},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                        std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                        std::to_string(EIGEN_MINOR_VERSION)},
                          {"compiler", __VERSION__},
                          {"profile_format", kProfileFormatVersion}};
  manifest["summary"] = summary;
  manifest["outputs"] = outputs.names();
  manifest["wall_ms"] = elapsed_ms(start);
  outputs.write("manifest.json", manifest.dump(2) + "\n");
  outputs.commit();
  result.outputs = outputs.names();
  result.summary = summary;
}

std::string safe_name(const std::string& label) {
  std::string out;
  for (char c : label)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

WarningHandler log_warnings(std::ostream& log, const std::string& command) {
  return [&log, command](const std::string& m) { log << command << ": warning: " << m << '\n'; };
}

}  // namespace

void RunConfig::validate() const {
  trainer.validate();
  Kernel::parse(kernel);
  if (folds < 2) throw InvalidArgument("config: folds must be at least 2");
  for (double f : fractions)
    if (!(f >= 0.0 && f <= 1.0)) throw InvalidArgument("config: fractions must lie in [0, 1]");
  for (std::size_t s : bench_sizes)
    if (s < trainer.atoms) throw InvalidArgument("config: bench sizes must be at least Q");
  if (bench_repeats < 1) throw InvalidArgument("config: bench_repeats must be at least 1");
  if (kmod_iterations < 1) throw InvalidArgument("config: kmod_iterations must be at least 1");
  if (synth_per_class < 1) throw InvalidArgument("config: synth_per_class must be at least 1");
}

void apply_config_json(RunConfig& cfg, const json& doc) {
  if (!doc.is_object()) throw InvalidArgument("config: top level must be an object");
  for (const auto& [key, v] : doc.items()) {
    TrainerConfig& t = cfg.trainer;
    if (key == "q") t.atoms = as_size(v, key);
    else if (key == "l_max") t.max_profile = as_size(v, key);
    else if (key == "batch_size") t.batch_size = as_size(v, key);
    else if (key == "gamma") t.gamma = as_double(v, key);
    else if (key == "delta") t.delta = as_double(v, key);
    else if (key == "sparsity") t.sparsity = as_size(v, key);
    else if (key == "lambda0") t.lambda0 = as_double(v, key);
    else if (key == "ramp_fraction") t.ramp_fraction = as_double(v, key);
    else if (key == "epochs") t.epochs = as_size(v, key);
    else if (key == "checkpoints") t.checkpoint_count = as_size(v, key);
    else if (key == "normalize_tol") t.normalize_tol = as_double(v, key);
    else if (key == "refresh_psi") t.refresh_psi = as_bool(v, key);
    else if (key == "batches") t.batches = as_size(v, key);
    else if (key == "kernel") cfg.kernel = as_string(v, key);
    else if (key == "folds") cfg.folds = as_size(v, key);
    else if (key == "data") cfg.data = as_string(v, key);
    else if (key == "out") cfg.out = as_string(v, key);
    else if (key == "seed") cfg.seed = as_size(v, key);
    else if (key == "timings") cfg.timings = as_bool(v, key);
    else if (key == "bench_repeats") cfg.bench_repeats = as_size(v, key);
    else if (key == "kmod_iterations") cfg.kmod_iterations = as_size(v, key);
    else if (key == "synth_per_class") cfg.synth_per_class = as_size(v, key);
    else if (key == "fractions" || key == "bench_sizes") {
      if (!v.is_array()) throw InvalidArgument("config: '" + key + "' must be an array");
      if (key == "fractions") {
        cfg.fractions.clear();
        for (const auto& e : v) cfg.fractions.push_back(as_double(e, key));
      } else {
        cfg.bench_sizes.clear();
        for (const auto& e : v) cfg.bench_sizes.push_back(as_size(e, key));
      }
    } else {
      throw InvalidArgument("config: unknown key '" + key + "'");
    }
  }
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  apply_config_json(base, doc);
  return base;
}

json run_config_to_json(const RunConfig& cfg) {
  const TrainerConfig& t = cfg.trainer;
  return json{{"q", t.atoms},
              {"l_max", t.max_profile},
              {"batch_size", t.batch_size},
              {"gamma", t.gamma},
              {"delta", t.delta},
              {"sparsity", t.sparsity},
              {"lambda0", t.lambda0},
              {"ramp_fraction", t.ramp_fraction},
              {"epochs", t.epochs},
              {"checkpoints", t.checkpoint_count},
              {"normalize_tol", t.normalize_tol},
              {"refresh_psi", t.refresh_psi},
              {"batches", t.batches},
              {"kernel", cfg.kernel},
              {"folds", cfg.folds},
              {"data", cfg.data.string()},
              {"out", cfg.out.string()},
              {"seed", cfg.seed},
              {"timings", cfg.timings},
              {"fractions", cfg.fractions},
              {"bench_sizes", cfg.bench_sizes},
              {"bench_repeats", cfg.bench_repeats},
              {"kmod_iterations", cfg.kmod_iterations},
              {"synth_per_class", cfg.synth_per_class}};
}

CommandResult cmd_train(const RunConfig& cfg, std::ostream& log) {
  const auto start = Clock::now();
  cfg.validate();
  echo_config("train", cfg, log);
  const Dataset data = load_data(cfg);
  const Kernel kernel = Kernel::parse(cfg.kernel);
  const TrainerConfig tc = trainer_config(cfg);

  // Stream each class in a seeded random order.
  std::vector<std::vector<std::size_t>> members = data.class_members();
  std::mt19937_64 rng(cfg.seed);
  for (auto& m : members) std::shuffle(m.begin(), m.end(), rng);
  ClassStreams streams;
  for (const auto& m : members) streams.push_back(gather_columns(data.samples, m));

  std::string csv = "# krls-metrics v1\nclass,batch_index,profile_size,mean_error,grow_ms,prune_ms\n";
  FitOptions options;
  options.on_warning = log_warnings(log, "train");
  options.on_checkpoint = [&](const ModelCheckpoint& cp) {
    for (std::size_t c = 0; c < cp.profiles.size(); ++c) {
      const Eigen::MatrixXd err = representation_errors({cp.profiles[c]}, streams[c], tc.sparsity);
      csv += data.label_names[c] + ',' + std::to_string(cp.batch_index) + ',' +
             std::to_string(cp.profiles[c]->size()) + ',' +
             shortest_repr(err.sum() / static_cast<double>(err.cols())) + ',';
      if (cfg.timings) csv += shortest_repr(cp.grow_ms) + ',' + shortest_repr(cp.prune_ms);
      else csv += ',';
      csv += '\n';
    }
  };
  std::vector<TrainerStats> stats;
  const ClassifierModel model = fit(streams, data.label_names, tc, kernel, options, &stats);

  OutputSet outputs(cfg.out);
  outputs.write("train_metrics.csv", csv);
  json summary = json::object();
  for (std::size_t c = 0; c < model.classes.size(); ++c) {
    const std::string name = "profile_" + safe_name(model.classes[c].label) + ".json";
    outputs.write(name, profile_to_json(model.classes[c].profile).dump() + "\n");
    const TrainerStats& s = stats[c];
    summary[model.classes[c].label] = {{"profile_size", model.classes[c].profile.size()},
                                       {"batches", s.batches},
                                       {"grows", s.grows},
                                       {"rejected_grows", s.rejected_grows},
                                       {"skipped_batches", s.skipped_batches},
                                       {"discarded_samples", s.discarded_samples},
                                       {"prunes", s.prunes},
                                       {"skipped_prunes", s.skipped_prunes},
                                       {"normalizations", s.normalizations},
                                       {"grow_ms", s.grow_ms},
                                       {"prune_ms", s.prune_ms}};
  }
  CommandResult result;
  finish(outputs, "train", cfg, start, summary, result);
  log << "train: wrote " << result.outputs.size() << " files to " << cfg.out.string() << '\n';
  return result;
}

CommandResult cmd_cv(const RunConfig& cfg, std::ostream& log) {
  const auto start = Clock::now();
  cfg.validate();
  echo_config("cv", cfg, log);
  const Dataset data = load_data(cfg);
  CvOptions options;
  options.folds = cfg.folds;
  options.on_warning = log_warnings(log, "cv");
  const CvResult cv = cross_validate(data, trainer_config(cfg), Kernel::parse(cfg.kernel), options);

  OutputSet outputs(cfg.out);
  outputs.write("cv_metrics.csv", reports_to_csv(cv, cfg.timings));
  json reports = json::array();
  for (const auto& f : cv.folds) reports.push_back(report_to_json(f));
  reports.push_back(report_to_json(cv.mean));
  outputs.write("cv_report.json", reports.dump(2) + "\n");
  const double final_acc = cv.mean.checkpoints.back().accuracy;
  CommandResult result;
  finish(outputs, "cv", cfg, start, json{{"final_mean_accuracy", final_acc}}, result);
  log << "cv: final mean accuracy " << final_acc << '\n';
  return result;
}

CommandResult cmd_corrupt_eval(const RunConfig& cfg, std::ostream& log) {
  const auto start = Clock::now();
  cfg.validate();
  if (cfg.fractions.empty()) throw InvalidArgument("corrupt-eval: no fractions configured");
  echo_config("corrupt-eval", cfg, log);
  const Dataset data = load_data(cfg);
  CvOptions options;
  options.folds = cfg.folds;
  options.corruption = cfg.fractions;
  options.on_warning = log_warnings(log, "corrupt-eval");
  const CvResult cv = cross_validate(data, trainer_config(cfg), Kernel::parse(cfg.kernel), options);

  std::string csv = "# krls-metrics v1\nfraction,fold,accuracy\n";
  json curve = json::array();
  for (const auto& p : cv.corruption) {
    for (std::size_t f = 0; f < p.fold_accuracy.size(); ++f)
      csv += shortest_repr(p.fraction) + ',' + std::to_string(f) + ',' + shortest_repr(p.fold_accuracy[f]) + '\n';
    csv += shortest_repr(p.fraction) + ",mean," + shortest_repr(p.mean_accuracy) + '\n';
    curve.push_back({{"fraction", p.fraction}, {"mean_accuracy", p.mean_accuracy}});
  }
  OutputSet outputs(cfg.out);
  outputs.write("corruption.csv", csv);
  CommandResult result;
  finish(outputs, "corrupt-eval", cfg, start,
         json{{"curve", curve}, {"final_mean_accuracy", cv.mean.checkpoints.back().accuracy}}, result);
  for (const auto& p : cv.corruption)
    log << "corrupt-eval: fraction " << p.fraction << " accuracy " << p.mean_accuracy << '\n';
  return result;
}

std::vector<ScalingPoint> measure_scaling(const Eigen::MatrixXd& samples, const Kernel& kernel,
                                          const TrainerConfig& cfg,
                                          const std::vector<std::size_t>& sizes,
                                          std::size_t repeats) {
  cfg.validate();
  std::vector<std::size_t> order = sizes;
  std::sort(order.begin(), order.end());
  if (order.empty()) return {};
  const auto n = static_cast<std::size_t>(samples.cols());
  if (n < cfg.atoms + 1) throw InvalidArgument("bench-scaling: too few samples");

  std::size_t next = 0;
  auto take = [&]() { return samples.col(static_cast<Eigen::Index>(next++ % n)); };
  Eigen::MatrixXd init(samples.rows(), static_cast<Eigen::Index>(cfg.atoms));
  for (Eigen::Index j = 0; j < init.cols(); ++j) init.col(j) = take();

  auto grow_one = [&](Profile& p, double* ms) {
    const Eigen::VectorXd x = take();
    const Eigen::MatrixXd w = p.encode_columns(x, cfg.sparsity);
    const auto t0 = Clock::now();
    p.grow(x, w, 1.0);
    if (ms) *ms = elapsed_ms(t0);
  };
  auto median = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
    return v[v.size() / 2];
  };

  // One profile per size, measured round-robin so that drift in machine
  // speed affects every size alike.
  std::vector<Profile> profiles;
  Profile p = Profile::init(init, kernel, cfg.gamma);
  for (std::size_t size : order) {
    while (static_cast<std::size_t>(p.size()) < size) grow_one(p, nullptr);
    profiles.push_back(p);
  }

  const std::size_t warmup = 3;
  std::vector<std::vector<double>> grow_ms(order.size());
  std::vector<std::vector<double>> prune_ms(order.size());
  for (std::size_t r = 0; r < repeats + warmup; ++r) {
    for (std::size_t i = 0; i < order.size(); ++i) {
      Profile& q = profiles[i];
      double g = 0.0;
      grow_one(q, &g);
      std::vector<std::size_t> idx{static_cast<std::size_t>(q.size()) - 1};
      if (!q.prune_obstacle(idx).empty()) idx = select_prune_candidates(q, 1);
      if (idx.empty()) throw Error("bench-scaling: no removable sample at L = " + std::to_string(order[i]));
      const auto t0 = Clock::now();
      q.prune(idx);
      const double pr = elapsed_ms(t0);
      if (r >= warmup) {
        grow_ms[i].push_back(g);
        prune_ms[i].push_back(pr);
      }
    }
  }
  std::vector<ScalingPoint> points;
  for (std::size_t i = 0; i < order.size(); ++i)
    points.push_back(ScalingPoint{order[i], median(grow_ms[i]), median(prune_ms[i])});
  return points;
}

CommandResult cmd_bench_scaling(const RunConfig& cfg, std::ostream& log) {
  const auto start = Clock::now();
  cfg.validate();
  echo_config("bench-scaling", cfg, log);
  Eigen::MatrixXd samples;
  if (!cfg.data.empty()) {
    samples = ingest_csv(cfg.data).samples;
  } else {
    PlantedOptions o;
    o.seed = cfg.seed;
    samples = planted_dictionary_dataset(o).samples;
  }
  TrainerConfig tc = trainer_config(cfg);
  tc.batch_size = 1;
  const std::vector<ScalingPoint> points =
      measure_scaling(samples, Kernel::parse(cfg.kernel), tc, cfg.bench_sizes, cfg.bench_repeats);

  std::string csv = "# krls-metrics v1\nL,grow_median_ms,prune_median_ms,repeats\n";
  json rows = json::array();
  for (const auto& pt : points) {
    csv += std::to_string(pt.size) + ',' + shortest_repr(pt.grow_median_ms) + ',' +
           shortest_repr(pt.prune_median_ms) + ',' + std::to_string(cfg.bench_repeats) + '\n';
    rows.push_back({{"L", pt.size}, {"grow_median_ms", pt.grow_median_ms},
                    {"prune_median_ms", pt.prune_median_ms}});
    log << "bench-scaling: L " << pt.size << " grow " << pt.grow_median_ms << " ms, prune "
        << pt.prune_median_ms << " ms\n";
  }
  OutputSet outputs(cfg.out);
  outputs.write("scaling.csv", csv);
  CommandResult result;
  finish(outputs, "bench-scaling", cfg, start, json{{"points", rows}}, result);
  return result;
}

CommandResult cmd_batch_kmod(const RunConfig& cfg, std::ostream& log) {
  const auto start = Clock::now();
  cfg.validate();
  echo_config("batch-kmod", cfg, log);
  const Dataset data = load_data(cfg);
  const KmodCvResult r = cross_validate_kmod(data, trainer_config(cfg), Kernel::parse(cfg.kernel),
                                             cfg.folds, cfg.kmod_iterations);
  std::string csv = "# krls-metrics v1\nfold,accuracy\n";
  for (std::size_t f = 0; f < r.fold_accuracy.size(); ++f)
    csv += std::to_string(f) + ',' + shortest_repr(r.fold_accuracy[f]) + '\n';
  csv += "mean," + shortest_repr(r.mean_accuracy) + '\n';

  std::string hist = "# krls-metrics v1\nfold,class,iteration,coding_error,objective_before,objective_after\n";
  const std::size_t classes = data.classes();
  for (std::size_t i = 0; i < r.histories.size(); ++i) {
    const auto& h = r.histories[i];
    for (std::size_t it = 0; it < h.coding_error.size(); ++it)
      hist += std::to_string(i / classes) + ',' + data.label_names[i % classes] + ',' +
              std::to_string(it + 1) + ',' + shortest_repr(h.coding_error[it]) + ',' +
              shortest_repr(h.objective_before_update[it]) + ',' +
              shortest_repr(h.objective_after_update[it]) + '\n';
  }
  OutputSet outputs(cfg.out);
  outputs.write("kmod_metrics.csv", csv);
  outputs.write("kmod_history.csv", hist);
  CommandResult result;
  finish(outputs, "batch-kmod", cfg, start, json{{"mean_accuracy", r.mean_accuracy}}, result);
  log << "batch-kmod: mean accuracy " << r.mean_accuracy << '\n';
  return result;
}

CommandResult cmd_synth(const RunConfig& cfg, std::ostream& log) {
  const auto start = Clock::now();
  cfg.validate();
  echo_config("synth", cfg, log);
  PlantedOptions o;
  o.seed = cfg.seed;
  o.per_class = cfg.synth_per_class;
  const Dataset d = planted_dictionary_dataset(o);
  OutputSet outputs(cfg.out);
  outputs.write("synthetic.csv", format_csv(d));
  CommandResult result;
  finish(outputs, "synth", cfg, start,
         json{{"classes", o.classes}, {"dim", o.dim}, {"per_class", o.per_class}}, result);
  return result;
}

}  // namespace krls
