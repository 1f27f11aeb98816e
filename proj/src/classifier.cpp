#include "krls/classifier.hpp"

#include "krls/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace krls {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

// Each class's members in a seeded random order. The same order decides the
// folds and the training stream.
std::vector<std::vector<std::size_t>> shuffled_members(const Dataset& data, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> members = data.class_members();
  std::mt19937_64 rng(seed);
  for (auto& m : members) std::shuffle(m.begin(), m.end(), rng);
  return members;
}

void check_folds(const Dataset& data, std::size_t k) {
  if (k < 2) throw InvalidArgument("cross-validation: need at least 2 folds");
  const auto members = data.class_members();
  for (std::size_t c = 0; c < members.size(); ++c)
    if (members[c].size() < k)
      throw InvalidArgument("cross-validation: class '" + data.label_names[c] + "' has " +
                            std::to_string(members[c].size()) + " samples, fewer than k = " +
                            std::to_string(k));
}

struct FoldSplit {
  ClassStreams train;
  std::vector<std::size_t> test;
};

FoldSplit split_fold(const Dataset& data, const std::vector<std::vector<std::size_t>>& members,
                     std::size_t k, std::size_t fold) {
  FoldSplit s;
  std::vector<std::size_t> fold_of(data.labels.size());
  for (const auto& m : members)
    for (std::size_t i = 0; i < m.size(); ++i) fold_of[m[i]] = i % k;
  for (const auto& m : members) {
    std::vector<std::size_t> cols;
    for (std::size_t j : m)
      if (fold_of[j] != fold) cols.push_back(j);
    s.train.push_back(gather_columns(data.samples, cols));
  }
  for (std::size_t j = 0; j < fold_of.size(); ++j)
    if (fold_of[j] == fold) s.test.push_back(j);
  return s;
}

double accuracy(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth) {
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

std::vector<const Profile*> profile_views(const ClassifierModel& model) {
  std::vector<const Profile*> out;
  for (const auto& c : model.classes) out.push_back(&c.profile);
  return out;
}

void zero_prefix(Eigen::VectorXd& x, const std::vector<Eigen::Index>& order, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) x(order[i]) = 0.0;
}

std::size_t missing_count(double fraction, Eigen::Index n) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

}  // namespace

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& m, const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) = m.col(static_cast<Eigen::Index>(cols[i]));
  return out;
}

ClassifierModel fit(const ClassStreams& streams, const std::vector<std::string>& labels,
                    const TrainerConfig& cfg, const Kernel& kernel, const FitOptions& options,
                    std::vector<TrainerStats>* stats) {
  cfg.validate();
  if (streams.empty()) throw InvalidArgument("fit: no classes");
  if (labels.size() != streams.size()) throw DimensionMismatch("fit: one label per class stream");

  std::size_t total = 0;
  for (std::size_t c = 0; c < streams.size(); ++c) {
    if (streams[c].cols() < static_cast<Eigen::Index>(cfg.atoms))
      throw InvalidArgument("fit: class '" + labels[c] + "' has " +
                            std::to_string(streams[c].cols()) + " samples, Q = " +
                            std::to_string(cfg.atoms) + " are needed");
    total = std::max(total, total_batches(cfg, static_cast<std::size_t>(streams[c].cols())));
  }

  std::vector<CyclicStream> sources;
  std::vector<OnlineTrainer> trainers;
  sources.reserve(streams.size());
  trainers.reserve(streams.size());
  for (std::size_t c = 0; c < streams.size(); ++c) {
    sources.emplace_back(streams[c]);
    trainers.emplace_back(sources.back().take(cfg.atoms), kernel, cfg);
    if (options.on_warning) {
      const std::string prefix = "class '" + labels[c] + "': ";
      trainers.back().set_warning_handler(
          [prefix, warn = options.on_warning](const std::string& m) { warn(prefix + m); });
    }
  }

  std::vector<const Profile*> views;
  for (const auto& t : trainers) views.push_back(&t.profile());

  const std::vector<std::size_t> marks = checkpoint_batches(total, cfg.checkpoint_count);
  auto next_mark = marks.begin();
  for (std::size_t b = 0; b < total; ++b) {
    const double lambda = forgetting_factor(cfg, b, total);
    for (std::size_t c = 0; c < trainers.size(); ++c)
      trainers[c].step(sources[c].take(cfg.batch_size), lambda);
    if (next_mark != marks.end() && *next_mark == b + 1) {
      if (options.on_checkpoint) {
        double grow_ms = 0.0;
        double prune_ms = 0.0;
        for (const auto& t : trainers) {
          grow_ms += t.stats().grow_ms;
          prune_ms += t.stats().prune_ms;
        }
        options.on_checkpoint(ModelCheckpoint{b + 1, views, grow_ms, prune_ms});
      }
      ++next_mark;
    }
  }

  ClassifierModel model;
  model.kernel = kernel;
  model.cfg = cfg;
  for (std::size_t c = 0; c < trainers.size(); ++c) {
    model.classes.push_back(ClassProfile{labels[c], trainers[c].profile()});
    if (stats) stats->push_back(trainers[c].stats());
  }
  return model;
}

Eigen::MatrixXd representation_errors(const std::vector<const Profile*>& profiles,
                                      const Eigen::MatrixXd& x, std::size_t sparsity) {
  Eigen::MatrixXd err(static_cast<Eigen::Index>(profiles.size()), x.cols());
  for (std::size_t c = 0; c < profiles.size(); ++c) {
    const Profile& p = *profiles[c];
    if (x.rows() != p.input_dim()) throw DimensionMismatch("classify: sample dimension differs");
    const Eigen::MatrixXd k = p.kernel().cross_gram(p.samples(), x);
    const Eigen::MatrixXd h = p.atom_weights() * k;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double sigma2 = p.kernel().eval(x.col(j), x.col(j));
      err(static_cast<Eigen::Index>(c), j) =
          kormp::solve(p.atom_gram(), h.col(j), sigma2, sparsity).sq_error;
    }
  }
  return err;
}

std::vector<std::size_t> argmin_classes(const Eigen::MatrixXd& errors) {
  std::vector<std::size_t> out(static_cast<std::size_t>(errors.cols()), 0);
  for (Eigen::Index j = 0; j < errors.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < errors.rows(); ++c)
      if (errors(c, j) < errors(best, j)) best = c;
    out[static_cast<std::size_t>(j)] = static_cast<std::size_t>(best);
  }
  return out;
}

std::size_t predict_index(const ClassifierModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                          std::size_t s) {
  if (model.classes.empty()) throw InvalidArgument("predict: empty model");
  const Eigen::MatrixXd col = x;
  return argmin_classes(representation_errors(profile_views(model), col, s)).front();
}

const std::string& predict(const ClassifierModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                           std::size_t s) {
  return model.classes[predict_index(model, x, s)].label;
}

Eigen::VectorXd corrupt_missing(const Eigen::Ref<const Eigen::VectorXd>& x, double fraction,
                                std::mt19937_64& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw InvalidArgument("corrupt_missing: fraction must lie in [0, 1]");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  Eigen::VectorXd out = x;
  zero_prefix(out, order, missing_count(fraction, x.size()));
  return out;
}

std::vector<std::size_t> stratified_folds(const Dataset& data, std::size_t k, std::uint64_t seed) {
  check_folds(data, k);
  std::vector<std::size_t> fold_of(data.labels.size());
  for (const auto& m : shuffled_members(data, seed))
    for (std::size_t i = 0; i < m.size(); ++i) fold_of[m[i]] = i % k;
  return fold_of;
}

CvResult cross_validate(const Dataset& data, const TrainerConfig& cfg, const Kernel& kernel,
                        const CvOptions& options) {
  cfg.validate();
  check_folds(data, options.folds);
  for (double f : options.corruption)
    if (!(f >= 0.0 && f <= 1.0)) throw InvalidArgument("cross-validation: corruption fraction outside [0, 1]");
  const auto members = shuffled_members(data, cfg.seed);
  const std::size_t k = options.folds;

  CvResult result;
  for (double f : options.corruption) result.corruption.push_back(CorruptionPoint{f, {}, 0.0});

  for (std::size_t fold = 0; fold < k; ++fold) {
    const FoldSplit split = split_fold(data, members, k, fold);
    const Eigen::MatrixXd test = gather_columns(data.samples, split.test);
    std::vector<std::size_t> truth;
    for (std::size_t j : split.test) truth.push_back(data.labels[j]);

    EvalReport report;
    report.fold = fold;
    double eval_ms = 0.0;
    std::vector<std::size_t> last_pred;
    FitOptions fit_options;
    fit_options.on_warning = options.on_warning;
    fit_options.on_checkpoint = [&](const ModelCheckpoint& cp) {
      const auto t0 = Clock::now();
      last_pred = argmin_classes(representation_errors(cp.profiles, test, cfg.sparsity));
      report.checkpoints.push_back(
          CheckpointAccuracy{cp.batch_index, accuracy(last_pred, truth), cp.grow_ms, cp.prune_ms});
      eval_ms += elapsed_ms(t0);
    };

    const auto t0 = Clock::now();
    const ClassifierModel model = fit(split.train, data.label_names, cfg, kernel, fit_options);
    report.train_ms = elapsed_ms(t0) - eval_ms;
    const std::vector<const Profile*> views = profile_views(model);
    if (report.checkpoints.empty()) {
      const auto t1 = Clock::now();
      last_pred = argmin_classes(representation_errors(views, test, cfg.sparsity));
      report.checkpoints.push_back(CheckpointAccuracy{0, accuracy(last_pred, truth), 0.0, 0.0});
      eval_ms += elapsed_ms(t1);
    }
    report.eval_ms = eval_ms;
    const auto nc = static_cast<Eigen::Index>(data.classes());
    report.confusion = Eigen::MatrixXi::Zero(nc, nc);
    for (std::size_t i = 0; i < truth.size(); ++i)
      ++report.confusion(static_cast<Eigen::Index>(truth[i]), static_cast<Eigen::Index>(last_pred[i]));

    if (!result.corruption.empty()) {
      // One permutation per test sample; larger fractions zero a superset of
      // the entries removed at smaller ones.
      std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                        static_cast<std::uint32_t>(fold), 0x6d697373u};
      std::mt19937_64 rng(seq);
      std::vector<std::vector<Eigen::Index>> orders(split.test.size());
      for (auto& order : orders) {
        order.resize(static_cast<std::size_t>(test.rows()));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::shuffle(order.begin(), order.end(), rng);
      }
      for (CorruptionPoint& point : result.corruption) {
        Eigen::MatrixXd corrupted = test;
        const std::size_t count = missing_count(point.fraction, test.rows());
        for (std::size_t i = 0; i < orders.size(); ++i) {
          Eigen::VectorXd x = corrupted.col(static_cast<Eigen::Index>(i));
          zero_prefix(x, orders[i], count);
          corrupted.col(static_cast<Eigen::Index>(i)) = x;
        }
        point.fold_accuracy.push_back(
            accuracy(argmin_classes(representation_errors(views, corrupted, cfg.sparsity)), truth));
      }
    }
    result.folds.push_back(std::move(report));
  }

  result.mean = mean_report(result.folds);
  for (CorruptionPoint& point : result.corruption) {
    double sum = 0.0;
    for (double a : point.fold_accuracy) sum += a;
    point.mean_accuracy = sum / static_cast<double>(point.fold_accuracy.size());
  }
  return result;
}

EvalReport mean_report(const std::vector<EvalReport>& folds) {
  EvalReport mean;
  if (folds.empty()) return mean;
  const std::size_t n = folds.front().checkpoints.size();
  for (const auto& f : folds)
    if (f.checkpoints.size() != n) throw DimensionMismatch("mean_report: folds have different checkpoint counts");
  const auto k = static_cast<double>(folds.size());
  for (std::size_t i = 0; i < n; ++i) {
    CheckpointAccuracy c;
    c.batch_index = folds.front().checkpoints[i].batch_index;
    for (const auto& f : folds) {
      c.accuracy += f.checkpoints[i].accuracy;
      c.grow_ms += f.checkpoints[i].grow_ms;
      c.prune_ms += f.checkpoints[i].prune_ms;
    }
    c.accuracy /= k;
    c.grow_ms /= k;
    c.prune_ms /= k;
    mean.checkpoints.push_back(c);
  }
  mean.confusion = folds.front().confusion;
  for (std::size_t i = 1; i < folds.size(); ++i) mean.confusion += folds[i].confusion;
  for (const auto& f : folds) {
    mean.train_ms += f.train_ms / k;
    mean.eval_ms += f.eval_ms / k;
  }
  return mean;
}

KmodCvResult cross_validate_kmod(const Dataset& data, const TrainerConfig& cfg,
                                 const Kernel& kernel, std::size_t folds, std::size_t iterations) {
  cfg.validate();
  check_folds(data, folds);
  const auto members = shuffled_members(data, cfg.seed);
  KmodCvResult result;
  double sum = 0.0;
  for (std::size_t fold = 0; fold < folds; ++fold) {
    const FoldSplit split = split_fold(data, members, folds, fold);
    std::vector<Profile> profiles;
    for (std::size_t c = 0; c < split.train.size(); ++c) {
      oracle::KmodOptions o;
      o.atoms = cfg.atoms;
      o.sparsity = cfg.sparsity;
      o.gamma = cfg.gamma;
      o.iterations = iterations;
      o.seed = cfg.seed + 1000003 * fold + c;
      oracle::KmodResult r = oracle::batch_kmod(split.train[c], kernel, o);
      profiles.push_back(std::move(r.profile));
      result.histories.push_back(std::move(r.history));
    }
    std::vector<const Profile*> views;
    for (const auto& p : profiles) views.push_back(&p);
    std::vector<std::size_t> truth;
    for (std::size_t j : split.test) truth.push_back(data.labels[j]);
    const Eigen::MatrixXd test = gather_columns(data.samples, split.test);
    const double acc = accuracy(argmin_classes(representation_errors(views, test, cfg.sparsity)), truth);
    result.fold_accuracy.push_back(acc);
    sum += acc;
  }
  result.mean_accuracy = sum / static_cast<double>(folds);
  return result;
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json doc;
  doc["fold"] = r.fold ? nlohmann::json(*r.fold) : nlohmann::json("mean");
  nlohmann::json cps = nlohmann::json::array();
  for (const auto& c : r.checkpoints)
    cps.push_back({{"batch_index", c.batch_index}, {"accuracy", c.accuracy},
                   {"grow_ms", c.grow_ms}, {"prune_ms", c.prune_ms}});
  doc["checkpoints"] = std::move(cps);
  nlohmann::json conf = nlohmann::json::array();
  for (Eigen::Index i = 0; i < r.confusion.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < r.confusion.cols(); ++j) row.push_back(r.confusion(i, j));
    conf.push_back(std::move(row));
  }
  doc["confusion"] = std::move(conf);
  doc["train_ms"] = r.train_ms;
  doc["eval_ms"] = r.eval_ms;
  return doc;
}

std::string reports_to_csv(const CvResult& result, bool timings) {
  std::string out = "# krls-metrics v1\nfold,batch_index,accuracy,grow_ms,prune_ms\n";
  auto emit = [&](const std::string& fold, const EvalReport& r) {
    for (const auto& c : r.checkpoints) {
      out += fold + ',' + std::to_string(c.batch_index) + ',' + shortest_repr(c.accuracy) + ',';
      if (timings) out += shortest_repr(c.grow_ms) + ',' + shortest_repr(c.prune_ms);
      else out += ',';
      out += '\n';
    }
  };
  for (const auto& f : result.folds) emit(std::to_string(*f.fold), f);
  emit("mean", result.mean);
  return out;
}

}  // namespace krls
