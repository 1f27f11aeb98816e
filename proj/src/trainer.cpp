#include "krls/trainer.hpp"

#include "krls/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

namespace krls {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

}  // namespace

void TrainerConfig::validate() const {
  if (atoms < 1) throw InvalidArgument("config: Q must be at least 1");
  if (sparsity < 1 || sparsity >= atoms)
    throw InvalidArgument("config: sparsity must satisfy 1 <= s < Q");
  if (max_profile < atoms) throw InvalidArgument("config: L_max must be at least Q");
  if (batch_size < 1) throw InvalidArgument("config: batch size M must be at least 1");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgument("config: gamma must be positive");
  if (!(delta > 0.0 && delta <= 1.0)) throw InvalidArgument("config: delta must lie in (0, 1]");
  if (!(lambda0 > 0.0 && lambda0 <= 1.0)) throw InvalidArgument("config: lambda0 must lie in (0, 1]");
  if (!(ramp_fraction >= 0.0 && ramp_fraction <= 1.0))
    throw InvalidArgument("config: ramp_fraction must lie in [0, 1]");
  if (epochs < 1) throw InvalidArgument("config: epochs must be at least 1");
  if (!(normalize_tol >= 0.0) || !std::isfinite(normalize_tol))
    throw InvalidArgument("config: normalize_tol must be non-negative");
}

double forgetting_factor(const TrainerConfig& cfg, std::size_t batch_index,
                         std::size_t total_batches) {
  const auto ramp_end =
      static_cast<std::size_t>(std::floor(cfg.ramp_fraction * static_cast<double>(total_batches)));
  if (batch_index >= ramp_end) return 1.0;
  return cfg.lambda0 +
         (1.0 - cfg.lambda0) * static_cast<double>(batch_index) / static_cast<double>(ramp_end);
}

double coherence(const Profile& p, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Kernel& kern = p.kernel();
  const double sx = kern.eval(x, x);
  if (!(sx > 0.0)) return 1.0;
  const Eigen::MatrixXd k = kern.cross_gram(p.samples(), x);
  const Eigen::VectorXd kd = p.kernel_matrix().diagonal();
  double best = 0.0;
  for (Eigen::Index j = 0; j < k.rows(); ++j) {
    if (!(kd(j) > 0.0)) continue;
    best = std::max(best, std::abs(k(j, 0)) / std::sqrt(sx * kd(j)));
  }
  return best;
}

bool is_informative(const Profile& p, const Eigen::Ref<const Eigen::VectorXd>& x, double delta) {
  if (!(p.kernel().eval(x, x) > 0.0)) return false;
  return coherence(p, x) < delta;
}

std::vector<std::size_t> select_prune_candidates(const Profile& p, std::size_t count,
                                                 std::size_t protect_newest) {
  const auto l = static_cast<std::size_t>(p.size());
  std::vector<std::size_t> chosen;
  if (count == 0 || l == 0) return chosen;

  const Eigen::VectorXd scores = p.contribution_scores();
  const Eigen::MatrixXd& w = p.codes();
  const Eigen::MatrixXd& c = p.inverse_code_gram();
  const Eigen::VectorXd& lam = p.sample_weights();

  std::vector<std::size_t> alive(static_cast<std::size_t>(w.rows()), 0);
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      if (w(r, j) != 0.0) ++alive[static_cast<std::size_t>(r)];

  auto by_score = [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx(end > begin ? end - begin : 0);
    std::iota(idx.begin(), idx.end(), begin);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return scores(static_cast<Eigen::Index>(a)) < scores(static_cast<Eigen::Index>(b));
    });
    return idx;
  };

  auto try_add = [&](std::size_t j) {
    const auto jj = static_cast<Eigen::Index>(j);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      if (w(r, jj) != 0.0 && alive[static_cast<std::size_t>(r)] <= 1) return false;

    const auto m = static_cast<Eigen::Index>(chosen.size() + 1);
    Eigen::MatrixXd wm(w.rows(), m);
    Eigen::VectorXd inv_lm(m);
    for (Eigen::Index a = 0; a + 1 < m; ++a) {
      wm.col(a) = w.col(static_cast<Eigen::Index>(chosen[static_cast<std::size_t>(a)]));
      inv_lm(a) = 1.0 / lam(static_cast<Eigen::Index>(chosen[static_cast<std::size_t>(a)]));
    }
    wm.col(m - 1) = w.col(jj);
    inv_lm(m - 1) = 1.0 / lam(jj);
    Eigen::MatrixXd gain_inv = -(wm.transpose() * c * wm);
    gain_inv = 0.5 * (gain_inv + gain_inv.transpose()).eval();
    const double scale = inv_lm.norm() + gain_inv.norm();
    gain_inv.diagonal() += inv_lm;
    if (!invert_small(gain_inv, scale, kPruneSingularRatio)) return false;

    for (Eigen::Index r = 0; r < w.rows(); ++r)
      if (w(r, jj) != 0.0) --alive[static_cast<std::size_t>(r)];
    chosen.push_back(j);
    return true;
  };

  const std::size_t half = l / 2;
  for (std::size_t j : by_score(0, half)) {
    if (chosen.size() == count) return chosen;
    try_add(j);
  }
  const std::size_t end = l > protect_newest ? l - protect_newest : 0;
  for (std::size_t j : by_score(half, std::max(half, end))) {
    if (chosen.size() == count) return chosen;
    try_add(j);
  }
  return chosen;
}

std::vector<std::size_t> checkpoint_batches(std::size_t total_batches, std::size_t count) {
  std::vector<std::size_t> out;
  for (std::size_t c = 1; c <= count; ++c) {
    const std::size_t b = c * total_batches / count;
    if (b > 0 && (out.empty() || b > out.back())) out.push_back(b);
  }
  return out;
}

CyclicStream::CyclicStream(const Eigen::MatrixXd& samples) : samples_(&samples) {
  if (samples.cols() == 0) throw InvalidArgument("stream: no samples");
}

Eigen::MatrixXd CyclicStream::take(std::size_t m) {
  const auto n = static_cast<std::size_t>(samples_->cols());
  Eigen::MatrixXd out(samples_->rows(), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    out.col(static_cast<Eigen::Index>(i)) = samples_->col(static_cast<Eigen::Index>(position_ % n));
    ++position_;
  }
  return out;
}

std::size_t total_batches(const TrainerConfig& cfg, std::size_t n) {
  if (cfg.batches > 0) return cfg.batches;
  const std::size_t seen = cfg.epochs * n;
  if (seen <= cfg.atoms) return 0;
  return (seen - cfg.atoms + cfg.batch_size - 1) / cfg.batch_size;
}

OnlineTrainer::OnlineTrainer(const Eigen::MatrixXd& init, const Kernel& kernel,
                             const TrainerConfig& cfg)
    : cfg_(cfg), profile_([&] {
        cfg.validate();
        if (init.cols() != static_cast<Eigen::Index>(cfg.atoms))
          throw InvalidArgument("trainer: need exactly Q = " + std::to_string(cfg.atoms) +
                                " initial samples, got " + std::to_string(init.cols()));
        return Profile::init(init, kernel, cfg.gamma);
      }()) {}

void OnlineTrainer::warn(const std::string& message) const {
  if (warn_) warn_(message);
}

StepOutcome OnlineTrainer::step(const Eigen::Ref<const Eigen::MatrixXd>& batch, double lambda) {
  StepOutcome out;
  ++stats_.batches;
  const Kernel& kern = profile_.kernel();

  // Gate each sample against the profile and the samples already accepted
  // from this batch.
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < batch.cols(); ++j) {
    const auto x = batch.col(j);
    bool ok = is_informative(profile_, x, cfg_.delta);
    if (ok) {
      const double sx = kern.eval(x, x);
      for (Eigen::Index i : keep) {
        const double si = kern.eval(batch.col(i), batch.col(i));
        if (std::abs(kern.eval(batch.col(i), x)) / std::sqrt(sx * si) >= cfg_.delta) {
          ok = false;
          break;
        }
      }
    }
    if (ok)
      keep.push_back(j);
    else
      ++stats_.discarded_samples;
  }
  out.accepted = keep.size();
  if (keep.empty()) {
    ++stats_.skipped_batches;
    return out;
  }

  Eigen::MatrixXd x(batch.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = batch.col(keep[i]);

  const auto t0 = Clock::now();
  try {
    const Eigen::MatrixXd w = profile_.encode_columns(x, cfg_.sparsity);
    profile_.grow(x, w, lambda);
  } catch (const UpdateRejected& e) {
    stats_.grow_ms += elapsed_ms(t0);
    ++stats_.rejected_grows;
    warn(std::string("batch ") + std::to_string(stats_.batches) + " discarded: " + e.what());
    return out;
  }
  stats_.grow_ms += elapsed_ms(t0);
  ++stats_.grows;
  out.grown = true;

  if (static_cast<std::size_t>(profile_.size()) > cfg_.max_profile) {
    out.pruned = prune_to_budget(keep.size());
    if (out.pruned) {
      if (cfg_.refresh_psi) profile_.refresh_gram();
      const double dev = (profile_.atom_gram().diagonal().array() - 1.0).abs().maxCoeff();
      if (dev > cfg_.normalize_tol) {
        try {
          profile_.normalize();
          ++stats_.normalizations;
          out.normalized = true;
        } catch (const DegenerateAtom& e) {
          warn(std::string("normalization skipped: ") + e.what());
        }
      }
    }
  }
  return out;
}

bool OnlineTrainer::prune_to_budget(std::size_t newest) {
  const auto l = static_cast<std::size_t>(profile_.size());
  const std::size_t floor_size = cfg_.max_profile > cfg_.batch_size ? cfg_.max_profile - cfg_.batch_size : 0;
  const std::size_t target = std::max(floor_size, cfg_.atoms);
  if (l <= target) return false;
  const std::size_t count = l - target;

  const auto t0 = Clock::now();
  const std::vector<std::size_t> idx = select_prune_candidates(profile_, count, newest);
  if (idx.size() < count) {
    stats_.prune_ms += elapsed_ms(t0);
    ++stats_.skipped_prunes;
    warn("prune skipped: only " + std::to_string(idx.size()) + " of " + std::to_string(count) +
         " candidates are removable");
    return false;
  }
  try {
    profile_.prune(idx);
  } catch (const PruneRejected& e) {
    stats_.prune_ms += elapsed_ms(t0);
    ++stats_.skipped_prunes;
    warn(std::string("prune skipped: ") + e.what());
    return false;
  }
  stats_.prune_ms += elapsed_ms(t0);
  ++stats_.prunes;
  return true;
}

TrainResult train_online(const Eigen::MatrixXd& stream, const TrainerConfig& cfg,
                         const Kernel& kernel, const TrainerCallbacks& callbacks) {
  cfg.validate();
  if (stream.cols() < static_cast<Eigen::Index>(cfg.atoms))
    throw InvalidArgument("train_online: stream ended after " + std::to_string(stream.cols()) +
                          " samples, Q = " + std::to_string(cfg.atoms) + " are needed");
  CyclicStream source(stream);
  OnlineTrainer trainer(source.take(cfg.atoms), kernel, cfg);
  trainer.set_warning_handler(callbacks.on_warning);

  const std::size_t total = total_batches(cfg, static_cast<std::size_t>(stream.cols()));
  const std::vector<std::size_t> marks = checkpoint_batches(total, cfg.checkpoint_count);
  auto next_mark = marks.begin();
  for (std::size_t b = 0; b < total; ++b) {
    trainer.step(source.take(cfg.batch_size), forgetting_factor(cfg, b, total));
    if (next_mark != marks.end() && *next_mark == b + 1) {
      if (callbacks.on_checkpoint)
        callbacks.on_checkpoint(CheckpointView{b + 1, trainer.profile(), trainer.stats().grow_ms,
                                               trainer.stats().prune_ms});
      ++next_mark;
    }
  }
  return TrainResult{trainer.profile(), trainer.stats()};
}

}  // namespace krls
