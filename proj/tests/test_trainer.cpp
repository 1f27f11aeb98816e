#include "krls/dataset.hpp"
#include "krls/error.hpp"
#include "krls/oracle.hpp"
#include "krls/trainer.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace krls;

namespace {

double brute_force_coherence(const Profile& p, const Eigen::VectorXd& x) {
  const Kernel& k = p.kernel();
  double best = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const Eigen::VectorXd xj = p.samples().col(j);
    best = std::max(best, std::abs(k.eval(x, xj)) / std::sqrt(k.eval(x, x) * k.eval(xj, xj)));
  }
  return best;
}

// Reference selection: ascending score with ties by index, each candidate
// accepted only if pruning the accumulated set is actually allowed.
std::vector<std::size_t> reference_candidates(const Profile& p, std::size_t count) {
  const Eigen::VectorXd scores = p.contribution_scores();
  std::vector<std::size_t> order(static_cast<std::size_t>(p.size()) / 2);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) < scores(static_cast<Eigen::Index>(b));
  });
  std::vector<std::size_t> chosen;
  for (std::size_t j : order) {
    if (chosen.size() == count) break;
    chosen.push_back(j);
    bool ok = p.prune_obstacle(chosen).empty();
    if (ok) {
      try {
        Profile(p).prune(chosen);
      } catch (const PruneRejected&) {
        ok = false;
      }
    }
    if (!ok) chosen.pop_back();
  }
  return chosen;
}

TrainerConfig small_config() {
  TrainerConfig cfg;
  cfg.atoms = 6;
  cfg.sparsity = 2;
  cfg.max_profile = 30;
  cfg.batch_size = 3;
  cfg.checkpoint_count = 5;
  return cfg;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("forgetting factor ramp") {
    TrainerConfig cfg;
    CHECK(forgetting_factor(cfg, 0, 100) == doctest::Approx(0.98));
    CHECK(forgetting_factor(cfg, 40, 100) == doctest::Approx(0.99));
    CHECK(forgetting_factor(cfg, 80, 100) == 1.0);
    CHECK(forgetting_factor(cfg, 99, 100) == 1.0);
    for (std::size_t b = 1; b < 100; ++b)
      CHECK(forgetting_factor(cfg, b, 100) >= forgetting_factor(cfg, b - 1, 100));
  }

  TEST_CASE("coherence gate") {
    std::mt19937_64 rng(1);
    const Profile p = Profile::init(testing::gaussian(4, 5, rng), Kernel::polynomial(2, 1.0), 0.1);
    for (Eigen::Index j = 0; j < 5; ++j) {
      CHECK(coherence(p, p.samples().col(j)) == 1.0);
      CHECK_FALSE(is_informative(p, p.samples().col(j), 1.0));
    }
    CHECK_FALSE(is_informative(Profile::init(Eigen::MatrixXd::Identity(3, 2), Kernel::linear(), 0.1),
                               Eigen::VectorXd::Zero(3), 0.99));
    Eigen::VectorXd e3 = Eigen::VectorXd::Zero(3);
    e3(2) = 1.0;
    const Profile lin = Profile::init(Eigen::MatrixXd::Identity(3, 2), Kernel::linear(), 0.1);
    CHECK(coherence(lin, e3) == 0.0);
    CHECK(is_informative(lin, e3, 0.5));
    for (int t = 0; t < 10; ++t) {
      const Eigen::VectorXd x = testing::gaussian(4, 1, rng);
      CHECK(coherence(p, x) == doctest::Approx(brute_force_coherence(p, x)).epsilon(1e-12));
    }
  }

  TEST_CASE("prune candidates on a freshly initialized profile") {
    // Every row of W = I has a single nonzero, so nothing is removable.
    std::mt19937_64 rng(2);
    const Profile p = Profile::init(testing::gaussian(3, 8, rng), Kernel::linear(), 0.1);
    CHECK(select_prune_candidates(p, 2).empty());
  }

  TEST_CASE("prune candidates follow the reference selection") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      const Profile p = testing::random_profile(Kernel::polynomial(2, 1.0), 4, 6, 12, 2, 0.99, rng);
      for (std::size_t count : {1u, 3u, 6u}) {
        const std::vector<std::size_t> got = select_prune_candidates(p, count, 2);
        const std::vector<std::size_t> ref = reference_candidates(p, count);
        if (ref.size() == count) CHECK(got == ref);
        if (!got.empty()) CHECK_NOTHROW(Profile(p).prune(got));
      }
    }
  }

  TEST_CASE("a sample that is the last user of an atom is skipped") {
    std::mt19937_64 rng(4);
    Profile p = Profile::init(testing::gaussian(3, 4, rng), Kernel::linear(), 0.1);
    // New samples use atoms 1..3 only, so sample 0 stays the sole user of atom 0.
    for (int t = 0; t < 6; ++t) {
      const Eigen::MatrixXd x = testing::gaussian(3, 1, rng);
      Eigen::MatrixXd w = Eigen::MatrixXd::Zero(4, 1);
      w(1 + t % 3, 0) = 1.0;
      p.grow(x, w, 1.0);
    }
    const std::vector<std::size_t> got = select_prune_candidates(p, 3);
    CHECK(std::find(got.begin(), got.end(), 0u) == got.end());
    CHECK(got.size() == 3);
  }

  TEST_CASE("duplicates of the initial samples never grow the profile") {
    std::mt19937_64 rng(5);
    const Eigen::MatrixXd init = testing::gaussian(4, 6, rng);
    Eigen::MatrixXd stream(4, 60);
    for (Eigen::Index j = 0; j < 60; ++j) stream.col(j) = init.col(j % 6);
    const TrainResult r = train_online(stream, small_config(), Kernel::polynomial(2, 1.0));
    CHECK(r.stats.grows == 0);
    CHECK(r.stats.skipped_batches == r.stats.batches);
    const Profile fresh = Profile::init(init, Kernel::polynomial(2, 1.0), 0.1);
    CHECK(r.profile.samples() == fresh.samples());
    CHECK(r.profile.atom_gram() == fresh.atom_gram());
  }

  TEST_CASE("with L_max = Q every grow is followed by a prune") {
    std::mt19937_64 rng(6);
    TrainerConfig cfg = small_config();
    cfg.max_profile = cfg.atoms;
    OnlineTrainer t(testing::gaussian(4, 6, rng), Kernel::polynomial(2, 1.0), cfg);
    for (int b = 0; b < 30; ++b) {
      const StepOutcome s = t.step(testing::gaussian(4, 3, rng), 1.0);
      CHECK(static_cast<std::size_t>(t.profile().size()) <= cfg.atoms + cfg.batch_size);
      if (s.grown) CHECK((s.pruned || t.stats().skipped_prunes > 0));
    }
    CHECK(t.stats().prunes > 0);
  }

  TEST_CASE("profile size limits hold throughout training") {
    std::mt19937_64 rng(7);
    TrainerConfig cfg = small_config();
    OnlineTrainer t(testing::gaussian(5, 6, rng), Kernel::rbf(0.1), cfg);
    for (int b = 0; b < 60; ++b) {
      const StepOutcome s = t.step(testing::gaussian(5, 3, rng), forgetting_factor(cfg, b, 60));
      const auto l = static_cast<std::size_t>(t.profile().size());
      CHECK(l <= cfg.max_profile + cfg.batch_size);
      if (s.pruned) CHECK(l <= cfg.max_profile - cfg.batch_size);
    }
    CHECK(t.stats().prunes > 0);
    CHECK_NOTHROW(t.profile().validate());
  }

  TEST_CASE("checkpoints are evenly spaced batch counts") {
    CHECK(checkpoint_batches(45, 20) ==
          std::vector<std::size_t>{2, 4, 6, 9, 11, 13, 15, 18, 20, 22, 24, 27, 29, 31, 33, 36, 38, 40, 42, 45});
    CHECK(checkpoint_batches(3, 5) == std::vector<std::size_t>{1, 2, 3});
    CHECK(checkpoint_batches(0, 5).empty());
  }

  TEST_CASE("training on a planted dictionary lowers held-out error") {
    PlantedOptions o;
    o.classes = 1;
    o.per_class = 500;
    o.seed = 3;
    const Dataset d = planted_dictionary_dataset(o);
    const Eigen::MatrixXd train = d.samples.leftCols(400);
    const Eigen::MatrixXd held = d.samples.rightCols(100);
    TrainerConfig cfg;
    cfg.atoms = 10;
    cfg.sparsity = 3;
    cfg.max_profile = 100;
    cfg.checkpoint_count = 6;
    std::vector<double> errors;
    TrainerCallbacks cb;
    cb.on_checkpoint = [&](const CheckpointView& v) {
      double e = 0.0;
      for (Eigen::Index j = 0; j < held.cols(); ++j) e += v.profile.representation_error(held.col(j), 3);
      errors.push_back(e / static_cast<double>(held.cols()));
    };
    const TrainResult r = train_online(train, cfg, Kernel::polynomial(2, 1.0), cb);
    REQUIRE(errors.size() == 6);
    CHECK(errors.back() < errors.front());
    CHECK_NOTHROW(r.profile.validate());
    CHECK(r.stats.prunes > 0);
    CHECK(r.stats.normalizations > 0);
  }

  TEST_CASE("training is deterministic") {
    std::mt19937_64 rng(8);
    const Eigen::MatrixXd stream = testing::gaussian(4, 120, rng);
    const TrainResult a = train_online(stream, small_config(), Kernel::polynomial(2, 1.0));
    const TrainResult b = train_online(stream, small_config(), Kernel::polynomial(2, 1.0));
    CHECK(a.profile.atom_gram() == b.profile.atom_gram());
    CHECK(a.profile.samples() == b.profile.samples());
  }

  TEST_CASE("too short a stream and bad configs are rejected") {
    std::mt19937_64 rng(9);
    CHECK_THROWS_AS(train_online(testing::gaussian(4, 5, rng), small_config(), Kernel::linear()),
                    InvalidArgument);
    TrainerConfig cfg = small_config();
    cfg.sparsity = cfg.atoms;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = small_config();
    cfg.max_profile = cfg.atoms - 1;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = small_config();
    cfg.lambda0 = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  }
}
