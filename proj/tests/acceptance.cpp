// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "krls/classifier.hpp"
#include "krls/commands.hpp"
#include "krls/dataset.hpp"
#include "krls/error.hpp"
#include "krls/oracle.hpp"
#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace krls;
using oracle::relative_difference;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int n, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", n, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Kernel random_kernel(std::mt19937_64& rng) {
  switch (testing::uniform(0, 2, rng)) {
    case 0: return Kernel::linear();
    case 1: return Kernel::polynomial(2, 1.0);
    default: return Kernel::rbf(0.3);
  }
}

double worst_batch_gap(const Profile& p) {
  const oracle::WlsSolution d = oracle::batch_wls(p);
  return std::max({relative_difference(p.inverse_code_gram(), d.inverse_code_gram),
                   relative_difference(p.atom_weights(), d.atom_weights),
                   relative_difference(p.atom_gram(), d.atom_gram)});
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);  // format tag
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream cs(line);
    for (std::string c; std::getline(cs, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

// Up to `want` indices the profile accepts for pruning, scanned in `order`.
std::vector<std::size_t> allowed_prune(const Profile& p, const std::vector<std::size_t>& order,
                                       std::size_t want) {
  std::vector<std::size_t> idx;
  for (std::size_t j : order) {
    if (idx.size() == want) break;
    idx.push_back(j);
    bool ok = p.prune_obstacle(idx).empty();
    if (ok) {
      try {
        Profile(p).prune(idx);
      } catch (const PruneRejected&) {
        ok = false;
      }
    }
    if (!ok) idx.pop_back();
  }
  return idx;
}

void grow_against_batch() {
  std::mt19937_64 rng(101);
  const auto start = Clock::now();
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<Eigen::Index>(testing::uniform(2, 10, rng));
    const auto q = static_cast<Eigen::Index>(testing::uniform(2, 8, rng));
    const Eigen::Index m = std::vector<Eigen::Index>{1, 2, 5}[testing::uniform(0, 2, rng)];
    const double lambda = testing::uniform(0, 1, rng) == 0 ? 1.0 : 0.98;
    const std::size_t steps = testing::uniform(1, 60, rng);
    const Profile p = testing::random_profile(random_kernel(rng), n, q, steps, m, lambda, rng);
    worst = std::max(worst, worst_batch_gap(p));
  }
  const double secs = seconds_since(start);
  report(1, worst <= 1e-7 && secs < 30.0,
         "100 grow sequences, worst relative gap to batch WLS " + fmt(worst) + " in " + fmt(secs) + " s");
}

void prune_against_batch() {
  std::mt19937_64 rng(202);
  const auto start = Clock::now();
  double worst = 0.0;
  bool xi_kept = true;
  int done = 0;
  while (done < 100) {
    const auto n = static_cast<Eigen::Index>(testing::uniform(2, 10, rng));
    const auto q = static_cast<Eigen::Index>(testing::uniform(2, 8, rng));
    const Eigen::Index m = std::vector<Eigen::Index>{1, 2, 5}[testing::uniform(0, 2, rng)];
    const double lambda = testing::uniform(0, 1, rng) == 0 ? 1.0 : 0.98;
    Profile p = testing::random_profile(random_kernel(rng), n, q, testing::uniform(2, 40, rng), m,
                                        lambda, rng);
    std::vector<std::size_t> all(static_cast<std::size_t>(p.size()));
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::shuffle(all.begin(), all.end(), rng);
    const std::vector<std::size_t> idx =
        allowed_prune(p, all, testing::uniform(1, static_cast<std::size_t>(m), rng));
    if (idx.empty()) continue;
    const double xi = p.regularizer();
    p.prune(idx);
    xi_kept = xi_kept && p.regularizer() == xi;
    worst = std::max(worst, worst_batch_gap(p));
    ++done;
  }
  const double secs = seconds_since(start);
  report(2, worst <= 1e-7 && xi_kept && secs < 30.0,
         "100 prunes, worst relative gap to batch WLS " + fmt(worst) +
             (xi_kept ? ", regularizer unchanged" : ", regularizer changed") + " in " + fmt(secs) + " s");
}

void grow_prune_round_trip() {
  std::mt19937_64 rng(303);
  double worst_u = 0.0, worst_psi = 0.0, worst_c = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = static_cast<Eigen::Index>(testing::uniform(2, 8, rng));
    const auto q = static_cast<Eigen::Index>(testing::uniform(2, 8, rng));
    const Eigen::Index m = std::vector<Eigen::Index>{1, 2, 5}[testing::uniform(0, 2, rng)];
    const double lambda = trial % 2 == 0 ? 1.0 : 0.98;
    Profile p = testing::random_profile(random_kernel(rng), n, q, testing::uniform(1, 20, rng), m,
                                        1.0, rng);
    const Profile before = p;
    const Eigen::MatrixXd x = testing::gaussian(n, m, rng);
    p.grow(x, p.encode_columns(x, static_cast<std::size_t>(std::min<Eigen::Index>(3, q - 1))), lambda);
    std::vector<std::size_t> newest(static_cast<std::size_t>(m));
    std::iota(newest.begin(), newest.end(), static_cast<std::size_t>(before.size()));
    p.prune(newest);
    worst_u = std::max(worst_u, relative_difference(p.atom_weights(), before.atom_weights()));
    worst_psi = std::max(worst_psi, relative_difference(p.atom_gram(), before.atom_gram()));
    worst_c = std::max(worst_c, relative_difference(p.inverse_code_gram(),
                                                    before.inverse_code_gram() / lambda));
  }
  report(3, worst_u <= 1e-8 && worst_psi <= 1e-8 && worst_c <= 1e-8,
         "50 grow/prune round trips, worst U " + fmt(worst_u) + ", Psi " + fmt(worst_psi) +
             ", C vs C/lambda " + fmt(worst_c));
}

void kormp_against_explicit() {
  std::mt19937_64 rng(404);
  int support_mismatch = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<Eigen::Index>(testing::uniform(1, 8, rng));
    const auto q = static_cast<Eigen::Index>(testing::uniform(2, 10, rng));
    const std::size_t s = testing::uniform(1, std::min<std::size_t>(5, static_cast<std::size_t>(q)), rng);
    const Profile p = testing::random_profile(Kernel::polynomial(2, 1.0), n, q,
                                              testing::uniform(0, 6, rng), 2, 0.98, rng);
    const oracle::ExplicitDictionary d = oracle::ExplicitDictionary::from_profile(p);
    const Eigen::VectorXd x = testing::gaussian(n, 1, rng);
    const SparseCode a = p.encode(x, s);
    const SparseCode b = oracle::explicit_ormp(d.atoms, p.kernel().explicit_map(x), s);
    if (a.support != b.support) {
      ++support_mismatch;
      continue;
    }
    worst = std::max(worst, (a.coeffs - b.coeffs).norm() / std::max(1.0, b.coeffs.norm()));
  }
  report(4, support_mismatch == 0 && worst <= 1e-9,
         "200 codes, " + std::to_string(support_mismatch) + " support mismatches, worst coefficient gap " +
             fmt(worst));
}

void explicit_identities() {
  std::mt19937_64 rng(505);
  double grow_worst = 0.0, prune_worst = 0.0;
  int grows = 0, prunes = 0;
  while (grows < 100 || prunes < 100) {
    const auto n = static_cast<Eigen::Index>(testing::uniform(1, 6, rng));
    const auto q = static_cast<Eigen::Index>(testing::uniform(2, 8, rng));
    const Eigen::Index m = std::vector<Eigen::Index>{1, 2, 5}[testing::uniform(0, 2, rng)];
    const double lambda = testing::uniform(0, 1, rng) == 0 ? 1.0 : 0.98;
    const Profile p = testing::random_profile(Kernel::polynomial(2, 1.0), n, q,
                                              testing::uniform(2, 12, rng), m, lambda, rng);
    if (grows < 100) {
      const Eigen::MatrixXd x = testing::gaussian(n, m, rng);
      const auto s = static_cast<std::size_t>(std::min<Eigen::Index>(3, q - 1));
      const oracle::GrowIdentities g = oracle::explicit_grow_check(p, x, p.encode_columns(x, s), lambda);
      grow_worst = std::max({grow_worst, g.weights, g.dictionary, g.gram});
      ++grows;
    }
    if (prunes < 100) {
      std::vector<std::size_t> order(static_cast<std::size_t>(p.size()));
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      const std::vector<std::size_t> idx = allowed_prune(p, order, static_cast<std::size_t>(m));
      if (idx.empty()) continue;
      const oracle::PruneIdentities r = oracle::explicit_prune_check(p, idx);
      prune_worst = std::max({prune_worst, r.inverse, r.intermediate, r.projection, r.dictionary, r.gram});
      ++prunes;
    }
  }
  report(5, grow_worst <= 1e-8 && prune_worst <= 1e-8,
         "100 grow and 100 prune steps checked in feature space, worst residual " + fmt(grow_worst) +
             " (grow), " + fmt(prune_worst) + " (prune)");
}

void normalization() {
  std::mt19937_64 rng(606);
  double diag = 0.0, direct = 0.0, products = 0.0, errors = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = static_cast<Eigen::Index>(testing::uniform(2, 8, rng));
    const auto q = static_cast<Eigen::Index>(testing::uniform(3, 8, rng));
    Profile p = testing::random_profile(random_kernel(rng), n, q, testing::uniform(5, 30, rng), 2,
                                        0.98, rng);
    const Eigen::MatrixXd b0 = p.atom_weights().transpose() * p.codes();
    const Eigen::MatrixXd probes = testing::gaussian(n, 20, rng);
    std::vector<double> e0;
    for (Eigen::Index j = 0; j < probes.cols(); ++j) e0.push_back(p.representation_error(probes.col(j), 2));
    p.normalize();
    diag = std::max(diag, (p.atom_gram().diagonal().array() - 1.0).abs().maxCoeff());
    const Eigen::MatrixXd psi = p.atom_weights() * p.kernel_matrix() * p.atom_weights().transpose();
    direct = std::max(direct, (psi.diagonal().array() - 1.0).abs().maxCoeff());
    products = std::max(products, relative_difference(p.atom_weights().transpose() * p.codes(), b0));
    for (Eigen::Index j = 0; j < probes.cols(); ++j) {
      const double sigma2 = p.kernel().eval(probes.col(j), probes.col(j));
      errors = std::max(errors, std::abs(p.representation_error(probes.col(j), 2) -
                                         e0[static_cast<std::size_t>(j)]) / sigma2);
    }
  }
  report(6, diag <= 1e-10 && direct <= 1e-10 && products <= 1e-10 && errors <= 1e-8,
         "20 profiles, |diag Psi - 1| " + fmt(diag) + " (recomputed " + fmt(direct) + "), U'W change " +
             fmt(products) + ", probe error change / sigma2 " + fmt(errors));
}

struct Benchmark {
  fs::path root;
  fs::path data;
  double final_accuracy = -1.0;
};

RunConfig benchmark_config(const Benchmark& b) {
  RunConfig cfg;
  cfg.trainer.atoms = 10;
  cfg.seed = 0;
  cfg.data = b.data;
  return cfg;
}

void online_versus_batch(Benchmark& b) {
  std::ostringstream log;
  RunConfig synth;
  synth.out = b.root / "synth";
  cmd_synth(synth, log);
  b.data = synth.out / "synthetic.csv";

  const auto start = Clock::now();
  const RunConfig cfg = benchmark_config(b);
  TrainerConfig tc = cfg.trainer;
  tc.seed = cfg.seed;
  const Dataset data = ingest_csv(b.data);
  const Kernel kernel = Kernel::parse(cfg.kernel);
  CvOptions options;
  options.folds = cfg.folds;
  const CvResult online = cross_validate(data, tc, kernel, options);
  const KmodCvResult batch = cross_validate_kmod(data, tc, kernel, cfg.folds, 20);
  const double secs = seconds_since(start);

  double running = 0.0, worst_dip = 0.0;
  for (const auto& c : online.mean.checkpoints) {
    running = std::max(running, c.accuracy);
    worst_dip = std::max(worst_dip, running - c.accuracy);
  }
  b.final_accuracy = online.mean.checkpoints.back().accuracy;
  const double gap = batch.mean_accuracy - b.final_accuracy;
  report(7, gap <= 0.02 && worst_dip <= 0.01 && secs < 300.0,
         "online " + fmt(b.final_accuracy) + " vs batch " + fmt(batch.mean_accuracy) + " (gap " +
             fmt(gap) + "), largest dip below running max " + fmt(worst_dip) + ", " + fmt(secs) + " s");
}

void scaling(const Benchmark& b) {
  std::ostringstream log;
  RunConfig cfg = benchmark_config(b);
  cfg.out = b.root / "bench";
  cmd_bench_scaling(cfg, log);
  double g200 = 0.0, g400 = 0.0;
  for (const auto& row : csv_rows(cfg.out / "scaling.csv")) {
    if (row.size() < 2) continue;
    if (row[0] == "200") g200 = std::stod(row[1]);
    if (row[0] == "400") g400 = std::stod(row[1]);
  }
  const double ratio = g200 > 0.0 ? g400 / g200 : 1e300;
  report(8, ratio <= 6.0,
         "median grow " + fmt(g200) + " ms at L=200, " + fmt(g400) + " ms at L=400, ratio " + fmt(ratio));
}

void corruption(const Benchmark& b) {
  std::ostringstream log;
  RunConfig cfg = benchmark_config(b);
  cfg.out = b.root / "corrupt";
  cmd_corrupt_eval(cfg, log);
  std::vector<std::pair<double, double>> curve;
  for (const auto& row : csv_rows(cfg.out / "corruption.csv"))
    if (row.size() == 3 && row[1] == "mean") curve.emplace_back(std::stod(row[0]), std::stod(row[2]));
  bool monotone = !curve.empty();
  for (std::size_t i = 1; i < curve.size(); ++i) monotone = monotone && curve[i].second <= curve[i - 1].second;
  const bool anchored = !curve.empty() && curve.front().first == 0.0 && curve.front().second == b.final_accuracy;
  std::string detail = "mean accuracy";
  for (const auto& [f, a] : curve) detail += " " + fmt(f) + ":" + fmt(a);
  detail += monotone ? ", non-increasing" : ", increases somewhere";
  detail += anchored ? ", fraction 0 equals the clean final accuracy" : ", fraction 0 differs from the clean run";
  report(9, monotone && anchored, detail);
}

void reproducibility(const Benchmark& b) {
  std::ostringstream log;
  RunConfig cfg = benchmark_config(b);
  cfg.out = b.root / "cv_a";
  cmd_cv(cfg, log);
  cfg.out = b.root / "cv_b";
  cmd_cv(cfg, log);
  const std::string a = read_file(b.root / "cv_a" / "cv_metrics.csv");
  const std::string c = read_file(b.root / "cv_b" / "cv_metrics.csv");
  report(10, !a.empty() && a == c,
         "two cv runs with seed 0: cv_metrics.csv " + std::string(a == c ? "identical" : "differs") + " (" +
             std::to_string(a.size()) + " bytes)");
}

template <typename F>
void guarded(int n, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(n, false, std::string("threw: ") + e.what());
  }
}

}  // namespace

int main() {
  guarded(1, grow_against_batch);
  guarded(2, prune_against_batch);
  guarded(3, grow_prune_round_trip);
  guarded(4, kormp_against_explicit);
  guarded(5, explicit_identities);
  guarded(6, normalization);

  Benchmark b;
  b.root = fs::temp_directory_path() / "krls_acceptance";
  fs::remove_all(b.root);
  fs::create_directories(b.root);
  guarded(7, [&] { online_versus_batch(b); });
  guarded(8, [&] { scaling(b); });
  guarded(9, [&] { corruption(b); });
  guarded(10, [&] { reproducibility(b); });
  fs::remove_all(b.root);

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
