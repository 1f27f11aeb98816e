#include "krls/oracle.hpp"

#include "krls/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>

namespace krls::oracle {

namespace {

Eigen::MatrixXd sym(const Eigen::MatrixXd& a) { return 0.5 * (a + a.transpose()); }

Eigen::MatrixXd dense_inverse(const Eigen::MatrixXd& a) {
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success) throw Error("batch_wls: factorization failed");
  return sym(ldlt.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols())));
}

void require_polynomial(const Profile& p, const char* what) {
  if (p.kernel().kind() != KernelKind::polynomial)
    throw UnsupportedKernel(std::string(what) + " needs an explicit feature map (polynomial kernel)");
}

}  // namespace

double relative_difference(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

WlsSolution batch_wls(const Eigen::MatrixXd& codes, const Eigen::VectorXd& lam,
                      const Eigen::VectorXd& reg, const Eigen::MatrixXd& kernel_matrix) {
  const Eigen::Index q = codes.rows();
  const Eigen::Index l = codes.cols();
  if (lam.size() != l || kernel_matrix.rows() != l || kernel_matrix.cols() != l || reg.size() != q)
    throw DimensionMismatch("batch_wls: inconsistent dimensions");
  if (!(reg.array() > 0.0).all()) throw InvalidArgument("batch_wls: regularizer must be positive");
  Eigen::MatrixXd a = codes * lam.asDiagonal() * codes.transpose();
  a.diagonal() += reg;
  WlsSolution out;
  out.inverse_code_gram = dense_inverse(sym(a));
  out.atom_weights = out.inverse_code_gram * codes * lam.asDiagonal();
  out.atom_gram = sym(out.atom_weights * kernel_matrix * out.atom_weights.transpose());
  return out;
}

WlsSolution batch_wls(const Eigen::MatrixXd& codes, const Eigen::VectorXd& lam, double xi,
                      const Eigen::MatrixXd& kernel_matrix) {
  if (!(xi > 0.0)) throw InvalidArgument("batch_wls: xi must be positive");
  return batch_wls(codes, lam, Eigen::VectorXd::Constant(codes.rows(), xi), kernel_matrix);
}

WlsSolution batch_wls(const Profile& p) {
  return batch_wls(p.codes(), p.sample_weights(), p.regularizer_diagonal(), p.kernel_matrix());
}

ExplicitDictionary ExplicitDictionary::from_profile(const Profile& p) {
  require_polynomial(p, "ExplicitDictionary");
  ExplicitDictionary d;
  d.mapped = p.kernel().explicit_map_columns(p.samples());
  d.atoms = d.mapped * p.atom_weights().transpose();
  return d;
}

SparseCode explicit_ormp(const Eigen::MatrixXd& dictionary, const Eigen::VectorXd& signal,
                         std::size_t sparsity) {
  const Eigen::Index q = dictionary.cols();
  if (signal.size() != dictionary.rows()) throw DimensionMismatch("explicit_ormp: signal length");
  if (sparsity < 1 || static_cast<Eigen::Index>(sparsity) > q)
    throw InvalidArgument("explicit_ormp: sparsity must be in [1, Q]");

  SparseCode code;
  const double sigma2 = signal.squaredNorm();
  code.sq_error = sigma2;
  code.coeffs.resize(0);
  if (q == 0) return code;
  const Eigen::VectorXd norms2 = dictionary.colwise().squaredNorm().transpose();
  const double max_norm2 = norms2.maxCoeff();
  if (!(max_norm2 > 0.0)) return code;

  std::vector<bool> taken(static_cast<std::size_t>(q), false);
  std::vector<Eigen::VectorXd> basis;
  Eigen::VectorXd residual = signal;

  auto orthogonalize = [&](Eigen::VectorXd v) {
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : basis) v -= b.dot(v) * b;
    return v;
  };

  for (std::size_t step = 0; step < sparsity; ++step) {
    if (residual.squaredNorm() <= kormp::kExactFitRatio * sigma2) break;
    Eigen::VectorXd score = Eigen::VectorXd::Constant(q, -1.0);
    std::vector<Eigen::VectorXd> dirs(static_cast<std::size_t>(q));
    for (Eigen::Index j = 0; j < q; ++j) {
      if (taken[static_cast<std::size_t>(j)]) continue;
      if (!(norms2(j) > kormp::kDegenerateAtomRatio * max_norm2)) continue;
      const Eigen::VectorXd dir = orthogonalize(dictionary.col(j));
      const double n2 = dir.squaredNorm();
      if (n2 <= kormp::kDependentAtomRatio * norms2(j)) continue;
      const double c = dir.dot(residual);
      score(j) = c * c / n2;
      dirs[static_cast<std::size_t>(j)] = dir / std::sqrt(n2);
    }
    const double top = score.maxCoeff();
    if (top < 0.0) break;
    Eigen::Index best = 0;
    while (score(best) < top * (1.0 - kormp::kTieRatio)) ++best;
    Eigen::VectorXd best_dir = std::move(dirs[static_cast<std::size_t>(best)]);
    taken[static_cast<std::size_t>(best)] = true;
    code.support.push_back(static_cast<std::size_t>(best));
    residual -= best_dir.dot(residual) * best_dir;
    basis.push_back(std::move(best_dir));
  }

  const auto k = static_cast<Eigen::Index>(code.support.size());
  if (k == 0) return code;
  Eigen::MatrixXd ds(dictionary.rows(), k);
  for (Eigen::Index t = 0; t < k; ++t)
    ds.col(t) = dictionary.col(static_cast<Eigen::Index>(code.support[static_cast<std::size_t>(t)]));
  code.coeffs = ds.colPivHouseholderQr().solve(signal);
  code.sq_error = (signal - ds * code.coeffs).squaredNorm();
  return code;
}

double total_representation_error(const Eigen::MatrixXd& kernel_matrix,
                                  const Eigen::MatrixXd& atom_weights,
                                  const Eigen::MatrixXd& atom_gram, const Eigen::MatrixXd& codes) {
  // sum_j K_jj - 2 (U K)_j' w_j + w_j' Psi w_j
  const Eigen::MatrixXd h = atom_weights * kernel_matrix;
  return kernel_matrix.trace() - 2.0 * h.cwiseProduct(codes).sum() +
         (atom_gram * codes).cwiseProduct(codes).sum();
}

KmodResult batch_kmod(const Eigen::MatrixXd& samples, const Kernel& kernel,
                      const KmodOptions& options) {
  const Eigen::Index l = samples.cols();
  const auto q = static_cast<Eigen::Index>(options.atoms);
  if (options.iterations < 1) throw InvalidArgument("batch_kmod: iterations must be >= 1");
  if (q < 1 || l < q) throw InvalidArgument("batch_kmod: need at least Q samples");
  if (options.sparsity < 1 || static_cast<Eigen::Index>(options.sparsity) > q)
    throw InvalidArgument("batch_kmod: sparsity must be in [1, Q]");
  if (!(options.gamma > 0.0)) throw InvalidArgument("batch_kmod: gamma must be positive");

  const Eigen::MatrixXd kmat = kernel.cross_gram(samples, samples);
  const Eigen::VectorXd kdiag = kmat.diagonal();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(l));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(options.seed);
  std::shuffle(order.begin(), order.end(), rng);

  // Seed atoms with unit-norm samples, skipping zero-energy ones.
  Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(q, l);
  {
    Eigen::Index filled = 0;
    for (std::size_t i = 0; i < order.size() && filled < q; ++i) {
      const Eigen::Index s = order[i];
      if (!(kdiag(s) > 0.0)) continue;
      weights(filled++, s) = 1.0 / std::sqrt(kdiag(s));
    }
    if (filled < q) throw InvalidArgument("batch_kmod: fewer than Q samples with nonzero energy");
  }
  Eigen::MatrixXd gram = sym(weights * kmat * weights.transpose());

  KmodHistory history;
  Eigen::MatrixXd codes(q, l);
  Eigen::VectorXd errors(l);
  std::optional<Profile> profile;

  for (std::size_t it = 0; it < options.iterations; ++it) {
    const Eigen::MatrixXd h = weights * kmat;
    for (Eigen::Index j = 0; j < l; ++j) {
      const SparseCode c = kormp::solve(gram, h.col(j), kdiag(j), options.sparsity);
      codes.col(j) = c.dense(static_cast<std::size_t>(q));
      errors(j) = c.sq_error;
    }
    history.coding_error.push_back(errors.sum());
    history.objective_before_update.push_back(
        total_representation_error(kmat, weights, gram, codes) + options.gamma * gram.trace());

    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(l);
    WlsSolution sol = batch_wls(codes, ones, options.gamma, kmat);
    history.objective_after_update.push_back(
        total_representation_error(kmat, sol.atom_weights, sol.atom_gram, codes) +
        options.gamma * sol.atom_gram.trace());

    Profile p = Profile::from_parts(kernel, samples, kmat, codes, sol.inverse_code_gram,
                                    sol.atom_weights, sol.atom_gram, ones, options.gamma,
                                    options.gamma, Eigen::VectorXd::Ones(q));
    // Unused atoms collapse to zero; they keep scale 1 and are re-seeded below.
    const Eigen::VectorXd d = p.atom_gram().diagonal();
    const double dmax = std::max(d.maxCoeff(), 0.0);
    Eigen::VectorXd scale(q);
    std::vector<Eigen::Index> dead;
    for (Eigen::Index a = 0; a < q; ++a) {
      const bool alive = d(a) > 1e-14 && d(a) > kormp::kDegenerateAtomRatio * dmax;
      scale(a) = alive ? std::sqrt(d(a)) : 1.0;
      if (!alive) dead.push_back(a);
    }
    p.rescale_atoms(scale);
    weights = p.atom_weights();
    gram = p.atom_gram();

    if (!dead.empty() && it + 1 < options.iterations) {
      std::vector<Eigen::Index> worst(static_cast<std::size_t>(l));
      std::iota(worst.begin(), worst.end(), Eigen::Index{0});
      std::stable_sort(worst.begin(), worst.end(),
                       [&](Eigen::Index a, Eigen::Index b) { return errors(a) > errors(b); });
      std::size_t next = 0;
      for (Eigen::Index a : dead) {
        while (next < worst.size() && !(kdiag(worst[next]) > 0.0)) ++next;
        if (next >= worst.size()) break;
        const Eigen::Index s = worst[next++];
        weights.row(a).setZero();
        weights(a, s) = 1.0 / std::sqrt(kdiag(s));
        ++history.reseeded_atoms;
      }
      gram = sym(weights * kmat * weights.transpose());
    }
    profile = std::move(p);
  }
  return KmodResult{std::move(*profile), std::move(history)};
}

GrowIdentities explicit_grow_check(const Profile& before, const Eigen::MatrixXd& x,
                                   const Eigen::MatrixXd& w, double lambda) {
  require_polynomial(before, "explicit_grow_check");
  Profile after = before;
  after.grow(x, w, lambda);

  const ExplicitDictionary d0 = ExplicitDictionary::from_profile(before);
  const ExplicitDictionary d1 = ExplicitDictionary::from_profile(after);
  const Eigen::MatrixXd phi = before.kernel().explicit_map_columns(x);

  const Eigen::MatrixXd u = before.inverse_code_gram() * w;
  Eigen::MatrixXd a = lambda * Eigen::MatrixXd::Identity(w.cols(), w.cols()) + w.transpose() * u;
  const Eigen::MatrixXd alpha = a.inverse();
  const Eigen::MatrixXd r = phi - d0.atoms * w;

  GrowIdentities out;
  const WlsSolution direct = batch_wls(after);
  out.weights = relative_difference(after.atom_weights(), direct.atom_weights);
  out.dictionary = relative_difference(d1.atoms, d0.atoms + r * alpha * u.transpose());
  out.gram = relative_difference(after.atom_gram(), d1.atoms.transpose() * d1.atoms);
  return out;
}

PruneIdentities explicit_prune_check(const Profile& before, std::span<const std::size_t> indices) {
  require_polynomial(before, "explicit_prune_check");
  Profile after = before;
  after.prune(indices);

  const ExplicitDictionary d0 = ExplicitDictionary::from_profile(before);
  const ExplicitDictionary d1 = ExplicitDictionary::from_profile(after);
  const auto m = static_cast<Eigen::Index>(indices.size());
  const Eigen::Index q = before.atoms();

  Eigen::MatrixXd wm(q, m);
  Eigen::MatrixXd phi_m(d0.mapped.rows(), m);
  Eigen::VectorXd lm(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const auto i = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(a)]);
    wm.col(a) = before.codes().col(i);
    phi_m.col(a) = d0.mapped.col(i);
    lm(a) = before.sample_weights()(i);
  }
  const Eigen::MatrixXd um = before.inverse_code_gram() * wm;
  const Eigen::MatrixXd alpha_inv =
      Eigen::MatrixXd(lm.cwiseInverse().asDiagonal()) - wm.transpose() * um;
  const Eigen::MatrixXd alpha = alpha_inv.inverse();
  Eigen::VectorXd lam_hat = before.sample_weights();
  for (std::size_t i : indices) lam_hat(static_cast<Eigen::Index>(i)) = 0.0;
  const Eigen::MatrixXd vm = lam_hat.asDiagonal() * before.codes().transpose() * um;
  const Eigen::MatrixXd lmd = lm.asDiagonal();

  const Eigen::MatrixXd phi_hat_m = d0.atoms * wm;
  const Eigen::MatrixXd phi_v = d0.mapped * vm;
  const Eigen::MatrixXd r_m = phi_m - phi_hat_m;

  PruneIdentities out;
  const WlsSolution direct = batch_wls(after);
  out.inverse = relative_difference(after.inverse_code_gram(), direct.inverse_code_gram);
  out.intermediate =
      relative_difference(d1.atoms, d0.atoms - (phi_m * lmd - phi_v * alpha) * um.transpose());
  out.projection = relative_difference(phi_v, phi_hat_m - phi_m + phi_m * lmd * alpha_inv);
  out.dictionary = relative_difference(d1.atoms, d0.atoms - r_m * alpha * um.transpose());
  out.gram = relative_difference(after.atom_gram(), d1.atoms.transpose() * d1.atoms);
  return out;
}

}  // namespace krls::oracle
