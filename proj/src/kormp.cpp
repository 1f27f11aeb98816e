#include "krls/kormp.hpp"

#include "krls/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace krls {

Eigen::VectorXd SparseCode::dense(std::size_t q) const {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(q));
  for (std::size_t t = 0; t < support.size(); ++t)
    w(static_cast<Eigen::Index>(support[t])) = coeffs(static_cast<Eigen::Index>(t));
  return w;
}

namespace kormp {

double residual_energy(const Eigen::Ref<const Eigen::MatrixXd>& psi,
                       const Eigen::Ref<const Eigen::VectorXd>& h, double sigma2,
                       const SparseCode& code) {
  double e = sigma2;
  const std::size_t k = code.support.size();
  for (std::size_t a = 0; a < k; ++a) {
    const auto ia = static_cast<Eigen::Index>(code.support[a]);
    const double wa = code.coeffs(static_cast<Eigen::Index>(a));
    e -= 2.0 * h(ia) * wa;
    for (std::size_t b = 0; b < k; ++b)
      e += wa * psi(ia, static_cast<Eigen::Index>(code.support[b])) *
           code.coeffs(static_cast<Eigen::Index>(b));
  }
  return e;
}

SparseCode solve(const Eigen::Ref<const Eigen::MatrixXd>& psi,
                 const Eigen::Ref<const Eigen::VectorXd>& h, double sigma2, std::size_t s) {
  const Eigen::Index q = psi.rows();
  if (psi.cols() != q || h.size() != q)
    throw DimensionMismatch("kormp: psi is " + std::to_string(psi.rows()) + "x" +
                            std::to_string(psi.cols()) + ", h has length " +
                            std::to_string(h.size()));
  if (s < 1 || static_cast<Eigen::Index>(s) > q)
    throw InvalidArgument("kormp: sparsity must be in [1, Q]");
  if (!std::isfinite(sigma2) || !psi.allFinite() || !h.allFinite())
    throw InvalidArgument("kormp: non-finite input");
  if (sigma2 < 0.0) sigma2 = 0.0;

  SparseCode code;
  code.sq_error = sigma2;
  code.coeffs.resize(0);
  if (q == 0) return code;

  const Eigen::VectorXd diag = psi.diagonal();
  const double max_diag = diag.maxCoeff();
  if (!(max_diag > 0.0)) return code;

  std::vector<bool> usable(static_cast<std::size_t>(q));
  for (Eigen::Index j = 0; j < q; ++j)
    usable[static_cast<std::size_t>(j)] = diag(j) > kDegenerateAtomRatio * max_diag;

  // Orthonormal basis of the selected span: basis vector t equals D * coef.col(t).
  Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(q, static_cast<Eigen::Index>(s));
  // proj(t, j) = <basis_t, d_j>
  Eigen::MatrixXd proj = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s), q);
  Eigen::VectorXd z(static_cast<Eigen::Index>(s));  // <basis_t, phi>
  Eigen::VectorXd norm2 = diag;                      // |d_j orthogonalized|^2
  Eigen::VectorXd corr = h;                          // <d_j, residual>
  double err = sigma2;

  for (std::size_t step = 0; step < s; ++step) {
    if (err <= kExactFitRatio * sigma2) break;
    Eigen::VectorXd score = Eigen::VectorXd::Constant(q, -1.0);
    for (Eigen::Index j = 0; j < q; ++j) {
      if (!usable[static_cast<std::size_t>(j)]) continue;
      if (norm2(j) <= kDependentAtomRatio * diag(j)) continue;
      score(j) = corr(j) * corr(j) / norm2(j);
    }
    const double top = score.maxCoeff();
    if (top < 0.0) break;
    Eigen::Index best = 0;
    while (score(best) < top * (1.0 - kTieRatio)) ++best;

    const auto t = static_cast<Eigen::Index>(step);
    const double nrm = std::sqrt(norm2(best));
    Eigen::VectorXd a = Eigen::VectorXd::Zero(q);
    a(best) = 1.0;
    for (Eigen::Index u = 0; u < t; ++u) a -= proj(u, best) * coef.col(u);
    a /= nrm;
    coef.col(t) = a;
    z(t) = corr(best) / nrm;
    err -= z(t) * z(t);

    code.support.push_back(static_cast<std::size_t>(best));
    usable[static_cast<std::size_t>(best)] = false;

    // Only the selected atoms carry weight in a.
    for (Eigen::Index j = 0; j < q; ++j) {
      if (!usable[static_cast<std::size_t>(j)]) continue;
      double c = 0.0;
      for (std::size_t sel : code.support) {
        const auto i = static_cast<Eigen::Index>(sel);
        c += a(i) * psi(i, j);
      }
      proj(t, j) = c;
      norm2(j) -= c * c;
      corr(j) -= c * z(t);
    }
  }

  const auto k = static_cast<Eigen::Index>(code.support.size());
  const Eigen::VectorXd w = coef.leftCols(k) * z.head(k);
  code.coeffs.resize(k);
  for (Eigen::Index t = 0; t < k; ++t)
    code.coeffs(t) = w(static_cast<Eigen::Index>(code.support[static_cast<std::size_t>(t)]));

  // Polish with a direct solve of psi_SS w = h_S; the recursion above already
  // guarantees psi_SS is positive definite.
  if (k > 0) {
    Eigen::MatrixXd psi_ss(k, k);
    Eigen::VectorXd h_s(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      const auto ia = static_cast<Eigen::Index>(code.support[static_cast<std::size_t>(a)]);
      h_s(a) = h(ia);
      for (Eigen::Index b = 0; b < k; ++b)
        psi_ss(a, b) = psi(ia, static_cast<Eigen::Index>(code.support[static_cast<std::size_t>(b)]));
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(psi_ss);
    if (llt.info() == Eigen::Success) {
      const Eigen::VectorXd direct = llt.solve(h_s);
      if (direct.allFinite()) code.coeffs = direct;
    }
  }
  code.sq_error = std::max(0.0, residual_energy(psi, h, sigma2, code));
  return code;
}

}  // namespace kormp
}  // namespace krls
