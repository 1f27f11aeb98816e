#include "krls/profile.hpp"

#include "krls/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace krls {

namespace {

constexpr double kDegenerateNorm = 1e-14;

void symmetrize(Eigen::MatrixXd& a) {
  const Eigen::MatrixXd t = a.transpose();
  a = 0.5 * (a + t);
}

double relative_gap(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

double asymmetry(const Eigen::MatrixXd& a) {
  const double n = a.norm();
  if (n == 0.0) return 0.0;
  return (a - a.transpose()).norm() / n;
}

// Copies the columns (and for square matrices also rows) that survive.
Eigen::MatrixXd keep_columns(const Eigen::MatrixXd& a, const std::vector<Eigen::Index>& keep) {
  Eigen::MatrixXd out(a.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = a.col(keep[j]);
  return out;
}

Eigen::MatrixXd keep_square(const Eigen::MatrixXd& a, const std::vector<Eigen::Index>& keep) {
  const auto n = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) out(i, j) = a(keep[static_cast<std::size_t>(i)], keep[static_cast<std::size_t>(j)]);
  return out;
}

}  // namespace

std::optional<Eigen::MatrixXd> invert_small(const Eigen::MatrixXd& a, double scale, double ratio) {
  if (a.rows() != a.cols() || a.rows() == 0) return std::nullopt;
  if (!a.allFinite()) return std::nullopt;
  const double floor = ratio * std::max(scale, std::numeric_limits<double>::min());
  if (a.rows() == 1) {
    const double d = a(0, 0);
    if (!(std::abs(d) > floor)) return std::nullopt;
    return Eigen::MatrixXd::Constant(1, 1, 1.0 / d);
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const Eigen::VectorXd sv = svd.singularValues();
  if (!(sv(sv.size() - 1) > floor) || sv(0) / sv(sv.size() - 1) > 1.0 / ratio)
    return std::nullopt;
  Eigen::MatrixXd inv = a.partialPivLu().inverse();
  symmetrize(inv);
  return inv;
}

Profile Profile::init(const Eigen::MatrixXd& x0, const Kernel& kernel, double gamma) {
  if (x0.cols() < 1) throw InvalidArgument("profile init: need at least one sample");
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw InvalidArgument("profile init: gamma must be finite and > 0");
  const Eigen::Index q = x0.cols();
  Profile p;
  p.kernel_ = kernel;
  p.samples_ = x0;
  p.kernel_matrix_ = kernel.cross_gram(x0, x0);
  p.codes_ = Eigen::MatrixXd::Identity(q, q);
  // C = (I + gamma I)^-1 keeps the WLS identities exact from the start.
  const double c = 1.0 / (1.0 + gamma);
  p.inverse_code_gram_ = c * Eigen::MatrixXd::Identity(q, q);
  p.atom_weights_ = c * Eigen::MatrixXd::Identity(q, q);
  p.atom_gram_ = (c * c) * p.kernel_matrix_;
  p.sample_weights_ = Eigen::VectorXd::Ones(q);
  p.regularizer_ = gamma;
  p.base_regularizer_ = gamma;
  p.regularizer_scale_ = Eigen::VectorXd::Ones(q);
  return p;
}

Profile Profile::from_parts(const Kernel& kernel, Eigen::MatrixXd samples,
                            Eigen::MatrixXd kernel_matrix, Eigen::MatrixXd codes,
                            Eigen::MatrixXd inverse_code_gram, Eigen::MatrixXd atom_weights,
                            Eigen::MatrixXd atom_gram, Eigen::VectorXd sample_weights,
                            double regularizer, double base_regularizer,
                            Eigen::VectorXd regularizer_scale) {
  const Eigen::Index l = samples.cols();
  const Eigen::Index q = codes.rows();
  auto shape = [](const Eigen::MatrixXd& m, Eigen::Index r, Eigen::Index c, const char* name) {
    if (m.rows() != r || m.cols() != c) {
      std::ostringstream os;
      os << "profile: " << name << " is " << m.rows() << "x" << m.cols() << ", expected " << r
         << "x" << c;
      throw DimensionMismatch(os.str());
    }
  };
  shape(kernel_matrix, l, l, "K");
  shape(codes, q, l, "W");
  shape(inverse_code_gram, q, q, "C");
  shape(atom_weights, q, l, "U");
  shape(atom_gram, q, q, "Psi");
  if (sample_weights.size() != l) throw DimensionMismatch("profile: lam length differs from L");
  if (regularizer_scale.size() != q) throw DimensionMismatch("profile: reg_scale length differs from Q");

  Profile p;
  p.kernel_ = kernel;
  p.samples_ = std::move(samples);
  p.kernel_matrix_ = std::move(kernel_matrix);
  p.codes_ = std::move(codes);
  p.inverse_code_gram_ = std::move(inverse_code_gram);
  p.atom_weights_ = std::move(atom_weights);
  p.atom_gram_ = std::move(atom_gram);
  p.sample_weights_ = std::move(sample_weights);
  p.regularizer_ = regularizer;
  p.base_regularizer_ = base_regularizer;
  p.regularizer_scale_ = std::move(regularizer_scale);
  return p;
}

CodeInputs Profile::code_inputs(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (x.rows() != input_dim())
    throw DimensionMismatch("code_inputs: sample dimension " + std::to_string(x.rows()) +
                            ", profile dimension " + std::to_string(input_dim()));
  CodeInputs in;
  in.kvec = kernel_.cross_gram(samples_, x);
  in.h = atom_weights_ * in.kvec;
  in.sigma2 = kernel_.cross_gram(x, x);
  return in;
}

SparseCode Profile::encode(const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t sparsity) const {
  const CodeInputs in = code_inputs(x);
  return kormp::solve(atom_gram_, in.h.col(0), in.sigma2(0, 0), sparsity);
}

Eigen::MatrixXd Profile::encode_columns(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                        std::size_t sparsity) const {
  const CodeInputs in = code_inputs(x);
  Eigen::MatrixXd w(atoms(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    w.col(j) = kormp::solve(atom_gram_, in.h.col(j), in.sigma2(j, j), sparsity)
                   .dense(static_cast<std::size_t>(atoms()));
  return w;
}

double Profile::representation_error(const Eigen::Ref<const Eigen::VectorXd>& x,
                                     std::size_t sparsity) const {
  return encode(x, sparsity).sq_error;
}

void Profile::grow(const Eigen::Ref<const Eigen::MatrixXd>& x,
                   const Eigen::Ref<const Eigen::MatrixXd>& w, double lambda) {
  const Eigen::Index m = x.cols();
  const Eigen::Index l = size();
  const Eigen::Index q = atoms();
  if (m < 1) throw InvalidArgument("grow: empty batch");
  if (x.rows() != input_dim()) throw DimensionMismatch("grow: sample dimension differs from profile");
  if (w.rows() != q || w.cols() != m) throw DimensionMismatch("grow: codes must be Q x M");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw InvalidArgument("grow: lambda must lie in (0, 1]");
  if (!w.allFinite()) throw InvalidArgument("grow: non-finite codes");

  const Eigen::MatrixXd k = kernel_.cross_gram(samples_, x);   // L x M
  const Eigen::MatrixXd sigma2 = kernel_.cross_gram(x, x);     // M x M
  const Eigen::MatrixXd u = inverse_code_gram_ * w;            // Q x M

  Eigen::MatrixXd gain_inv = w.transpose() * u;
  symmetrize(gain_inv);
  const double scale = lambda + gain_inv.norm();
  gain_inv.diagonal().array() += lambda;
  const auto alpha = invert_small(gain_inv, scale);
  if (!alpha) throw UpdateRejected("grow: lambda*I + w'Cw is numerically singular");

  const Eigen::MatrixXd v = sample_weights_.asDiagonal() * (codes_.transpose() * u);  // L x M
  const Eigen::MatrixXd kv = kernel_matrix_ * v;                                       // L x M
  const Eigen::MatrixXd u_tilde = atom_weights_ * (k - kv);                            // Q x M
  const Eigen::MatrixXd ua = u * (*alpha);                                             // Q x M
  const Eigen::MatrixXd mid =
      v.transpose() * kv - v.transpose() * k - k.transpose() * v + sigma2;  // M x M

  Eigen::MatrixXd psi = atom_gram_ + ua * u_tilde.transpose() + u_tilde * ua.transpose() +
                        ua * mid * ua.transpose();
  symmetrize(psi);
  Eigen::MatrixXd c = (inverse_code_gram_ - ua * u.transpose()) / lambda;
  symmetrize(c);

  Eigen::MatrixXd uw(q, l + m);
  uw.leftCols(l) = atom_weights_ - ua * v.transpose();
  uw.rightCols(m) = ua;

  Eigen::MatrixXd kk(l + m, l + m);
  kk.topLeftCorner(l, l) = kernel_matrix_;
  kk.topRightCorner(l, m) = k;
  kk.bottomLeftCorner(m, l) = k.transpose();
  kk.bottomRightCorner(m, m) = sigma2;

  Eigen::MatrixXd xs(input_dim(), l + m);
  xs.leftCols(l) = samples_;
  xs.rightCols(m) = x;
  Eigen::MatrixXd ws(q, l + m);
  ws.leftCols(l) = codes_;
  ws.rightCols(m) = w;
  Eigen::VectorXd lam(l + m);
  lam.head(l) = lambda * sample_weights_;
  lam.tail(m).setOnes();

  samples_ = std::move(xs);
  kernel_matrix_ = std::move(kk);
  codes_ = std::move(ws);
  inverse_code_gram_ = std::move(c);
  atom_weights_ = std::move(uw);
  atom_gram_ = std::move(psi);
  sample_weights_ = std::move(lam);
  regularizer_ *= lambda;
}

std::string Profile::prune_obstacle(std::span<const std::size_t> indices) const {
  const auto l = static_cast<std::size_t>(size());
  if (indices.empty()) return "no samples selected";
  std::vector<bool> drop(l, false);
  for (std::size_t i : indices) {
    if (i >= l) return "index " + std::to_string(i) + " out of range";
    if (drop[i]) return "duplicate index " + std::to_string(i);
    drop[i] = true;
  }
  if (l - indices.size() < static_cast<std::size_t>(atoms()))
    return "profile would shrink below Q samples";
  for (Eigen::Index r = 0; r < atoms(); ++r) {
    bool alive = false;
    for (std::size_t j = 0; j < l && !alive; ++j)
      alive = !drop[j] && codes_(r, static_cast<Eigen::Index>(j)) != 0.0;
    if (!alive) return "row " + std::to_string(r) + " of W would become all-zero";
  }
  return {};
}

void Profile::prune(std::span<const std::size_t> indices) {
  if (const std::string why = prune_obstacle(indices); !why.empty())
    throw PruneRejected("prune: " + why);

  const Eigen::Index l = size();
  const Eigen::Index q = atoms();
  const auto m = static_cast<Eigen::Index>(indices.size());

  Eigen::MatrixXd wm(q, m);
  Eigen::VectorXd lm(m);
  Eigen::MatrixXd km(l, m);
  Eigen::MatrixXd sigma_m(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const auto ia = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(a)]);
    wm.col(a) = codes_.col(ia);
    lm(a) = sample_weights_(ia);
    km.col(a) = kernel_matrix_.col(ia);
    for (Eigen::Index b = 0; b < m; ++b)
      sigma_m(a, b) = kernel_matrix_(ia, static_cast<Eigen::Index>(indices[static_cast<std::size_t>(b)]));
  }
  const Eigen::MatrixXd um = inverse_code_gram_ * wm;  // Q x M

  Eigen::MatrixXd gain_inv = -(wm.transpose() * um);
  symmetrize(gain_inv);
  const Eigen::VectorXd inv_lm = lm.cwiseInverse();
  const double scale = inv_lm.norm() + gain_inv.norm();
  gain_inv.diagonal() += inv_lm;
  const auto alpha = invert_small(gain_inv, scale, kPruneSingularRatio);
  if (!alpha) throw PruneRejected("prune: diag(1/lam_m) - w_m'C w_m is numerically singular");

  Eigen::VectorXd lam_hat = sample_weights_;
  for (std::size_t i : indices) lam_hat(static_cast<Eigen::Index>(i)) = 0.0;
  const Eigen::MatrixXd vm = lam_hat.asDiagonal() * (codes_.transpose() * um);  // L x M
  const Eigen::MatrixXd kv = kernel_matrix_ * vm;                                // L x M
  const auto lmd = lm.asDiagonal();
  const Eigen::MatrixXd u_hat = atom_weights_ * (km * lmd - kv * (*alpha));      // Q x M
  const Eigen::MatrixXd cross = lmd * (km.transpose() * vm) * (*alpha);           // M x M
  const Eigen::MatrixXd mid = lmd * sigma_m * lmd - cross - cross.transpose() +
                              (*alpha) * (vm.transpose() * kv) * (*alpha);

  Eigen::MatrixXd psi =
      atom_gram_ - (um * u_hat.transpose() + u_hat * um.transpose()) + um * mid * um.transpose();
  symmetrize(psi);
  const Eigen::MatrixXd uma = um * (*alpha);
  Eigen::MatrixXd c = inverse_code_gram_ + uma * um.transpose();
  symmetrize(c);
  const Eigen::MatrixXd uw = atom_weights_ + uma * vm.transpose();

  std::vector<bool> drop(static_cast<std::size_t>(l), false);
  for (std::size_t i : indices) drop[i] = true;
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<std::size_t>(l - m));
  for (Eigen::Index j = 0; j < l; ++j)
    if (!drop[static_cast<std::size_t>(j)]) keep.push_back(j);

  Eigen::VectorXd lam(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) lam(static_cast<Eigen::Index>(j)) = sample_weights_(keep[j]);

  samples_ = keep_columns(samples_, keep);
  codes_ = keep_columns(codes_, keep);
  atom_weights_ = keep_columns(uw, keep);
  kernel_matrix_ = keep_square(kernel_matrix_, keep);
  sample_weights_ = std::move(lam);
  inverse_code_gram_ = std::move(c);
  atom_gram_ = std::move(psi);
}

void Profile::normalize() {
  const Eigen::VectorXd d = atom_gram_.diagonal();
  for (Eigen::Index j = 0; j < d.size(); ++j)
    if (!(d(j) > kDegenerateNorm))
      throw DegenerateAtom("normalize: atom " + std::to_string(j) + " has squared norm " +
                           std::to_string(d(j)));
  rescale_atoms(d.cwiseSqrt());
  atom_gram_.diagonal().setOnes();
}

void Profile::rescale_atoms(const Eigen::Ref<const Eigen::VectorXd>& scale) {
  if (scale.size() != atoms()) throw DimensionMismatch("rescale_atoms: need one scale per atom");
  if (!(scale.array() > 0.0).all() || !scale.allFinite())
    throw InvalidArgument("rescale_atoms: scales must be finite and positive");
  const Eigen::VectorXd inv = scale.cwiseInverse();
  atom_gram_ = inv.asDiagonal() * atom_gram_ * inv.asDiagonal();
  inverse_code_gram_ = inv.asDiagonal() * inverse_code_gram_ * inv.asDiagonal();
  atom_weights_ = inv.asDiagonal() * atom_weights_;
  codes_ = scale.asDiagonal() * codes_;
  regularizer_scale_ = regularizer_scale_.cwiseProduct(scale.cwiseAbs2());
}

void Profile::refresh_gram() {
  atom_gram_ = atom_weights_ * kernel_matrix_ * atom_weights_.transpose();
  symmetrize(atom_gram_);
}

Eigen::VectorXd Profile::contribution_scores() const {
  const Eigen::MatrixXd b = atom_weights_.transpose() * codes_;  // L x L
  return b.rowwise().norm();
}

ProfileResiduals Profile::residuals() const {
  ProfileResiduals r;
  const Eigen::Index q = atoms();
  Eigen::MatrixXd a = codes_ * sample_weights_.asDiagonal() * codes_.transpose();
  a.diagonal() += regularizer_diagonal();
  r.consistency = (inverse_code_gram_ * a - Eigen::MatrixXd::Identity(q, q)).norm() /
                  std::sqrt(static_cast<double>(std::max<Eigen::Index>(q, 1)));
  r.weights = relative_gap(atom_weights_,
                           inverse_code_gram_ * codes_ * sample_weights_.asDiagonal());
  r.gram = relative_gap(atom_gram_, atom_weights_ * kernel_matrix_ * atom_weights_.transpose());
  r.c_symmetry = asymmetry(inverse_code_gram_);
  r.psi_symmetry = asymmetry(atom_gram_);
  r.k_symmetry = asymmetry(kernel_matrix_);
  r.kernel = relative_gap(kernel_matrix_, kernel_.cross_gram(samples_, samples_));
  return r;
}

void Profile::validate(const ProfileTolerances& tol) const {
  std::ostringstream problems;
  if (atoms() < 1) problems << " no atoms;";
  if (size() < atoms()) problems << " fewer samples than atoms;";
  if (!(regularizer_ > 0.0) || !std::isfinite(regularizer_)) problems << " xi not positive;";
  if (!(base_regularizer_ > 0.0)) problems << " gamma not positive;";
  for (Eigen::Index j = 0; j < sample_weights_.size(); ++j)
    if (!(sample_weights_(j) > 0.0 && sample_weights_(j) <= 1.0)) {
      problems << " sample weight " << j << " outside (0,1];";
      break;
    }
  if (!(regularizer_scale_.array() > 0.0).all()) problems << " regularizer scale not positive;";
  if (!samples_.allFinite() || !kernel_matrix_.allFinite() || !codes_.allFinite() ||
      !inverse_code_gram_.allFinite() || !atom_weights_.allFinite() || !atom_gram_.allFinite())
    problems << " non-finite entries;";
  if (problems.str().empty()) {
    const ProfileResiduals r = residuals();
    if (!(r.consistency <= tol.consistency)) problems << " C consistency " << r.consistency << ";";
    if (!(r.weights <= tol.weights)) problems << " U identity " << r.weights << ";";
    if (!(r.gram <= tol.gram)) problems << " Psi identity " << r.gram << ";";
    if (!(r.c_symmetry <= tol.symmetry)) problems << " C asymmetry " << r.c_symmetry << ";";
    if (!(r.psi_symmetry <= tol.symmetry)) problems << " Psi asymmetry " << r.psi_symmetry << ";";
    if (!(r.k_symmetry <= tol.symmetry)) problems << " K asymmetry " << r.k_symmetry << ";";
    if (!(r.kernel <= tol.kernel)) problems << " K differs from k(X,X) by " << r.kernel << ";";
  }
  if (!problems.str().empty()) throw Error("profile invariants violated:" + problems.str());
}

}  // namespace krls
