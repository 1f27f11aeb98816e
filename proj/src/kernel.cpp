#include "krls/kernel.hpp"

#include "krls/error.hpp"

#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

namespace krls {

namespace {

double dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
  if (!m.allFinite()) throw InvalidArgument(std::string("kernel: non-finite entry in ") + what);
}

// Visits every exponent vector (a_1..a_n) with sum <= degree, grouped by total
// degree, lexicographically descending within a group.
void for_each_monomial(std::size_t n, int degree,
                       const std::function<void(const std::vector<int>&)>& visit) {
  std::vector<int> exps(n, 0);
  std::function<void(std::size_t, int)> rec = [&](std::size_t pos, int left) {
    if (pos + 1 == n) {
      exps[pos] = left;
      visit(exps);
      return;
    }
    for (int e = left; e >= 0; --e) {
      exps[pos] = e;
      rec(pos + 1, left - e);
    }
  };
  for (int total = 0; total <= degree; ++total) {
    if (n == 0) {
      if (total == 0) visit(exps);
      continue;
    }
    rec(0, total);
  }
}

}  // namespace

Kernel::Kernel(KernelKind kind, int degree, double offset, double gamma)
    : kind_(kind), degree_(degree), offset_(offset), gamma_(gamma) {}

Kernel Kernel::linear() { return Kernel(KernelKind::linear, 1, 0.0, 0.0); }

Kernel Kernel::polynomial(int degree, double offset) {
  if (degree < 1) throw InvalidArgument("polynomial kernel: degree must be >= 1");
  if (!(offset >= 0.0) || !std::isfinite(offset))
    throw InvalidArgument("polynomial kernel: offset must be finite and >= 0");
  return Kernel(KernelKind::polynomial, degree, offset, 0.0);
}

Kernel Kernel::rbf(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw InvalidArgument("rbf kernel: gamma must be finite and > 0");
  return Kernel(KernelKind::rbf, 1, 0.0, gamma);
}

Kernel Kernel::parse(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string tok; std::getline(ss, tok, ':');) parts.push_back(tok);
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw InvalidArgument("bad kernel spec '" + spec + "'");
    return v;
  };
  if (parts.empty()) throw InvalidArgument("empty kernel spec");
  if (parts[0] == "linear" && parts.size() == 1) return linear();
  if ((parts[0] == "poly" || parts[0] == "polynomial") && parts.size() <= 3) {
    int degree = 2;
    double offset = 1.0;
    if (parts.size() >= 2) {
      double d = number(parts[1]);
      if (d != std::floor(d)) throw InvalidArgument("polynomial degree must be an integer");
      degree = static_cast<int>(d);
    }
    if (parts.size() == 3) offset = number(parts[2]);
    return polynomial(degree, offset);
  }
  if (parts[0] == "rbf" && parts.size() == 2) return rbf(number(parts[1]));
  throw InvalidArgument("bad kernel spec '" + spec + "'");
}

std::string Kernel::to_string() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind_) {
    case KernelKind::linear: os << "linear"; break;
    case KernelKind::polynomial: os << "poly:" << degree_ << ':' << offset_; break;
    case KernelKind::rbf: os << "rbf:" << gamma_; break;
  }
  return os.str();
}

double Kernel::apply(const double* x, const double* y, std::size_t n) const {
  switch (kind_) {
    case KernelKind::linear:
      return dot(x, y, n);
    case KernelKind::polynomial: {
      const double base = offset_ + dot(x, y, n);
      double r = 1.0;
      for (int i = 0; i < degree_; ++i) r *= base;
      return r;
    }
    case KernelKind::rbf: {
      double d2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = x[i] - y[i];
        d2 += d * d;
      }
      return std::exp(-gamma_ * d2);
    }
  }
  return 0.0;
}

double Kernel::eval(const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>& y) const {
  if (x.size() != y.size())
    throw DimensionMismatch("kernel eval: vectors of length " + std::to_string(x.size()) +
                            " and " + std::to_string(y.size()));
  require_finite(x, "x");
  require_finite(y, "y");
  const Eigen::VectorXd xc = x;
  const Eigen::VectorXd yc = y;
  return apply(xc.data(), yc.data(), static_cast<std::size_t>(xc.size()));
}

Eigen::MatrixXd Kernel::cross_gram(const Eigen::Ref<const Eigen::MatrixXd>& a,
                                   const Eigen::Ref<const Eigen::MatrixXd>& b) const {
  if (a.rows() != b.rows())
    throw DimensionMismatch("cross_gram: operands have " + std::to_string(a.rows()) + " and " +
                            std::to_string(b.rows()) + " rows");
  require_finite(a, "A");
  require_finite(b, "B");
  // Contiguous copies so every column is a plain pointer run.
  const Eigen::MatrixXd ac = a;
  const Eigen::MatrixXd bc = b;
  const auto n = static_cast<std::size_t>(ac.rows());
  Eigen::MatrixXd out(ac.cols(), bc.cols());
  for (Eigen::Index j = 0; j < bc.cols(); ++j)
    for (Eigen::Index i = 0; i < ac.cols(); ++i)
      out(i, j) = apply(ac.col(i).data(), bc.col(j).data(), n);
  return out;
}

std::size_t Kernel::feature_dim(std::size_t n) const {
  if (kind_ != KernelKind::polynomial)
    throw UnsupportedKernel("explicit feature map requires a polynomial kernel");
  // C(n + d, d) computed incrementally; exact for the sizes used here.
  std::size_t r = 1;
  for (int i = 1; i <= degree_; ++i) r = r * (n + static_cast<std::size_t>(i)) / static_cast<std::size_t>(i);
  return r;
}

Eigen::VectorXd Kernel::explicit_map(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (kind_ != KernelKind::polynomial)
    throw UnsupportedKernel("explicit feature map requires a polynomial kernel");
  require_finite(x, "x");
  const auto n = static_cast<std::size_t>(x.size());
  Eigen::VectorXd phi(static_cast<Eigen::Index>(feature_dim(n)));
  Eigen::Index pos = 0;
  const double fact_d = factorial(degree_);
  for_each_monomial(n, degree_, [&](const std::vector<int>& exps) {
    int used = 0;
    double denom = 1.0;
    double mono = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      used += exps[i];
      denom *= factorial(exps[i]);
      for (int e = 0; e < exps[i]; ++e) mono *= x(static_cast<Eigen::Index>(i));
    }
    const int rest = degree_ - used;
    denom *= factorial(rest);
    // multinomial coefficient * offset^rest, square-rooted
    double weight = std::sqrt(fact_d / denom);
    if (rest > 0) weight *= std::pow(offset_, 0.5 * rest);
    phi(pos++) = weight * mono;
  });
  return phi;
}

Eigen::MatrixXd Kernel::explicit_map_columns(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(feature_dim(static_cast<std::size_t>(x.rows()))),
                      x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = explicit_map(x.col(j));
  return out;
}

}  // namespace krls
