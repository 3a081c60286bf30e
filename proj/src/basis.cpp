#include "triad/basis.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <utility>
#include <vector>

#include "triad/numeric.hpp"

namespace triad {

namespace {

constexpr double kPiQuarterInv = 0.75112554446494248;  // pi^{-1/4}
// Cramer's bound: |phi_k(y)| <= K pi^{-1/4} uniformly in k and y.
constexpr double kCramer = 1.086435;

// Hermite functions by the normalized three-term recurrence
//   phi_1 = pi^{-1/4} exp(-y^2/2),  phi_{k+1} = y sqrt(2/k) phi_k - sqrt((k-1)/k) phi_{k-1};
// the closed form with factorials overflows beyond k ~ 20, this does not.
void hermite_fill(Index kappa, double y, double* out) {
  double prev = 0.0;
  double cur = kPiQuarterInv * std::exp(-0.5 * y * y);
  out[0] = cur;
  for (Index k = 1; k < kappa; ++k) {
    const double kd = static_cast<double>(k);
    const double next = y * std::sqrt(2.0 / kd) * cur - std::sqrt((kd - 1.0) / kd) * prev;
    prev = cur;
    cur = next;
    out[k] = cur;
  }
}

// Normalized Legendre: phi_k = sqrt((2k-1)/2) P_{k-1}.
void legendre_fill(Index kappa, double y, double* out) {
  double prev = 0.0;
  double cur = 1.0;  // P_0
  out[0] = std::sqrt(0.5);
  for (Index m = 1; m < kappa; ++m) {
    const double md = static_cast<double>(m);
    const double next = ((2.0 * md - 1.0) * y * cur - (md - 1.0) * prev) / md;
    prev = cur;
    cur = next;
    out[m] = std::sqrt((2.0 * md + 1.0) / 2.0) * cur;
  }
}

// Golub-Welsch nodes for a symmetric Jacobi matrix with zero diagonal.
Eigen::MatrixXd jacobi_matrix(Index n, const std::function<double(Index)>& beta) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (Index k = 1; k < n; ++k) {
    const double b = beta(k);
    j(k - 1, k) = b;
    j(k, k - 1) = b;
  }
  return j;
}

}  // namespace

double QuadratureRule::apply(const std::function<double(double)>& f) const {
  std::vector<double> terms(static_cast<std::size_t>(nodes.size()));
  for (Index i = 0; i < nodes.size(); ++i)
    terms[static_cast<std::size_t>(i)] = weights(i) * f(nodes(i));
  return pairwise_sum(terms);
}

BasisSystem BasisSystem::hermite_function() { return BasisSystem(BasisKind::hermite_function); }
BasisSystem BasisSystem::legendre() { return BasisSystem(BasisKind::legendre); }

BasisSystem make_basis(BasisKind kind) { return kind == BasisKind::hermite_function
                                                    ? BasisSystem::hermite_function()
                                                    : BasisSystem::legendre(); }

Interval BasisSystem::support() const {
  if (kind_ == BasisKind::hermite_function) return {0.0, 0.0, true};
  return {-1.0, 1.0, false};
}

const char* BasisSystem::name() const {
  return kind_ == BasisKind::hermite_function ? "hermite" : "legendre";
}

double BasisSystem::rho(double y) const {
  check_support(y);
  return 1.0;
}

double BasisSystem::zeta(Index kappa) const {
  if (kappa < 0) throw DimensionError("zeta: negative truncation");
  const double kd = static_cast<double>(kappa);
  if (kind_ == BasisKind::hermite_function) return kCramer * kPiQuarterInv * std::sqrt(kd);
  // |phi_k| <= sqrt((2k-1)/2), so the vector norm is at most kappa/sqrt(2).
  return kd / std::sqrt(2.0);
}

void BasisSystem::check_support(double y) const {
  if (kind_ == BasisKind::legendre && (y < -1.0 || y > 1.0))
    throw DomainError("legendre basis evaluated outside [-1, 1]");
}

double BasisSystem::eval(Index k, double y) const {
  if (k < 1) throw DimensionError("basis index starts at 1");
  check_support(y);
  Eigen::VectorXd buf(k);
  if (kind_ == BasisKind::hermite_function)
    hermite_fill(k, y, buf.data());
  else
    legendre_fill(k, y, buf.data());
  return buf(k - 1);
}

Eigen::VectorXd BasisSystem::eval_vector(Index kappa, double y) const {
  if (kappa < 1) throw DimensionError("basis truncation must be at least 1");
  check_support(y);
  Eigen::VectorXd out(kappa);
  if (kind_ == BasisKind::hermite_function)
    hermite_fill(kappa, y, out.data());
  else
    legendre_fill(kappa, y, out.data());
  return out;
}

QuadratureRule BasisSystem::quadrature(Index n) const {
  if (n < 1) throw DimensionError("quadrature: at least one node required");
  static std::map<std::pair<int, Index>, QuadratureRule> cache;
  static std::mutex mu;
  const auto key = std::make_pair(static_cast<int>(kind_), n);
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }

  QuadratureRule rule;
  if (kind_ == BasisKind::hermite_function) {
    // Gauss-Hermite nodes; weights in the numerically safe modified form
    // w_i = 1 / sum_{k<=n} phi_k(x_i)^2 (the Christoffel function at the
    // node), which integrates f dy exactly for f = poly * exp(-y^2) without
    // ever forming exp(x_i^2).
    Eigen::MatrixXd j =
        jacobi_matrix(n, [](Index k) { return std::sqrt(static_cast<double>(k) / 2.0); });
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j, Eigen::EigenvaluesOnly);
    rule.nodes = es.eigenvalues();
    rule.weights.resize(n);
    for (Index i = 0; i < n; ++i)
      rule.weights(i) = 1.0 / eval_vector(n, rule.nodes(i)).squaredNorm();
  } else {
    Eigen::MatrixXd j = jacobi_matrix(n, [](Index k) {
      const double kd = static_cast<double>(k);
      return kd / std::sqrt(4.0 * kd * kd - 1.0);
    });
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    rule.nodes = es.eigenvalues();
    rule.weights = (2.0 * es.eigenvectors().row(0).transpose().array().square()).matrix();
  }

  std::lock_guard<std::mutex> lock(mu);
  auto [it, inserted] = cache.emplace(key, std::move(rule));
  (void)inserted;
  return it->second;
}

double BasisSystem::integrate(const std::function<double(double)>& f, double tol, Index n0,
                              Index n_max) const {
  if (n0 < 1 || n_max < n0) throw DimensionError("integrate: bad node budget");
  double prev = quadrature(n0).apply(f);
  for (Index n = 2 * n0; n <= n_max; n *= 2) {
    const double cur = quadrature(n).apply(f);
    if (std::abs(cur - prev) <= tol * (1.0 + std::abs(cur))) return cur;
    prev = cur;
  }
  throw ConvergenceError("integrate: quadrature did not stabilize within the node budget", prev);
}

Eigen::VectorXd BasisSystem::project(const std::function<double(double)>& f, Index kappa,
                                     double tol, Index n0, Index n_max) const {
  if (kappa < 1) throw DimensionError("project: truncation must be at least 1");
  if (n0 < 1 || n_max < n0) throw DimensionError("project: bad node budget");
  auto coeffs_at = [&](Index n) {
    const QuadratureRule rule = quadrature(std::max(n, kappa));
    const Index m = rule.nodes.size();
    Eigen::MatrixXd phi(m, kappa);
    Eigen::VectorXd fw(m);
    for (Index i = 0; i < m; ++i) {
      phi.row(i) = eval_vector(kappa, rule.nodes(i)).transpose();
      fw(i) = rule.weights(i) * f(rule.nodes(i)) * rho(rule.nodes(i));
    }
    Eigen::VectorXd b(kappa);
    std::vector<double> terms(static_cast<std::size_t>(m));
    for (Index k = 0; k < kappa; ++k) {
      for (Index i = 0; i < m; ++i)
        terms[static_cast<std::size_t>(i)] = fw(i) * phi(i, k);
      b(k) = pairwise_sum(terms);
    }
    return b;
  };
  Eigen::VectorXd prev = coeffs_at(n0);
  for (Index n = 2 * n0; n <= n_max; n *= 2) {
    Eigen::VectorXd cur = coeffs_at(n);
    const double diff = (cur - prev).cwiseAbs().maxCoeff();
    if (diff <= tol * (1.0 + cur.cwiseAbs().maxCoeff())) return cur;
    prev = cur;
  }
  throw ConvergenceError("project: quadrature did not stabilize within the node budget",
                         prev.cwiseAbs().maxCoeff());
}

Eigen::VectorXd BasisSystem::project(const Eigen::Ref<const Eigen::VectorXd>& sample,
                                     Index kappa) const {
  if (kappa < 1) throw DimensionError("project: truncation must be at least 1");
  const Index n = sample.size();
  if (n == 0) throw DimensionError("project: empty sample");
  // Blocked accumulation: pairwise within each block column, pairwise across
  // block subtotals; the result depends only on sample order.
  const Index block = 8192;
  std::vector<std::vector<double>> partial(static_cast<std::size_t>(kappa));
  Eigen::MatrixXd phi(std::min(block, n), kappa);
  for (Index start = 0; start < n; start += block) {
    const Index m = std::min(block, n - start);
    for (Index i = 0; i < m; ++i) {
      const double y = sample(start + i);
      phi.row(i) = eval_vector(kappa, y).transpose() * rho(y);
    }
    for (Index k = 0; k < kappa; ++k)
      partial[static_cast<std::size_t>(k)].push_back(
          pairwise_sum(std::span<const double>(phi.col(k).data(), static_cast<std::size_t>(m))));
  }
  Eigen::VectorXd b(kappa);
  for (Index k = 0; k < kappa; ++k)
    b(k) = pairwise_sum(partial[static_cast<std::size_t>(k)]) / static_cast<double>(n);
  return b;
}

}  // namespace triad
