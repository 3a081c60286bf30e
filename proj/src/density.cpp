#include "triad/density.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "triad/numeric.hpp"

namespace triad {

namespace {

constexpr Index kBlock = 4096;

void check_sample(const Eigen::Ref<const Eigen::MatrixXd>& sample) {
  if (sample.rows() < 1) throw DimensionError("density: empty sample");
  if (!sample.allFinite()) throw DomainError("density: sample contains non-finite values");
}

// Tensor-product basis row over the given variables (ascending order, last
// variable fastest): kron chain of per-variable basis vectors times rho.
Eigen::VectorXd merged_basis_row(const Eigen::Ref<const Eigen::MatrixXd>& sample,
                                 const BasisSystem& basis, const std::vector<Index>& kappas,
                                 const std::vector<Index>& vars, Index m) {
  Eigen::VectorXd out = Eigen::VectorXd::Ones(1);
  for (Index v : vars) {
    const double y = sample(m, v);
    Eigen::VectorXd phi =
        basis.eval_vector(kappas[static_cast<std::size_t>(v)], y) * basis.rho(y);
    Eigen::VectorXd next(out.size() * phi.size());
    for (Index a = 0; a < out.size(); ++a)
      next.segment(a * phi.size(), phi.size()) = out(a) * phi;
    out.swap(next);
  }
  return out;
}

Eigen::MatrixXd merged_basis_matrix(const Eigen::Ref<const Eigen::MatrixXd>& sample,
                                    const BasisSystem& basis, const std::vector<Index>& kappas,
                                    const std::vector<Index>& vars) {
  Index cols = 1;
  for (Index v : vars) cols *= kappas[static_cast<std::size_t>(v)];
  Eigen::MatrixXd out(sample.rows(), cols);
  for (Index m = 0; m < sample.rows(); ++m)
    out.row(m) = merged_basis_row(sample, basis, kappas, vars, m).transpose();
  return out;
}

// Blocked pairwise accumulation of the weighted basis sums along one column:
//   s_k = sum_m w_m phi_k(y_m) rho(y_m),   t_k = sum_m (w_m phi_k(y_m) rho(y_m))^2.
void weighted_basis_sums(const Eigen::Ref<const Eigen::VectorXd>& y,
                         const Eigen::Ref<const Eigen::VectorXd>& w, const BasisSystem& basis,
                         Index kmax, Eigen::VectorXd& s, Eigen::VectorXd& t) {
  const Index n = y.size();
  std::vector<std::vector<double>> s_parts(static_cast<std::size_t>(kmax));
  std::vector<std::vector<double>> t_parts(static_cast<std::size_t>(kmax));
  Eigen::MatrixXd vals(std::min(kBlock, n), kmax);
  for (Index start = 0; start < n; start += kBlock) {
    const Index m = std::min(kBlock, n - start);
    for (Index i = 0; i < m; ++i) {
      const double yi = y(start + i);
      vals.row(i) =
          (w(start + i) * basis.rho(yi)) * basis.eval_vector(kmax, yi).transpose();
    }
    for (Index k = 0; k < kmax; ++k) {
      const std::span<const double> col(vals.col(k).data(), static_cast<std::size_t>(m));
      s_parts[static_cast<std::size_t>(k)].push_back(pairwise_sum(col));
      std::vector<double> sq(col.begin(), col.end());
      for (double& v : sq) v *= v;
      t_parts[static_cast<std::size_t>(k)].push_back(pairwise_sum(sq));
    }
  }
  s.resize(kmax);
  t.resize(kmax);
  for (Index k = 0; k < kmax; ++k) {
    s(k) = pairwise_sum(s_parts[static_cast<std::size_t>(k)]);
    t(k) = pairwise_sum(t_parts[static_cast<std::size_t>(k)]);
  }
}

void check_weights_sample(const ClassificationWeights& weights,
                          const Eigen::Ref<const Eigen::MatrixXd>& sample, Index j) {
  check_sample(sample);
  if (sample.rows() != weights.n)
    throw DimensionError("density: sample size differs from the one the weights were built on");
  if (sample.cols() != static_cast<Index>(weights.kappas.size()))
    throw DimensionError("density: sample width differs from the weights' variable count");
  if (j < 0 || j >= weights.rank()) throw DimensionError("density: component index out of range");
}

}  // namespace

MomentArray moment_array(const Eigen::Ref<const Eigen::MatrixXd>& sample,
                         const BasisSystem& basis, const std::vector<Index>& kappas) {
  check_sample(sample);
  if (sample.cols() != static_cast<Index>(kappas.size()))
    throw DimensionError("moment_array: one truncation per variable required");
  for (Index k : kappas)
    if (k < 1) throw DimensionError("moment_array: truncations must be at least 1");
  std::vector<Index> all_vars(kappas.size());
  for (std::size_t i = 0; i < kappas.size(); ++i) all_vars[i] = static_cast<Index>(i);

  const Index n = sample.rows();
  MomentArray out;
  out.values = MultiwayArrayXd(kappas);
  const Index cells = out.values.size();

  // Per-block plain accumulation, pairwise across blocks: deterministic in
  // the sample order and stable for large n.
  std::vector<Eigen::VectorXd> blocks;
  for (Index start = 0; start < n; start += kBlock) {
    const Index m = std::min(kBlock, n - start);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(cells);
    for (Index i = 0; i < m; ++i)
      acc += merged_basis_row(sample, basis, kappas, all_vars, start + i);
    blocks.push_back(std::move(acc));
  }
  std::vector<double> cell_terms(blocks.size());
  for (Index c = 0; c < cells; ++c) {
    for (std::size_t b = 0; b < blocks.size(); ++b) cell_terms[b] = blocks[b](c);
    out.values.values()(c) = pairwise_sum(cell_terms) / static_cast<double>(n);
  }
  out.n = n;
  out.basis = basis.kind();
  out.kappas = kappas;
  return out;
}

ClassificationWeights classification_weights(const Eigen::Ref<const Eigen::MatrixXd>& sample,
                                             const BasisSystem& basis,
                                             const std::vector<Index>& kappas, Index r,
                                             Index direction, std::vector<Index> part1,
                                             std::vector<Index> part2,
                                             const JointDiagOptions& jd_opts) {
  check_sample(sample);
  const Index q = sample.cols();
  if (q != static_cast<Index>(kappas.size()))
    throw DimensionError("classification_weights: one truncation per variable required");
  if (q < 3) throw DimensionError("classification_weights: at least three variables required");
  for (Index k : kappas)
    if (k < 1) throw DimensionError("classification_weights: truncations must be at least 1");
  if (direction < 0 || direction >= q)
    throw DimensionError("classification_weights: direction out of range");
  if (r < 1) throw DimensionError("classification_weights: positive rank required");
  if (part1.empty() != part2.empty())
    throw DimensionError("classification_weights: provide both variable groups or neither");

  if (part1.empty()) {
    std::vector<Index> rest, sizes;
    for (Index v = 0; v < q; ++v)
      if (v != direction) {
        rest.push_back(v);
        sizes.push_back(kappas[static_cast<std::size_t>(v)]);
      }
    detail::balanced_bipartition(rest, sizes, r, part1, part2);
  } else {
    std::vector<char> seen(static_cast<std::size_t>(q), 0);
    seen[static_cast<std::size_t>(direction)] = 1;
    for (const auto* part : {&part1, &part2})
      for (Index v : *part) {
        if (v < 0 || v >= q) throw DimensionError("classification_weights: group variable out of range");
        if (seen[static_cast<std::size_t>(v)])
          throw DimensionError("classification_weights: variable groups must be disjoint and exclude the direction");
        seen[static_cast<std::size_t>(v)] = 1;
      }
    for (char s : seen)
      if (!s) throw DimensionError("classification_weights: variable groups must cover all other variables");
    for (auto* part : {&part1, &part2}) std::sort(part->begin(), part->end());
  }

  const Index n = sample.rows();
  Eigen::MatrixXd phi1 = merged_basis_matrix(sample, basis, kappas, part1);
  Eigen::MatrixXd phi2 = merged_basis_matrix(sample, basis, kappas, part2);
  Eigen::MatrixXd a0 = phi1.transpose() * phi2 / static_cast<double>(n);

  ClassificationWeights out;
  out.whitening = whiten(a0, r);

  const Index ki = kappas[static_cast<std::size_t>(direction)];
  Eigen::MatrixXd phid(n, ki);
  for (Index m = 0; m < n; ++m) {
    const double y = sample(m, direction);
    phid.row(m) = basis.rho(y) * basis.eval_vector(ki, y).transpose();
  }
  JointDiagProblem<double> problem;
  problem.matrices.reserve(static_cast<std::size_t>(ki));
  for (Index k = 0; k < ki; ++k) {
    Eigen::MatrixXd ak =
        phi1.transpose() * phid.col(k).asDiagonal() * phi2 / static_cast<double>(n);
    problem.matrices.push_back(out.whitening.w1 * ak * out.whitening.w2.transpose());
  }
  out.jd = joint_diagonalize(problem, jd_opts);

  out.direction = direction;
  out.part1 = std::move(part1);
  out.part2 = std::move(part2);
  out.kappas = kappas;
  out.basis = basis.kind();
  out.n = n;

  if (r == 1) {
    // Single component: the weight term drops from the estimator, which then
    // is the classical orthogonal-series density estimator.
    out.omega = Eigen::MatrixXd::Ones(n, 1);
  } else {
    Eigen::MatrixXd left =
        phi1 * out.whitening.w1.transpose() * out.jd.Q.inverse().transpose();
    Eigen::MatrixXd right = phi2 * out.whitening.w2.transpose() * out.jd.Q;
    out.omega = left.cwiseProduct(right);
  }
  return out;
}

double fourier_coefficient(const ClassificationWeights& weights,
                           const Eigen::Ref<const Eigen::MatrixXd>& sample, Index j, Index k) {
  check_weights_sample(weights, sample, j);
  if (k < 1) throw DimensionError("fourier_coefficient: basis index starts at 1");
  const BasisSystem basis = make_basis(weights.basis);
  Eigen::VectorXd s, t;
  weighted_basis_sums(sample.col(weights.direction), weights.omega.col(j), basis, k, s, t);
  return s(k - 1) / static_cast<double>(weights.n);
}

SeriesDensityEstimate estimate_density(const ClassificationWeights& weights,
                                       const Eigen::Ref<const Eigen::MatrixXd>& sample, Index j,
                                       Index kappa) {
  check_weights_sample(weights, sample, j);
  if (kappa < 1) throw DimensionError("estimate_density: truncation must be at least 1");
  const BasisSystem basis = make_basis(weights.basis);
  Eigen::VectorXd s, t;
  weighted_basis_sums(sample.col(weights.direction), weights.omega.col(j), basis, kappa, s, t);
  SeriesDensityEstimate est;
  est.variable = weights.direction;
  est.component = j;
  est.kappa = kappa;
  est.coefficients = s / static_cast<double>(weights.n);
  est.basis = weights.basis;
  return est;
}

CrossValidationResult cross_validate(const ClassificationWeights& weights,
                                     const Eigen::Ref<const Eigen::MatrixXd>& sample, Index j,
                                     Index kappa_max) {
  check_weights_sample(weights, sample, j);
  if (kappa_max < 1) throw DimensionError("cross_validate: truncation budget must be at least 1");
  const double n = static_cast<double>(weights.n);
  if (weights.n < 2) throw DimensionError("cross_validate: at least two observations required");
  const BasisSystem basis = make_basis(weights.basis);
  Eigen::VectorXd s, t;
  weighted_basis_sums(sample.col(weights.direction), weights.omega.col(j), basis, kappa_max, s, t);

  CrossValidationResult out;
  out.scores.resize(kappa_max);
  double run = 0.0;
  for (Index k = 0; k < kappa_max; ++k) {
    const double bhat = s(k) / n;
    // bhat^2 minus twice the leave-one-out cross moment 1/(n(n-1)) sum_{m != o}.
    run += bhat * bhat - 2.0 * (s(k) * s(k) - t(k)) / (n * (n - 1.0));
    out.scores(k) = run;
  }
  // Argmin with ties resolved to the smallest truncation.
  out.kappa = 1;
  double best = out.scores(0);
  for (Index k = 1; k < kappa_max; ++k)
    if (out.scores(k) < best) {
      best = out.scores(k);
      out.kappa = k + 1;
    }
  return out;
}

double pointwise_se(const ClassificationWeights& weights,
                    const Eigen::Ref<const Eigen::MatrixXd>& sample,
                    const SeriesDensityEstimate& estimate, double y) {
  check_weights_sample(weights, sample, estimate.component);
  if (estimate.variable != weights.direction)
    throw DimensionError("pointwise_se: estimate and weights disagree on the variable");
  const BasisSystem basis = make_basis(weights.basis);
  const Eigen::VectorXd phi_y = basis.eval_vector(estimate.kappa, y);
  const double fhat = estimate.coefficients.dot(phi_y);
  const Index n = weights.n;
  const auto yi = sample.col(weights.direction);
  const auto w = weights.omega.col(estimate.component);

  std::vector<double> parts;
  std::vector<double> sq(static_cast<std::size_t>(std::min(kBlock, n)));
  for (Index start = 0; start < n; start += kBlock) {
    const Index m = std::min(kBlock, n - start);
    for (Index i = 0; i < m; ++i) {
      const double yv = yi(start + i);
      const double summand =
          w(start + i) * basis.rho(yv) * basis.eval_vector(estimate.kappa, yv).dot(phi_y);
      const double d = summand - fhat;
      sq[static_cast<std::size_t>(i)] = d * d;
    }
    parts.push_back(pairwise_sum(std::span<const double>(sq.data(), static_cast<std::size_t>(m))));
  }
  return std::sqrt(pairwise_sum(parts) / static_cast<double>(n));
}

PointwiseBand confidence_interval(const ClassificationWeights& weights,
                                  const Eigen::Ref<const Eigen::MatrixXd>& sample,
                                  const SeriesDensityEstimate& estimate, double y, double level) {
  if (!(level > 0.0 && level < 1.0))
    throw DimensionError("confidence_interval: level must lie strictly between 0 and 1");
  PointwiseBand band;
  band.fhat = estimate.evaluate(y);
  band.se = pointwise_se(weights, sample, estimate, y);
  const double z = normal_quantile(0.5 + level / 2.0);
  const double half = z * band.se / std::sqrt(static_cast<double>(weights.n));
  band.lo = band.fhat - half;
  band.hi = band.fhat + half;
  return band;
}

}  // namespace triad
