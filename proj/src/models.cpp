#include "triad/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <utility>

#include "triad/errors.hpp"

namespace triad {

namespace {

std::string short_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Clip negative entries columnwise and renormalize each column to unit sum.
// Returns the worst fraction of absolute mass removed; columns losing more
// than warn_bound get a warning tagged with the factor label.
double clip_to_stochastic(Eigen::MatrixXd& f, double warn_bound, Index variable,
                          std::vector<std::string>& warnings) {
  double worst = 0;
  for (Index j = 0; j < f.cols(); ++j) {
    double pos = 0, neg = 0;
    for (Index k = 0; k < f.rows(); ++k) {
      const double v = f(k, j);
      if (v > 0)
        pos += v;
      else
        neg -= v;
    }
    if (!(pos > 0))
      throw SingularMatrixError("mixture fit: a recovered factor column has no positive mass");
    const double frac = neg / (pos + neg);
    worst = std::max(worst, frac);
    if (frac > warn_bound)
      warnings.push_back("variable " + std::to_string(variable) + ", component " +
                         std::to_string(j) + ": clipped " + short_number(frac) +
                         " of the column mass to restore nonnegativity");
    f.col(j) = f.col(j).cwiseMax(0.0);
    f.col(j) /= f.col(j).sum();
  }
  return worst;
}

// Shared transition recovery: the outer factors of the triple sit one step
// from the conditioning state, so b = p k' and a = p diag(pi) k diag(pi)^{-1}.
// The forward relation defines the estimate; the reverse one cross-checks it.
void transition_from_factors(HmmEstimate& est, double row_warn_bound) {
  const Index r = est.pi.size();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(est.p);
  qr.setThreshold(1e-12);
  if (qr.rank() < r)
    throw SingularMatrixError("fit_hmm: emission factor is rank-deficient");
  const Eigen::MatrixXd k_raw = qr.solve(est.b).transpose();

  if (est.pi.minCoeff() > 1e-12) {
    const Eigen::MatrixXd m = qr.solve(est.a);
    const Eigen::MatrixXd k_alt =
        est.pi.cwiseInverse().asDiagonal() * m * est.pi.asDiagonal();
    est.route_gap = (k_raw - k_alt).cwiseAbs().maxCoeff();
  } else {
    est.route_gap = std::numeric_limits<double>::quiet_NaN();
    est.warnings.push_back("a stationary weight vanished; transition cross-check skipped");
  }

  est.k.resize(r, r);
  for (Index z = 0; z < r; ++z) {
    est.k.row(z) = simplex_project(k_raw.row(z).transpose()).transpose();
    const double moved = (est.k.row(z) - k_raw.row(z)).lpNorm<1>();
    if (moved > row_warn_bound)
      est.warnings.push_back("transition row " + std::to_string(z) + " moved " +
                             short_number(moved) + " in the simplex projection");
  }
  est.stationarity_gap =
      (est.pi.transpose() * est.k - est.pi.transpose()).lpNorm<1>();
}

// Ascending-key component order; ties inside 1e-12 keep the incoming order.
std::vector<Index> key_order(const Eigen::VectorXd& keys,
                             std::vector<std::string>& warnings) {
  std::vector<Index> ord(static_cast<std::size_t>(keys.size()));
  std::iota(ord.begin(), ord.end(), Index(0));
  std::stable_sort(ord.begin(), ord.end(),
                   [&](Index a, Index b) { return keys(a) < keys(b); });
  for (std::size_t j = 1; j < ord.size(); ++j)
    if (std::abs(keys(ord[j]) - keys(ord[j - 1])) <= 1e-12) {
      warnings.push_back("label keys nearly tie; the component order is fragile");
      break;
    }
  return ord;
}

Eigen::MatrixXd permute_cols(const Eigen::MatrixXd& m, const std::vector<Index>& ord) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Index j = 0; j < m.cols(); ++j) out.col(j) = m.col(ord[static_cast<std::size_t>(j)]);
  return out;
}

Eigen::VectorXd permute_entries(const Eigen::VectorXd& v, const std::vector<Index>& ord) {
  Eigen::VectorXd out(v.size());
  for (Index j = 0; j < v.size(); ++j) out(j) = v(ord[static_cast<std::size_t>(j)]);
  return out;
}

}  // namespace

Eigen::VectorXd simplex_project(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const Index r = v.size();
  if (r < 1) throw DimensionError("simplex_project: empty vector");
  if (!v.allFinite()) throw DomainError("simplex_project: nonfinite entry");
  std::vector<double> u(v.data(), v.data() + r);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cumsum = 0, tau = 0;
  for (Index k = 0; k < r; ++k) {
    cumsum += u[static_cast<std::size_t>(k)];
    const double cand = (cumsum - 1.0) / static_cast<double>(k + 1);
    if (u[static_cast<std::size_t>(k)] - cand > 0) tau = cand;
  }
  return (v.array() - tau).cwiseMax(0.0);
}

DiscreteMixtureEstimate fit_discrete_mixture(const MultiwayArrayXd& table, Index r,
                                             const DiscreteMixtureOptions& opts) {
  if (table.values().minCoeff() < 0)
    throw DomainError("fit_discrete_mixture: table entries must be nonnegative");
  const double total = table.values().sum();
  if (!(total > 0)) throw DomainError("fit_discrete_mixture: empty table");
  MultiwayArrayXd freq(table.dims(), table.values() / total);

  auto report = recover_all_factors(freq, r, opts.decompose);

  DiscreteMixtureEstimate est;
  est.warnings = report.warnings;
  est.rank_gap = report.rank_gap;
  est.p = report.decomposition.factors;
  for (std::size_t i = 0; i < est.p.size(); ++i)
    est.clipped_mass = std::max(
        est.clipped_mass, clip_to_stochastic(est.p[i], opts.clip_warn_bound,
                                             static_cast<Index>(i), est.warnings));

  est.pi = simplex_project(recover_weights<double>(khatri_rao_cols<double>(est.p), freq.values()));

  CpDecompositionXd repaired{est.p, est.pi};
  est.residual = (compose(repaired).values() - freq.values()).norm() /
                 std::max(freq.frobenius_norm(), 1e-300);

  // Label keys: conditional support-index means of the first variable.
  est.label_keys.resize(r);
  for (Index j = 0; j < r; ++j) {
    double mean = 0;
    for (Index k = 0; k < est.p[0].rows(); ++k) mean += static_cast<double>(k) * est.p[0](k, j);
    est.label_keys(j) = mean;
  }
  return est;
}

ContinuousMixtureEstimate fit_continuous_mixture(const Eigen::Ref<const Eigen::MatrixXd>& sample,
                                                 Index r, const BasisSystem& basis,
                                                 const std::vector<Index>& kappas,
                                                 const ContinuousMixtureOptions& opts) {
  const Index q = sample.cols();
  if (q < 3) throw DimensionError("fit_continuous_mixture: at least three variables required");
  if (static_cast<Index>(kappas.size()) != q)
    throw DimensionError("fit_continuous_mixture: one truncation per variable required");
  const Index n = sample.rows();

  ContinuousMixtureEstimate est;
  est.weights.reserve(static_cast<std::size_t>(q));
  for (Index i = 0; i < q; ++i) {
    est.weights.push_back(
        classification_weights(sample, basis, kappas, r, i, {}, {}, opts.jd));
    const auto& jd = est.weights.back().jd;
    if (r > 1 && !jd.converged)
      est.warnings.push_back("direction " + std::to_string(i) +
                             ": diagonalization stopped at the sweep budget");
    if (r > 1 && jd.degenerate)
      est.warnings.push_back("direction " + std::to_string(i) +
                             ": eigenvalue profiles nearly coincide");
  }

  // One latent class underlies every direction's run; make the component
  // labels agree by matching weight columns against the first direction.
  for (Index i = 1; i < q && r > 1; ++i) {
    auto match = match_factor_columns<double>(est.weights[static_cast<std::size_t>(i)].omega,
                                              est.weights[0].omega);
    std::vector<Index> ord(match.perm.begin(), match.perm.end());
    est.weights[static_cast<std::size_t>(i)].omega =
        permute_cols(est.weights[static_cast<std::size_t>(i)].omega, ord);
  }

  est.densities.resize(static_cast<std::size_t>(q));
  est.coefficient_factors.resize(static_cast<std::size_t>(q));
  for (Index i = 0; i < q; ++i) {
    auto& w = est.weights[static_cast<std::size_t>(i)];
    auto& coef = est.coefficient_factors[static_cast<std::size_t>(i)];
    coef.resize(kappas[static_cast<std::size_t>(i)], r);
    for (Index j = 0; j < r; ++j) {
      Index kap = opts.fixed_kappa;
      if (kap <= 0) kap = cross_validate(w, sample, j, opts.cv_budget).kappa;
      est.densities[static_cast<std::size_t>(i)].push_back(
          estimate_density(w, sample, j, kap));
      coef.col(j) =
          estimate_density(w, sample, j, kappas[static_cast<std::size_t>(i)]).coefficients;
    }
  }

  // Mixing weights from the one-dimensional submodels: the sample basis-mean
  // of every variable is the pi-combination of its component coefficients.
  Index rows = 0;
  for (Index kap : kappas) rows += kap;
  Eigen::MatrixXd design(rows, r);
  Eigen::VectorXd target(rows);
  Index off = 0;
  for (Index i = 0; i < q; ++i) {
    const Index kap = kappas[static_cast<std::size_t>(i)];
    design.middleRows(off, kap) = est.coefficient_factors[static_cast<std::size_t>(i)];
    target.segment(off, kap) = basis.project(sample.col(i), kap);
    off += kap;
  }
  est.pi = simplex_project(recover_weights<double>(design, target));

  // Label keys: weighted sample means estimate the component means of the
  // first variable (the weights are built from the other directions).
  est.label_keys = est.weights[0].omega.transpose() * sample.col(0) / static_cast<double>(n);
  return est;
}

HmmEstimate fit_hmm(const MultiwayArrayXd& table, Index r, const HmmOptions& opts) {
  if (table.order() != 3) throw DimensionError("fit_hmm: three-way table required");
  if (table.dim(0) != table.dim(1) || table.dim(1) != table.dim(2))
    throw DimensionError("fit_hmm: the three observations must share one alphabet");

  DiscreteMixtureOptions dopts = opts.discrete;
  dopts.decompose.pivot = 1;  // the middle observation indexes the hidden state
  dopts.decompose.part1 = {0};
  dopts.decompose.part2 = {2};
  auto mix = fit_discrete_mixture(table, r, dopts);

  HmmEstimate est;
  est.a = mix.p[0];
  est.p = mix.p[1];
  est.b = mix.p[2];
  est.pi = mix.pi;
  est.residual = mix.residual;
  est.rank_gap = mix.rank_gap;
  est.clipped_mass = mix.clipped_mass;
  est.warnings = std::move(mix.warnings);
  transition_from_factors(est, opts.row_projection_warn_bound);

  est.label_keys.resize(r);
  for (Index j = 0; j < r; ++j) {
    double mean = 0;
    for (Index k = 0; k < est.p.rows(); ++k) mean += static_cast<double>(k) * est.p(k, j);
    est.label_keys(j) = mean;
  }
  return est;
}

HmmEstimate fit_hmm(const Eigen::Ref<const Eigen::MatrixXd>& sample, Index r,
                    const BasisSystem& basis, const std::vector<Index>& kappas,
                    const HmmOptions& opts) {
  if (sample.cols() != 3)
    throw DimensionError("fit_hmm: a triple of consecutive observations is required");
  auto mix = fit_continuous_mixture(sample, r, basis, kappas, opts.continuous);

  HmmEstimate est;
  est.a = mix.coefficient_factors[0];
  est.p = mix.coefficient_factors[1];
  est.b = mix.coefficient_factors[2];
  est.pi = mix.pi;
  est.emissions = std::move(mix.densities[1]);
  est.emission_weights = mix.weights[1];
  est.residual = std::numeric_limits<double>::quiet_NaN();  // no table to reconstruct
  est.rank_gap = mix.weights[1].whitening.rank_gap;
  est.warnings = std::move(mix.warnings);
  transition_from_factors(est, opts.row_projection_warn_bound);

  // Label keys: weighted sample means of the middle (emission) observation.
  est.label_keys = mix.weights[1].omega.transpose() * sample.col(1) /
                   static_cast<double>(sample.rows());
  return est;
}

DiscreteMixtureEstimate align_labels(const DiscreteMixtureEstimate& e) {
  DiscreteMixtureEstimate out = e;
  auto ord = key_order(e.label_keys, out.warnings);
  for (auto& f : out.p) f = permute_cols(f, ord);
  out.pi = permute_entries(e.pi, ord);
  out.label_keys = permute_entries(e.label_keys, ord);
  return out;
}

ContinuousMixtureEstimate align_labels(const ContinuousMixtureEstimate& e) {
  ContinuousMixtureEstimate out = e;
  auto ord = key_order(e.label_keys, out.warnings);
  for (std::size_t i = 0; i < out.densities.size(); ++i)
    for (std::size_t j = 0; j < out.densities[i].size(); ++j) {
      out.densities[i][j] = e.densities[i][ord[j]];
      out.densities[i][j].component = static_cast<Index>(j);
    }
  for (auto& f : out.coefficient_factors) f = permute_cols(f, ord);
  for (auto& w : out.weights) w.omega = permute_cols(w.omega, ord);
  out.pi = permute_entries(e.pi, ord);
  out.label_keys = permute_entries(e.label_keys, ord);
  return out;
}

HmmEstimate align_labels(const HmmEstimate& e) {
  HmmEstimate out = e;
  auto ord = key_order(e.label_keys, out.warnings);
  out.a = permute_cols(e.a, ord);
  out.p = permute_cols(e.p, ord);
  out.b = permute_cols(e.b, ord);
  const Index r = e.pi.size();
  out.k.resize(r, r);
  for (Index z = 0; z < r; ++z)
    for (Index j = 0; j < r; ++j)
      out.k(z, j) = e.k(ord[static_cast<std::size_t>(z)], ord[static_cast<std::size_t>(j)]);
  for (std::size_t j = 0; j < out.emissions.size(); ++j) {
    out.emissions[j] = e.emissions[ord[j]];
    out.emissions[j].component = static_cast<Index>(j);
  }
  if (out.emission_weights.omega.size() > 0)
    out.emission_weights.omega = permute_cols(e.emission_weights.omega, ord);
  out.pi = permute_entries(e.pi, ord);
  out.label_keys = permute_entries(e.label_keys, ord);
  return out;
}

}  // namespace triad
