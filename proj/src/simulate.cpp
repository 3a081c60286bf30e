#include "triad/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <thread>
#include <utility>

#include "triad/errors.hpp"
#include "triad/numeric.hpp"
#include "triad/rng.hpp"

namespace triad {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kTwoPi = 6.28318530717958647693;

// Map a [-1,1] rule onto [lo, hi] and integrate f there.
double integrate_on(const QuadratureRule& rule, double lo, double hi,
                    const std::function<double(double)>& f) {
  const double half = 0.5 * (hi - lo);
  std::vector<double> terms(static_cast<std::size_t>(rule.nodes.size()));
  for (Index i = 0; i < rule.nodes.size(); ++i)
    terms[static_cast<std::size_t>(i)] =
        rule.weights(i) * f(lo + half * (rule.nodes(i) + 1.0));
  return half * pairwise_sum(terms);
}

}  // namespace

double normal_pdf(double y) { return kInvSqrt2Pi * std::exp(-0.5 * y * y); }

double normal_cdf(double y) { return 0.5 * std::erfc(-y / kSqrt2); }

double owen_t(double h, double a) {
  if (!std::isfinite(h) || !std::isfinite(a)) throw DomainError("owen_t: nonfinite argument");
  if (a == 0.0) return 0.0;
  const double sign = a < 0 ? -1.0 : 1.0;
  const double aa = std::abs(a);
  const auto rule = BasisSystem::legendre().quadrature(64);
  const double hh = h * h;
  const double val = integrate_on(rule, 0.0, aa, [&](double x) {
    return std::exp(-0.5 * hh * (1.0 + x * x)) / (1.0 + x * x);
  });
  return sign * val / kTwoPi;
}

double skew_normal_pdf(double y, double mu, double alpha) {
  const double z = y - mu;
  return 2.0 * normal_pdf(z) * normal_cdf(alpha * z);
}

double skew_normal_cdf(double y, double mu, double alpha) {
  const double z = y - mu;
  return normal_cdf(z) - 2.0 * owen_t(z, alpha);
}

double skew_normal_quantile(double p, double mu, double alpha) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("skew_normal_quantile: p in (0,1) required");
  double lo = mu - 12.0, hi = mu + 12.0;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(mu)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (skew_normal_cdf(mid, mu, alpha) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double skew_normal_mean(double mu, double alpha) {
  const double delta = alpha / std::sqrt(1.0 + alpha * alpha);
  return mu + delta * std::sqrt(2.0 / M_PI);
}

double noncentral_t_pdf(double y, double mu, double dof) {
  if (!(dof > 0)) throw DomainError("noncentral_t_pdf: positive degrees of freedom required");
  // Scale-mixture form: T = (Z + mu)/W with W = sqrt(V/d), so the density is
  // E_W[ W phi(W y - mu) ] against the chi-derived law of W.
  const double logc = std::log(2.0) + 0.5 * dof * (std::log(dof) - std::log(2.0)) -
                      std::lgamma(0.5 * dof);
  const double upper = std::max(6.0, 1.0 + 12.0 / std::sqrt(dof));
  const auto rule = BasisSystem::legendre().quadrature(200);
  return integrate_on(rule, 0.0, upper, [&](double w) {
    if (w <= 0.0) return 0.0;
    const double t = w * y - mu;
    const double logp = logc + dof * std::log(w) - 0.5 * dof * w * w - 0.5 * t * t;
    return kInvSqrt2Pi * std::exp(logp);
  });
}

double noncentral_t_mean(double mu, double dof) {
  if (!(dof > 1)) throw DomainError("noncentral_t_mean: more than one degree of freedom required");
  return mu * std::sqrt(0.5 * dof) *
         std::exp(std::lgamma(0.5 * (dof - 1.0)) - std::lgamma(0.5 * dof));
}

Design Design::gaussian(double pi1) {
  Design d;
  d.kind = DesignKind::gaussian_mixture;
  d.means.resize(3, 2);
  d.means << 0, 3, 0, 4, 0, 5;
  d.pi.resize(2);
  d.pi << pi1, 1.0 - pi1;
  return d;
}

Design Design::student_t(double pi1) {
  Design d = gaussian(pi1);
  d.kind = DesignKind::t_mixture;
  d.t_dof = 10.0;
  return d;
}

Design Design::hidden_chain() {
  Design d;
  d.kind = DesignKind::hmm_skew_normal;
  d.transition.resize(2, 2);
  d.transition << 0.8, 0.2, 0.2, 0.8;
  d.pi.resize(2);
  d.pi << 0.5, 0.5;
  d.skew_mu.resize(2);
  d.skew_mu << -2.0, 2.0;
  d.skew_alpha.resize(2);
  d.skew_alpha << 5.0, -5.0;
  return d;
}

void validate(const Design& d) {
  if (d.r < 1) throw DimensionError("design: at least one component required");
  if (d.q < 3) throw DimensionError("design: at least three variables required");
  if (d.pi.size() != d.r) throw DimensionError("design: proportion count differs from r");
  if (d.pi.minCoeff() < 0 || std::abs(d.pi.sum() - 1.0) > 1e-12)
    throw DomainError("design: proportions must lie on the simplex");
  switch (d.kind) {
    case DesignKind::gaussian_mixture:
    case DesignKind::t_mixture:
      if (d.means.rows() != d.q || d.means.cols() != d.r)
        throw DimensionError("design: means must be q x r");
      if (d.kind == DesignKind::t_mixture) {
        if (!(d.t_dof >= 3) || d.t_dof != std::floor(d.t_dof))
          throw DomainError("design: integer degrees of freedom >= 3 required");
      }
      break;
    case DesignKind::hmm_skew_normal: {
      if (d.q != 3) throw DimensionError("design: the hidden chain observes a triple");
      if (d.transition.rows() != d.r || d.transition.cols() != d.r)
        throw DimensionError("design: transition must be r x r");
      if (d.transition.minCoeff() < 0)
        throw DomainError("design: transition entries must be nonnegative");
      for (Index z = 0; z < d.r; ++z)
        if (std::abs(d.transition.row(z).sum() - 1.0) > 1e-12)
          throw DomainError("design: transition rows must sum to one");
      if ((d.pi.transpose() * d.transition - d.pi.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw DomainError("design: pi is not stationary for the transition matrix");
      if (d.skew_mu.size() != d.r || d.skew_alpha.size() != d.r)
        throw DimensionError("design: one location and one shape per state required");
      break;
    }
  }
}

double truth_density(const Design& d, Index i, Index j, double y) {
  if (j < 0 || j >= d.r) throw DimensionError("truth_density: component out of range");
  switch (d.kind) {
    case DesignKind::gaussian_mixture:
      if (i < 0 || i >= d.q) throw DimensionError("truth_density: variable out of range");
      return normal_pdf(y - d.means(i, j));
    case DesignKind::t_mixture:
      if (i < 0 || i >= d.q) throw DimensionError("truth_density: variable out of range");
      return noncentral_t_pdf(y, d.means(i, j), d.t_dof);
    case DesignKind::hmm_skew_normal:
      return skew_normal_pdf(y, d.skew_mu(j), d.skew_alpha(j));
  }
  throw DomainError("truth_density: unknown design kind");
}

MixtureDraw draw_mixture(const Design& d, Index n, std::uint64_t seed) {
  validate(d);
  if (d.kind == DesignKind::hmm_skew_normal)
    throw DomainError("draw_mixture: a mixture design is required");
  if (n < 1) throw DimensionError("draw_mixture: positive sample size required");
  Rng rng(seed);
  std::span<const double> w(d.pi.data(), static_cast<std::size_t>(d.r));
  const int dof = static_cast<int>(d.t_dof);
  MixtureDraw out;
  out.y.resize(n, d.q);
  out.labels.reserve(static_cast<std::size_t>(n));
  for (Index m = 0; m < n; ++m) {
    const int z = rng.categorical(w);
    out.labels.push_back(z);
    for (Index i = 0; i < d.q; ++i) {
      const double mu = d.means(i, z);
      if (d.kind == DesignKind::gaussian_mixture)
        out.y(m, i) = mu + rng.normal();
      else
        out.y(m, i) = (rng.normal() + mu) / std::sqrt(rng.chi_square(dof) / d.t_dof);
    }
  }
  return out;
}

HmmDraw draw_hmm(const Design& d, Index n, std::uint64_t seed) {
  validate(d);
  if (d.kind != DesignKind::hmm_skew_normal)
    throw DomainError("draw_hmm: a hidden-chain design is required");
  if (n < 1) throw DimensionError("draw_hmm: positive sample size required");
  Rng rng(seed);
  std::span<const double> w(d.pi.data(), static_cast<std::size_t>(d.r));
  Eigen::VectorXd delta(d.r);
  for (Index j = 0; j < d.r; ++j)
    delta(j) = d.skew_alpha(j) / std::sqrt(1.0 + d.skew_alpha(j) * d.skew_alpha(j));
  std::vector<double> row(static_cast<std::size_t>(d.r));
  const auto step = [&](int from) {
    for (Index a = 0; a < d.r; ++a) row[static_cast<std::size_t>(a)] = d.transition(from, a);
    return rng.categorical(row);
  };
  const auto emit = [&](int state) {
    const double dj = delta(state);
    return d.skew_mu(state) + dj * std::abs(rng.normal()) +
           std::sqrt(1.0 - dj * dj) * rng.normal();
  };
  HmmDraw out;
  out.y.resize(n, 3);
  out.path.resize(n, 3);
  for (Index m = 0; m < n; ++m) {
    const int z1 = rng.categorical(w);
    const int z2 = step(z1);
    const int z3 = step(z2);
    out.path(m, 0) = z1;
    out.path(m, 1) = z2;
    out.path(m, 2) = z3;
    out.y(m, 0) = emit(z1);
    out.y(m, 1) = emit(z2);
    out.y(m, 2) = emit(z3);
  }
  return out;
}

namespace {

void parallel_for(Index total, Index jobs, const std::function<void(Index)>& body) {
  jobs = std::clamp<Index>(jobs, 1, total);
  if (jobs == 1) {
    for (Index t = 0; t < total; ++t) body(t);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(jobs));
  for (Index w = 0; w < jobs; ++w)
    workers.emplace_back([&, w] {
      for (Index t = w; t < total; t += jobs) body(t);
    });
  for (auto& th : workers) th.join();
}

std::vector<Index> harness_kappas(const HarnessOptions& opts, Index q) {
  if (opts.kappas.empty()) return std::vector<Index>(static_cast<std::size_t>(q), 10);
  if (static_cast<Index>(opts.kappas.size()) != q)
    throw DimensionError("harness: one truncation per variable required");
  return opts.kappas;
}

double mean_of(const std::vector<double>& v) {
  return pairwise_sum(v) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - mean) * (v[i] - mean);
  return std::sqrt(pairwise_sum(sq) / static_cast<double>(v.size() - 1));
}

void log_failure(HarnessReport& report, Index t, const std::string& what) {
  ++report.failures;
  if (report.failure_messages.size() < 10)
    report.failure_messages.push_back("replication " + std::to_string(t) + ": " + what);
}

}  // namespace

HarnessReport run_rmise(const Design& base, const std::vector<double>& pi1_grid, Index reps,
                        Index n, std::uint64_t seed, const HarnessOptions& opts) {
  validate(base);
  if (base.kind == DesignKind::hmm_skew_normal)
    throw DomainError("run_rmise: a mixture design is required");
  if (base.r != 2) throw DimensionError("run_rmise: the proportion grid needs two components");
  if (reps < 2) throw DimensionError("run_rmise: at least two replications required");
  if (n < 2) throw DimensionError("run_rmise: at least two observations required");
  if (pi1_grid.empty()) throw DimensionError("run_rmise: empty proportion grid");
  for (double p : pi1_grid)
    if (!(p > 0.0 && p < 1.0)) throw DomainError("run_rmise: grid proportions must be in (0,1)");

  const auto kappas = harness_kappas(opts, base.q);
  const auto basis = BasisSystem::hermite_function();
  const auto rule = basis.quadrature(opts.quad_nodes);

  std::vector<Design> designs;
  for (double p : pi1_grid) {
    Design d = base;
    d.pi.resize(2);
    d.pi << p, 1.0 - p;
    designs.push_back(std::move(d));
  }

  HarnessReport report;
  report.kind = "rmise";
  report.design = base;
  report.reps = reps;
  report.n = n;
  report.master_seed = seed;

  struct Outcome {
    bool ok = false;
    std::string error;
    Eigen::MatrixXd ise;  // q x 2
  };
  const Index total = static_cast<Index>(pi1_grid.size()) * reps;
  report.rep_seeds.resize(static_cast<std::size_t>(total));
  std::vector<Outcome> outcomes(static_cast<std::size_t>(total));

  parallel_for(total, opts.jobs, [&](Index t) {
    const Index g = t / reps;
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(t));
    report.rep_seeds[static_cast<std::size_t>(t)] = s;
    auto& out = outcomes[static_cast<std::size_t>(t)];
    try {
      const Design& d = designs[static_cast<std::size_t>(g)];
      auto draw = draw_mixture(d, n, s);
      auto est = align_labels(fit_continuous_mixture(draw.y, 2, basis, kappas, opts.mixture));
      out.ise.resize(d.q, 2);
      for (Index i = 0; i < d.q; ++i)
        for (Index j = 0; j < 2; ++j) {
          const auto& density = est.densities[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
          out.ise(i, j) = rule.apply([&](double y) {
            const double dev = density.evaluate(y) - truth_density(d, i, j, y);
            return dev * dev;
          });
        }
      out.ok = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });

  for (Index t = 0; t < total; ++t)
    if (!outcomes[static_cast<std::size_t>(t)].ok)
      log_failure(report, t, outcomes[static_cast<std::size_t>(t)].error);

  for (std::size_t g = 0; g < pi1_grid.size(); ++g)
    for (Index i = 0; i < base.q; ++i)
      for (Index j = 0; j < 2; ++j) {
        std::vector<double> ises;
        ises.reserve(static_cast<std::size_t>(reps));
        for (Index rep = 0; rep < reps; ++rep) {
          const auto& out = outcomes[g * static_cast<std::size_t>(reps) + static_cast<std::size_t>(rep)];
          if (out.ok) ises.push_back(out.ise(i, j));
        }
        RmiseCell cell;
        cell.pi1 = pi1_grid[g];
        cell.variable = i;
        cell.component = j;
        cell.reps_ok = static_cast<Index>(ises.size());
        if (ises.empty()) {
          cell.rmise = cell.mc_se = std::numeric_limits<double>::quiet_NaN();
        } else {
          const double mean = mean_of(ises);
          cell.rmise = std::sqrt(mean);
          const double se_mean = sd_of(ises, mean) / std::sqrt(double(ises.size()));
          cell.mc_se = cell.rmise > 0 ? se_mean / (2.0 * cell.rmise) : 0.0;
        }
        report.rmise_cells.push_back(cell);
      }
  return report;
}

HarnessReport run_coverage(const Design& chain, Index reps, Index n, std::uint64_t seed,
                           const HarnessOptions& opts) {
  validate(chain);
  if (chain.kind != DesignKind::hmm_skew_normal)
    throw DomainError("run_coverage: a hidden-chain design is required");
  if (reps < 50) throw DimensionError("run_coverage: at least 50 replications required for meaningful coverage");
  if (n < 2) throw DimensionError("run_coverage: at least two observations required");
  if (!(opts.level > 0.0 && opts.level < 1.0))
    throw DomainError("run_coverage: level in (0,1) required");

  const auto kappas = harness_kappas(opts, 3);
  const auto basis = BasisSystem::hermite_function();
  const double z = normal_quantile(0.5 + opts.level / 2.0);
  const Index r = chain.r;
  constexpr Index kDeciles = 9;

  Eigen::MatrixXd points(r, kDeciles), truth(r, kDeciles);
  for (Index j = 0; j < r; ++j)
    for (Index t = 0; t < kDeciles; ++t) {
      points(j, t) = skew_normal_quantile(0.1 * (t + 1), chain.skew_mu(j), chain.skew_alpha(j));
      truth(j, t) = skew_normal_pdf(points(j, t), chain.skew_mu(j), chain.skew_alpha(j));
    }

  HarnessReport report;
  report.kind = "coverage";
  report.design = chain;
  report.reps = reps;
  report.n = n;
  report.master_seed = seed;
  report.rep_seeds.resize(static_cast<std::size_t>(reps));

  struct Outcome {
    bool ok = false;
    std::string error;
    Eigen::MatrixXd fhat, se_scaled, infeasible;  // r x 9 each
  };
  std::vector<Outcome> outcomes(static_cast<std::size_t>(reps));

  parallel_for(reps, opts.jobs, [&](Index t) {
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(t));
    report.rep_seeds[static_cast<std::size_t>(t)] = s;
    auto& out = outcomes[static_cast<std::size_t>(t)];
    try {
      auto draw = draw_hmm(chain, n, s);
      HmmOptions hopts;
      hopts.continuous = opts.mixture;
      auto est = align_labels(fit_hmm(draw.y, r, basis, kappas, hopts));
      out.fhat.resize(r, kDeciles);
      out.se_scaled.resize(r, kDeciles);
      out.infeasible.resize(r, kDeciles);
      for (Index j = 0; j < r; ++j) {
        // Infeasible benchmark: series fit on the true-state subsample at the
        // truncation the feasible estimate selected.
        std::vector<double> sub;
        for (Index m = 0; m < n; ++m)
          if (draw.path(m, 1) == j) sub.push_back(draw.y(m, 1));
        if (sub.empty())
          throw SingularMatrixError("a latent state went unvisited; benchmark undefined");
        Eigen::Map<const Eigen::VectorXd> subv(sub.data(), static_cast<Index>(sub.size()));
        const Index kap = est.emissions[static_cast<std::size_t>(j)].kappa;
        const Eigen::VectorXd coef = basis.project(subv, kap);
        for (Index c = 0; c < kDeciles; ++c) {
          const auto band = confidence_interval(est.emission_weights, draw.y,
                                                est.emissions[static_cast<std::size_t>(j)],
                                                points(j, c), opts.level);
          out.fhat(j, c) = band.fhat;
          out.se_scaled(j, c) = band.se / std::sqrt(double(n));
          out.infeasible(j, c) = coef.dot(basis.eval_vector(kap, points(j, c)));
        }
      }
      out.ok = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });

  for (Index t = 0; t < reps; ++t)
    if (!outcomes[static_cast<std::size_t>(t)].ok)
      log_failure(report, t, outcomes[static_cast<std::size_t>(t)].error);

  for (Index j = 0; j < r; ++j)
    for (Index c = 0; c < kDeciles; ++c) {
      std::vector<double> fhat, se, inf;
      for (Index t = 0; t < reps; ++t) {
        const auto& out = outcomes[static_cast<std::size_t>(t)];
        if (!out.ok) continue;
        fhat.push_back(out.fhat(j, c));
        se.push_back(out.se_scaled(j, c));
        inf.push_back(out.infeasible(j, c));
      }
      CoverageCell cell;
      cell.component = j;
      cell.percentile = 0.1 * (c + 1);
      cell.y = points(j, c);
      cell.truth = truth(j, c);
      cell.reps_ok = static_cast<Index>(fhat.size());
      if (!fhat.empty()) {
        cell.mean_fhat = mean_of(fhat);
        cell.mean_se = mean_of(se);
        cell.mean_infeasible = mean_of(inf);
        cell.sd_point = sd_of(fhat, cell.mean_fhat);
        std::vector<double> hit(fhat.size()), hit_oracle(fhat.size());
        for (std::size_t m = 0; m < fhat.size(); ++m) {
          hit[m] = std::abs(fhat[m] - cell.truth) <= z * se[m] ? 1.0 : 0.0;
          hit_oracle[m] = std::abs(fhat[m] - cell.truth) <= z * cell.sd_point ? 1.0 : 0.0;
        }
        cell.coverage = mean_of(hit);
        cell.coverage_oracle = mean_of(hit_oracle);
      } else {
        cell.coverage = cell.coverage_oracle = std::numeric_limits<double>::quiet_NaN();
        cell.mean_fhat = cell.mean_se = cell.mean_infeasible = cell.sd_point =
            std::numeric_limits<double>::quiet_NaN();
      }
      report.coverage_cells.push_back(cell);
    }
  return report;
}

}  // namespace triad
