#pragma once

// Seeded samplers for the benchmark designs (normal and noncentral-t
// mixtures, a skew-normal hidden chain), their exact population densities,
// and a deterministic Monte Carlo harness measuring integrated estimation
// error and confidence-interval coverage.
//
// Determinism contract: every replication works from a seed derived as
// derive_seed(master, replication_index); the reduction into the report is
// order-fixed pairwise summation, so reports are bit-identical for a given
// (design, seed, reps) regardless of the worker-thread count.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "triad/models.hpp"

namespace triad {

// --- population quantities ---------------------------------------------------

double normal_pdf(double y);
double normal_cdf(double y);
// Owen's T function T(h, a); even in h, odd in a.
double owen_t(double h, double a);
double skew_normal_pdf(double y, double mu, double alpha);
double skew_normal_cdf(double y, double mu, double alpha);
double skew_normal_quantile(double p, double mu, double alpha);
double skew_normal_mean(double mu, double alpha);
// Density and mean of (Z + mu)/sqrt(V/d), Z standard normal, V chi-square(d).
double noncentral_t_pdf(double y, double mu, double dof);
double noncentral_t_mean(double mu, double dof);

// --- designs -----------------------------------------------------------------

enum class DesignKind { gaussian_mixture, t_mixture, hmm_skew_normal };

struct Design {
  DesignKind kind = DesignKind::gaussian_mixture;
  Index q = 3;
  Index r = 2;
  Index n = 500;           // default sample size
  std::uint64_t seed = 1;  // default master seed
  Eigen::MatrixXd means;   // q x r component locations (mixture kinds)
  Eigen::VectorXd pi;      // mixing proportions / stationary law
  double t_dof = 10.0;     // degrees of freedom (t mixture; integer >= 3)
  Eigen::MatrixXd transition;           // r x r row-stochastic (hidden chain)
  Eigen::VectorXd skew_mu, skew_alpha;  // per-state emission parameters

  // Benchmark presets: three variables, two components with location
  // columns (0,0,0) and (3,4,5); symmetric two-state chain with opposing
  // skew-normal emissions.
  static Design gaussian(double pi1 = 0.5);
  static Design student_t(double pi1 = 0.5);
  static Design hidden_chain();
};

void validate(const Design& d);

// Truth density of variable i under component j (mixtures), or of the state-j
// emission (hidden chain; i is ignored there).
double truth_density(const Design& d, Index i, Index j, double y);

struct MixtureDraw {
  Eigen::MatrixXd y;        // n x q outcomes
  std::vector<int> labels;  // latent component per row; diagnostics only
};
MixtureDraw draw_mixture(const Design& d, Index n, std::uint64_t seed);

struct HmmDraw {
  Eigen::MatrixXd y;  // n x 3 consecutive outcomes
  Eigen::Matrix<int, Eigen::Dynamic, 3> path;  // latent states; diagnostics only
};
HmmDraw draw_hmm(const Design& d, Index n, std::uint64_t seed);

// --- harness -----------------------------------------------------------------

struct HarnessOptions {
  ContinuousMixtureOptions mixture;  // estimator knobs (CV budget, jadiag)
  std::vector<Index> kappas;         // per-variable truncations; empty = 10 each
  Index quad_nodes = 200;            // Gaussian-kernel rule for the L2 error
  Index jobs = 1;                    // worker threads over replications
  double level = 0.95;               // interval level (coverage runs)
};

struct RmiseCell {
  double pi1 = 0;          // grid point: proportion of the first component
  Index variable = 0;
  Index component = 0;
  double rmise = 0;        // sqrt of the Monte Carlo mean integrated sq. error
  double mc_se = 0;        // delta-method SE of the rmise over replications
  Index reps_ok = 0;
};

struct CoverageCell {
  Index component = 0;
  double percentile = 0;       // decile level of the true emission
  double y = 0;                // evaluation point (true-emission quantile)
  double truth = 0;            // emission density there
  double coverage = 0;         // fraction of intervals covering the truth
  double coverage_oracle = 0;  // infeasible intervals from the empirical SD
  double mean_se = 0;          // mean estimated sigma-hat/sqrt(n)
  double sd_point = 0;         // empirical SD of the point estimates
  double mean_fhat = 0;
  double mean_infeasible = 0;  // true-label series estimator, same truncation
  Index reps_ok = 0;
};

struct HarnessReport {
  std::string kind;  // "rmise" | "coverage"
  Design design;
  Index reps = 0;
  Index n = 0;
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> rep_seeds;       // one per replication, in order
  Index failures = 0;                         // failed replications (skipped)
  std::vector<std::string> failure_messages;  // first few, for the log
  std::vector<RmiseCell> rmise_cells;
  std::vector<CoverageCell> coverage_cells;
};

// Integrated-error experiment over a grid of first-component proportions.
HarnessReport run_rmise(const Design& base, const std::vector<double>& pi1_grid, Index reps,
                        Index n, std::uint64_t seed, const HarnessOptions& opts = {});

// Interval-coverage experiment at the 9 deciles of each emission density.
HarnessReport run_coverage(const Design& chain, Index reps, Index n, std::uint64_t seed,
                           const HarnessOptions& opts = {});

}  // namespace triad
