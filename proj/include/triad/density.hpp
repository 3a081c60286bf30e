#pragma once

// Orthogonal-series estimation of component marginal densities in a
// multivariate finite mixture.  The chain is:
//
//   pair moments of basis vectors  ->  whitening  ->  joint diagonalization
//   ->  per-observation classification weights  ->  weighted Fourier
//   coefficients  ->  series density, CV truncation choice, pointwise SEs.
//
// With one component the weights are identically one and everything collapses
// to the classical orthogonal-series density estimator.

#include <Eigen/Dense>
#include <vector>

#include "triad/basis.hpp"
#include "triad/decompose.hpp"
#include "triad/jointdiag.hpp"
#include "triad/multiway.hpp"

namespace triad {

// Sample mean of the tensor product of per-variable basis vectors: entry
// (k_1, ..., k_q) is the empirical Fourier coefficient of the joint density
// for the basis product phi_{k_1} x ... x phi_{k_q}.
struct MomentArray {
  MultiwayArrayXd values;       // dims = kappas
  Index n = 0;                  // sample size
  BasisKind basis = BasisKind::hermite_function;
  std::vector<Index> kappas;
};

MomentArray moment_array(const Eigen::Ref<const Eigen::MatrixXd>& sample,
                         const BasisSystem& basis, const std::vector<Index>& kappas);

// Per-observation component weights for one direction; omega(m, j) weights
// observation m in every component-j moment of that direction.  The matrices
// q, and the whitening pair inside `route`, tie the weights to the
// decomposition run that produced them.
struct ClassificationWeights {
  Eigen::MatrixXd omega;          // n x r
  Index direction = 0;            // variable whose density the weights serve
  std::vector<Index> part1, part2;  // variable groups forming the pair moments
  std::vector<Index> kappas;
  BasisKind basis = BasisKind::hermite_function;
  WhiteningPair<double> whitening;
  JointDiagResult<double> jd;
  Index n = 0;

  Index rank() const { return omega.cols(); }
};

ClassificationWeights classification_weights(const Eigen::Ref<const Eigen::MatrixXd>& sample,
                                             const BasisSystem& basis,
                                             const std::vector<Index>& kappas, Index r,
                                             Index direction,
                                             std::vector<Index> part1 = {},
                                             std::vector<Index> part2 = {},
                                             const JointDiagOptions& jd_opts = {});

// Weighted sample Fourier coefficient for component j of the weighted
// direction: n^{-1} sum_m omega(m,j) phi_k(Y_im) rho(Y_im).  k may exceed the
// truncation used to build the weights.
double fourier_coefficient(const ClassificationWeights& weights,
                           const Eigen::Ref<const Eigen::MatrixXd>& sample, Index j, Index k);

struct SeriesDensityEstimate {
  Index variable = 0;      // direction i
  Index component = 0;     // j
  Index kappa = 1;
  Eigen::VectorXd coefficients;  // (b_1, ..., b_kappa)
  BasisKind basis = BasisKind::hermite_function;

  double evaluate(double y) const {
    return coefficients.dot(make_basis(basis).eval_vector(kappa, y));
  }
};

SeriesDensityEstimate estimate_density(const ClassificationWeights& weights,
                                       const Eigen::Ref<const Eigen::MatrixXd>& sample, Index j,
                                       Index kappa);

// Truncation selection: minimizes, over kappa in {1..kappa_max},
//   sum_{k<=kappa} [ bhat_k^2 - 2/(n(n-1)) * ((n bhat_k)^2 - t_k) ],
// the sample-split estimate of the L2 risk up to truncation-free terms, where
// t_k is the sum of squared per-observation summands.  Ties go to the
// smallest truncation.
struct CrossValidationResult {
  Index kappa = 1;
  Eigen::VectorXd scores;  // score at every truncation 1..kappa_max
};

CrossValidationResult cross_validate(const ClassificationWeights& weights,
                                     const Eigen::Ref<const Eigen::MatrixXd>& sample, Index j,
                                     Index kappa_max);

// Pointwise standard deviation of the per-observation summands of fhat(y);
// the Gaussian pivot (fhat - f)/(sigma/sqrt(n)) drives the intervals.
double pointwise_se(const ClassificationWeights& weights,
                    const Eigen::Ref<const Eigen::MatrixXd>& sample,
                    const SeriesDensityEstimate& estimate, double y);

struct PointwiseBand {
  double fhat = 0;
  double se = 0;  // sigma-hat, before the 1/sqrt(n) scaling
  double lo = 0;
  double hi = 0;
};

PointwiseBand confidence_interval(const ClassificationWeights& weights,
                                  const Eigen::Ref<const Eigen::MatrixXd>& sample,
                                  const SeriesDensityEstimate& estimate, double y,
                                  double level = 0.95);

}  // namespace triad
