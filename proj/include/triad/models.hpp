#pragma once

// Model-level estimators built on the decomposition and density layers:
// discrete multivariate mixtures fit from contingency tables, continuous
// mixtures fit through the classification-weight pipeline, and hidden Markov
// models recovered from a stationary triple of observations.
//
// Estimators return components in the order the decomposition produced them;
// align_labels applies the deterministic convention (ascending label key).

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "triad/basis.hpp"
#include "triad/decompose.hpp"
#include "triad/density.hpp"
#include "triad/multiway.hpp"

namespace triad {

// Euclidean projection onto the probability simplex; exact on valid inputs.
Eigen::VectorXd simplex_project(const Eigen::Ref<const Eigen::VectorXd>& v);

struct DiscreteMixtureOptions {
  DecomposeOptions decompose;
  double clip_warn_bound = 0.05;  // warn when a column loses more relative mass
};

struct DiscreteMixtureEstimate {
  std::vector<Eigen::MatrixXd> p;  // per-variable kappa_i x r, column-stochastic
  Eigen::VectorXd pi;
  double residual = 0;       // relative reconstruction error of the repaired model
  double rank_gap = 0;
  double clipped_mass = 0;   // worst relative mass removed by negativity clipping
  Eigen::VectorXd label_keys;  // first-variable conditional means
  std::vector<std::string> warnings;

  Index rank() const { return pi.size(); }
};

DiscreteMixtureEstimate fit_discrete_mixture(const MultiwayArrayXd& table, Index r,
                                             const DiscreteMixtureOptions& opts = {});

struct ContinuousMixtureOptions {
  JointDiagOptions jd;
  Index cv_budget = 10;   // truncation search bound; ignored when fixed_kappa > 0
  Index fixed_kappa = 0;  // when positive, use this truncation everywhere
};

struct ContinuousMixtureEstimate {
  // densities[i][j]: series estimate of the variable-i density of component j.
  std::vector<std::vector<SeriesDensityEstimate>> densities;
  // Full-truncation coefficient matrices (kappa_i x r), labels aligned across
  // directions; column j holds the variable-i Fourier coefficients of
  // component j.
  std::vector<Eigen::MatrixXd> coefficient_factors;
  Eigen::VectorXd pi;
  std::vector<ClassificationWeights> weights;  // per direction, columns aligned
  Eigen::VectorXd label_keys;  // weighted first-variable sample means
  std::vector<std::string> warnings;

  Index rank() const { return pi.size(); }
};

ContinuousMixtureEstimate fit_continuous_mixture(const Eigen::Ref<const Eigen::MatrixXd>& sample,
                                                 Index r, const BasisSystem& basis,
                                                 const std::vector<Index>& kappas,
                                                 const ContinuousMixtureOptions& opts = {});

// Hidden Markov model estimate from a stationary observation triple.  The
// middle observation indexes the conditioning state: its factor carries the
// emission law, the outer factors are one transition step away.  In the
// discrete case a/p/b hold conditional probability columns; in the continuous
// case they hold Fourier-coefficient columns and `emissions` holds the series
// estimates of the per-state emission densities.
struct HmmEstimate {
  Eigen::MatrixXd a, p, b;  // per-direction factors, shared column labels
  Eigen::MatrixXd k;        // row-stochastic transition matrix
  Eigen::VectorXd pi;       // stationary distribution
  double route_gap = 0;         // transition recovered from b-route vs a-route
  double stationarity_gap = 0;  // l1 gap of pi' k = pi'
  double residual = 0;          // discrete case only
  double rank_gap = 0;
  double clipped_mass = 0;      // discrete case only
  std::vector<SeriesDensityEstimate> emissions;  // continuous case only
  // Continuous case only: the middle-direction weights behind `emissions`,
  // kept so pointwise standard errors can be formed against the sample.
  ClassificationWeights emission_weights;
  Eigen::VectorXd label_keys;   // emission means
  std::vector<std::string> warnings;

  Index rank() const { return pi.size(); }
};

struct HmmOptions {
  DiscreteMixtureOptions discrete;
  ContinuousMixtureOptions continuous;
  double row_projection_warn_bound = 0.05;
};

HmmEstimate fit_hmm(const MultiwayArrayXd& table, Index r, const HmmOptions& opts = {});

HmmEstimate fit_hmm(const Eigen::Ref<const Eigen::MatrixXd>& sample, Index r,
                    const BasisSystem& basis, const std::vector<Index>& kappas,
                    const HmmOptions& opts = {});

// Deterministic relabeling: components sorted by ascending label key.  Ties
// within 1e-12 leave the incoming order and append a warning.
DiscreteMixtureEstimate align_labels(const DiscreteMixtureEstimate& e);
ContinuousMixtureEstimate align_labels(const ContinuousMixtureEstimate& e);
HmmEstimate align_labels(const HmmEstimate& e);

}  // namespace triad
