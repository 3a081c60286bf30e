#pragma once

// Orthonormal function systems for series density estimation: Hermite
// functions on the real line and normalized Legendre polynomials on [-1, 1].
// Both are orthonormal against the flat weight rho == 1; rho is kept in the
// interface because the projection formulas are stated against a weight.
//
// Basis functions are indexed from 1, matching the estimator's coefficient
// vectors: coefficient (k-1) in a vector belongs to phi_k.

#include <Eigen/Dense>
#include <functional>

#include "triad/errors.hpp"
#include "triad/multiway.hpp"  // Index

namespace triad {

enum class BasisKind { hermite_function, legendre };

struct Interval {
  double lo;
  double hi;
  bool unbounded;  // true: the whole real line, lo/hi not meaningful
};

// Nodes and weights integrating f over the basis support as sum w_i f(x_i).
// The Hermite-function rule carries modified Gauss-Hermite weights, exact for
// integrands of the form polynomial(y) * exp(-y^2) with degree <= 2n-1 (in
// particular all products phi_j phi_k with j, k <= n); the Legendre rule is
// plain Gauss-Legendre.
struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  double apply(const std::function<double(double)>& f) const;
};

class BasisSystem {
 public:
  static BasisSystem hermite_function();
  static BasisSystem legendre();

  BasisKind kind() const { return kind_; }
  Interval support() const;
  const char* name() const;

  // Weight the system is orthonormal against (identically one here).
  double rho(double y) const;

  // Uniform bound: ||(phi_1(y), ..., phi_kappa(y))|| <= zeta(kappa) for all y
  // in the support.
  double zeta(Index kappa) const;

  double eval(Index k, double y) const;                     // k >= 1
  Eigen::VectorXd eval_vector(Index kappa, double y) const; // (phi_1, ..., phi_kappa)

  QuadratureRule quadrature(Index n) const;

  // Adaptive integration of f over the support: the node count doubles until
  // two successive rules agree to tol (relative to 1 + |integral|).
  double integrate(const std::function<double(double)>& f, double tol = 1e-9, Index n0 = 32,
                   Index n_max = 4096) const;

  // Fourier coefficients of a density-like function: b_k = \int f phi_k rho,
  // all truncations at once, with the adaptive doubling applied to the whole
  // coefficient vector.
  Eigen::VectorXd project(const std::function<double(double)>& f, Index kappa, double tol = 1e-9,
                          Index n0 = 32, Index n_max = 4096) const;

  // Sample version: b_k = mean of phi_k(Y_i) rho(Y_i) over the sample.
  Eigen::VectorXd project(const Eigen::Ref<const Eigen::VectorXd>& sample, Index kappa) const;

 private:
  explicit BasisSystem(BasisKind kind) : kind_(kind) {}
  void check_support(double y) const;

  BasisKind kind_;
};

BasisSystem make_basis(BasisKind kind);

}  // namespace triad
