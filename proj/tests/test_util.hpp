#pragma once

// Shared helpers for the test suites: seeded random model builders and
// independent brute-force oracles that avoid the library's fast paths.

#include <Eigen/Dense>
#include <vector>

#include "triad/multiway.hpp"
#include "triad/rng.hpp"

namespace testutil {

inline Eigen::MatrixXd random_matrix(triad::Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

// Random decomposition with well-separated columns; weights positive.
// `stochastic` makes every factor column a probability vector and the
// weights a probability vector, i.e. a valid contingency-table model.
inline triad::CpDecompositionXd random_cp(triad::Rng& rng, const std::vector<Eigen::Index>& dims,
                                          Eigen::Index r, bool stochastic = false) {
  triad::CpDecompositionXd dec;
  for (Eigen::Index d : dims) {
    Eigen::MatrixXd f(d, r);
    for (Eigen::Index j = 0; j < r; ++j)
      for (Eigen::Index i = 0; i < d; ++i)
        f(i, j) = stochastic ? 0.05 + rng.uniform() : rng.normal();
    if (stochastic)
      for (Eigen::Index j = 0; j < r; ++j) f.col(j) /= f.col(j).sum();
    dec.factors.push_back(f);
  }
  dec.weights.resize(r);
  for (Eigen::Index j = 0; j < r; ++j) dec.weights(j) = 0.2 + rng.uniform();
  if (stochastic) dec.weights /= dec.weights.sum();
  return dec;
}

// Cell-by-cell composition: sum over components of weight times the product
// of factor entries.  Deliberately ignorant of Khatri-Rao identities.
inline triad::MultiwayArrayXd brute_force_compose(const triad::CpDecompositionXd& dec) {
  triad::MultiwayArrayXd out(dec.dims());
  for (Eigen::Index off = 0; off < out.size(); ++off) {
    const auto idx = out.unravel(off);
    double cell = 0.0;
    for (Eigen::Index j = 0; j < dec.rank(); ++j) {
      double term = dec.weights(j);
      for (std::size_t i = 0; i < idx.size(); ++i)
        term *= dec.factors[i](idx[i], static_cast<Eigen::Index>(j));
      cell += term;
    }
    out.values()(off) = cell;
  }
  return out;
}

inline double max_abs_diff(const triad::MultiwayArrayXd& a, const triad::MultiwayArrayXd& b) {
  return (a.values() - b.values()).cwiseAbs().maxCoeff();
}

}  // namespace testutil
