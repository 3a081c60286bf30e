#pragma once

// Recovery of canonical polyadic structure from multiway arrays.
//
// Pipeline: pick a pivot variable, unfold the array to a three-way array
// (merged part, pivot, merged part), whiten the pair matrix of the merged
// parts, jointly diagonalize the whitened pivot slices, read the pivot factor
// off the eigenvalue profiles, map the diagonalizer back through the
// whitening to get the merged side factors, split those into per-variable
// factors, and refit the weights against the full array by least squares.
//
// The pair matrix is built by summing the array over the pivot axis, i.e. the
// contingency-table reading of a submodel.  For exact models this changes the
// component weights by the dropped columns' sums, which cancels inside the
// whitened similarity, so factor recovery is unaffected; the reported weights
// come from the full-array refit and carry no such distortion.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "triad/errors.hpp"
#include "triad/jointdiag.hpp"
#include "triad/multiway.hpp"

namespace triad {

template <typename Scalar>
struct WhiteningPair {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorType = Eigen::Vector<Scalar, Eigen::Dynamic>;

  MatrixType w1, w2;            // r x d1, r x d2: w1 * A0 * w2' = I_r
  VectorType singular_values;   // full spectrum of A0
  Scalar rank_gap = 0;          // sigma_r - sigma_{r+1} (0 when r exhausts the spectrum)
  MatrixType u, v;              // thin singular bases (d1 x r, d2 x r)

  VectorType sqrt_sigma() const {
    return singular_values.head(u.cols()).cwiseSqrt();
  }
};

// Whitening of a pair matrix: thin SVD A0 = U S V', W1 = S^{-1/2} U',
// W2 = S^{-1/2} V'.  Rejects pair matrices whose r-th singular value is
// negligible relative to the first.
template <typename Scalar>
WhiteningPair<Scalar> whiten(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& a0,
                             Index r, double rel_tol = 1e-10) {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (r <= 0) throw DimensionError("whiten: positive rank required");
  if (a0.rows() < r || a0.cols() < r)
    throw DimensionError("whiten: pair matrix smaller than the requested rank");
  Eigen::BDCSVD<MatrixType> svd(a0, Eigen::ComputeThinU | Eigen::ComputeThinV);
  WhiteningPair<Scalar> out;
  out.singular_values = svd.singularValues();
  const Scalar s1 = out.singular_values(0);
  const Scalar sr = out.singular_values(r - 1);
  const Scalar next = r < out.singular_values.size() ? out.singular_values(r) : Scalar(0);
  out.rank_gap = sr - next;
  if (!(s1 > 0) || sr / s1 < rel_tol)
    throw DeficientRankError(
        "whiten: pair matrix is rank-deficient for the requested rank (sigma_r/sigma_1 = " +
            std::to_string(s1 > 0 ? double(sr / s1) : 0.0) + ")",
        s1 > 0 ? double(sr / s1) : 0.0, double(out.rank_gap));
  out.u = svd.matrixU().leftCols(r);
  out.v = svd.matrixV().leftCols(r);
  const auto inv_sqrt = out.singular_values.head(r).cwiseSqrt().cwiseInverse();
  out.w1 = inv_sqrt.asDiagonal() * out.u.transpose();
  out.w2 = inv_sqrt.asDiagonal() * out.v.transpose();
  return out;
}

// Whitened pivot slices of a three-way array: C_k = W1 * X(:, k, :) * W2'.
template <typename Scalar>
JointDiagProblem<Scalar> eigen_stack(const MultiwayArray<Scalar>& three_way,
                                     const WhiteningPair<Scalar>& wp) {
  if (three_way.order() != 3) throw DimensionError("eigen_stack: three-way array required");
  if (wp.w1.cols() != three_way.dim(0) || wp.w2.cols() != three_way.dim(2))
    throw DimensionError("eigen_stack: whitening does not match the array faces");
  JointDiagProblem<Scalar> p;
  p.matrices.reserve(static_cast<std::size_t>(three_way.dim(1)));
  for (Index k = 0; k < three_way.dim(1); ++k)
    p.matrices.push_back(wp.w1 * pivot_slice(three_way, k) * wp.w2.transpose());
  return p;
}

template <typename Scalar>
struct EigenRouteResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> factor;  // kappa_pivot x r
  JointDiagResult<Scalar> jd;
  WhiteningPair<Scalar> wp;
};

// Eigenvalue-route recovery of the middle-axis factor of a three-way array.
// The pair matrix is the pivot-summed face; row k of the returned factor is
// the eigenvalue profile of slice k.
template <typename Scalar>
EigenRouteResult<Scalar> recover_third_factor(const MultiwayArray<Scalar>& three_way, Index r,
                                              const JointDiagOptions& jd_opts = {},
                                              double rank_rel_tol = 1e-10) {
  if (three_way.order() != 3) throw DimensionError("recover_third_factor: three-way array required");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> a0 =
      matricize(marginal(three_way, {0, 2}), {0}, {1});
  EigenRouteResult<Scalar> out;
  out.wp = whiten(a0, r, rank_rel_tol);
  out.jd = joint_diagonalize(eigen_stack(three_way, out.wp), jd_opts);
  out.factor = out.jd.eigenvalue_matrix();
  return out;
}

// Least squares against a design matrix: the weight-recovery primitive.
// With X holding one-dimensional submodel factors (or the full Khatri-Rao
// matrix) and y the matching flattened array, this is (X'X)^{-1} X' y.
template <typename Scalar>
Eigen::Vector<Scalar, Eigen::Dynamic> recover_weights(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& x,
    const Eigen::Vector<Scalar, Eigen::Dynamic>& y) {
  if (x.rows() != y.size()) throw DimensionError("recover_weights: row count mismatch");
  if (x.rows() < x.cols()) throw DimensionError("recover_weights: fewer rows than unknowns");
  Eigen::ColPivHouseholderQR<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> qr(x);
  qr.setThreshold(1e-12);
  if (qr.rank() < x.cols())
    throw SingularMatrixError("recover_weights: design matrix is rank-deficient");
  return qr.solve(y);
}

struct DecomposeOptions {
  Index pivot = 0;                 // variable placed on the middle axis
  std::vector<Index> part1, part2; // explicit partition; empty = balanced default
  JointDiagOptions jd;
  double rank_rel_tol = 1e-10;
  double split_rank_one_tol = 1e-2;  // warn when a merged column is not rank-one
};

template <typename Scalar>
struct DecomposeReport {
  CpDecomposition<Scalar> decomposition;
  Scalar criterion = 0;                  // joint diagonalization objective at the solution
  Scalar residual = 0;                   // relative Frobenius reconstruction error
  Eigen::Vector<Scalar, Eigen::Dynamic> singular_values;
  Scalar rank_gap = 0;
  bool jd_converged = true;
  bool degenerate = false;
  std::vector<std::string> warnings;
};

namespace detail {

// Balanced bipartition of labeled sizes by log-product, subject to both
// merged products being at least r.  Deterministic: the first bitmask
// attaining the best balance wins; exactly two labels split in given order.
inline void balanced_bipartition(const std::vector<Index>& labels,
                                 const std::vector<Index>& sizes, Index r,
                                 std::vector<Index>& part1, std::vector<Index>& part2) {
  const std::size_t m = labels.size();
  if (m != sizes.size()) throw DimensionError("bipartition: label/size mismatch");
  if (m < 2) throw DimensionError("bipartition: at least two axes required");
  part1.clear();
  part2.clear();
  if (m == 2) {  // pinned orientation for three-way inputs
    part1 = {labels[0]};
    part2 = {labels[1]};
  } else {
    double best = 1e300;
    unsigned best_mask = 0;
    for (unsigned mask = 1; mask + 1 < (1u << m); ++mask) {
      double l1 = 0, l2 = 0, p1 = 1, p2 = 1;
      for (std::size_t i = 0; i < m; ++i) {
        const double d = static_cast<double>(sizes[i]);
        if (mask & (1u << i)) {
          l1 += std::log(d);
          p1 *= d;
        } else {
          l2 += std::log(d);
          p2 *= d;
        }
      }
      if (p1 < static_cast<double>(r) || p2 < static_cast<double>(r)) continue;
      if (std::abs(l1 - l2) < best - 1e-12) {
        best = std::abs(l1 - l2);
        best_mask = mask;
      }
    }
    if (best_mask == 0)
      throw DimensionError("bipartition: no split supports the requested rank");
    for (std::size_t i = 0; i < m; ++i)
      (best_mask & (1u << i) ? part1 : part2).push_back(labels[i]);
  }
  Index p1 = 1, p2 = 1;
  for (std::size_t i = 0; i < m; ++i) {
    const bool in1 = std::find(part1.begin(), part1.end(), labels[i]) != part1.end();
    (in1 ? p1 : p2) *= sizes[i];
  }
  if (p1 < r || p2 < r)
    throw DimensionError("bipartition: split too small for the requested rank");
}

template <typename Scalar>
void default_partition(const MultiwayArray<Scalar>& x, Index pivot, Index r,
                       std::vector<Index>& part1, std::vector<Index>& part2) {
  std::vector<Index> rest, sizes;
  for (Index i = 0; i < x.order(); ++i)
    if (i != pivot) {
      rest.push_back(i);
      sizes.push_back(x.dim(i));
    }
  if (rest.size() < 2) throw DimensionError("decompose: at least three axes required");
  balanced_bipartition(rest, sizes, r, part1, part2);
}

// Split a merged Khatri-Rao factor matrix into per-axis factors by repeated
// best rank-one extraction.  Column scales distribute arbitrarily across the
// split; callers renormalize.  `worst_ratio` reports the largest second-to-
// first singular value ratio seen, as a rank-one quality diagnostic.
template <typename Scalar>
std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> split_khatri_rao(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& merged,
    const std::vector<Index>& dims, Scalar& worst_ratio) {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (dims.size() == 1) {
    if (merged.rows() != dims[0]) throw DimensionError("split_khatri_rao: dimension mismatch");
    return {merged};
  }
  const Index first = dims[0];
  Index rest = 1;
  for (std::size_t i = 1; i < dims.size(); ++i) rest *= dims[i];
  if (merged.rows() != first * rest) throw DimensionError("split_khatri_rao: dimension mismatch");
  const Index r = merged.cols();
  MatrixType head(first, r), tail(rest, r);
  for (Index j = 0; j < r; ++j) {
    MatrixType m(first, rest);
    for (Index a = 0; a < first; ++a)
      for (Index b = 0; b < rest; ++b) m(a, b) = merged(a * rest + b, j);
    Eigen::JacobiSVD<MatrixType> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Scalar s0 = svd.singularValues()(0);
    if (!(s0 > 0)) throw SingularMatrixError("split_khatri_rao: zero merged column");
    if (svd.singularValues().size() > 1)
      worst_ratio = std::max(worst_ratio, svd.singularValues()(1) / s0);
    const Scalar scale = std::sqrt(s0);
    head.col(j) = svd.matrixU().col(0) * scale;
    tail.col(j) = svd.matrixV().col(0) * scale;
  }
  std::vector<Index> rest_dims(dims.begin() + 1, dims.end());
  auto tail_split = split_khatri_rao(tail, rest_dims, worst_ratio);
  std::vector<MatrixType> out;
  out.push_back(head);
  for (auto& t : tail_split) out.push_back(std::move(t));
  return out;
}

}  // namespace detail

// Normalize every factor column to unit norm with its largest-magnitude entry
// positive, compensating nothing: the weights are refit afterwards.
template <typename Scalar>
void apply_scale_convention(CpDecomposition<Scalar>& dec) {
  for (auto& f : dec.factors) {
    for (Index j = 0; j < f.cols(); ++j) {
      const Scalar nrm = f.col(j).norm();
      if (!(nrm > 0)) throw SingularMatrixError("scale convention: zero factor column");
      f.col(j) /= nrm;
      Index imax = 0;
      f.col(j).cwiseAbs().maxCoeff(&imax);
      if (f.col(j)(imax) < 0) f.col(j) = -f.col(j);
    }
  }
}

// Full factor and weight recovery from a multiway array (contingency-table
// submodel reading; see the header comment).
template <typename Scalar>
DecomposeReport<Scalar> recover_all_factors(const MultiwayArray<Scalar>& x, Index r,
                                            DecomposeOptions opts = {}) {
  const Index q = x.order();
  if (q < 3) throw DimensionError("decompose: at least three axes required");
  if (opts.pivot < 0 || opts.pivot >= q) throw DimensionError("decompose: pivot out of range");
  if (opts.part1.empty() != opts.part2.empty())
    throw DimensionError("decompose: provide both parts of the partition or neither");
  if (opts.part1.empty())
    detail::default_partition(x, opts.pivot, r, opts.part1, opts.part2);

  auto u = unfold_to_three(x, opts.pivot, opts.part1, opts.part2);

  DecomposeReport<Scalar> report;
  auto route = recover_third_factor(u, r, opts.jd, opts.rank_rel_tol);
  report.criterion = route.jd.criterion;
  report.singular_values = route.wp.singular_values;
  report.rank_gap = route.wp.rank_gap;
  report.jd_converged = route.jd.converged;
  report.degenerate = route.jd.degenerate;
  if (!route.jd.converged)
    report.warnings.push_back("joint diagonalization stopped at the sweep budget");
  if (route.jd.degenerate)
    report.warnings.push_back(
        "eigenvalue profiles nearly coincide; component separation is weakly identified");
  {
    const Scalar s1 = route.wp.singular_values(0);
    if (route.wp.rank_gap < 1e-6 * s1)
      report.warnings.push_back("pair-matrix rank gap is small; the rank choice is borderline");
  }

  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const MatrixType& qhat = route.jd.Q;
  MatrixType qinv_t = qhat.inverse().transpose();
  const auto sqrt_sigma = route.wp.sqrt_sigma();
  MatrixType side1 = route.wp.u * sqrt_sigma.asDiagonal() * qhat;
  MatrixType side2 = route.wp.v * sqrt_sigma.asDiagonal() * qinv_t;

  std::vector<Index> dims1, dims2;
  for (Index ax : opts.part1) dims1.push_back(x.dim(ax));
  for (Index ax : opts.part2) dims2.push_back(x.dim(ax));
  Scalar worst_ratio = 0;
  auto split1 = detail::split_khatri_rao(side1, dims1, worst_ratio);
  auto split2 = detail::split_khatri_rao(side2, dims2, worst_ratio);
  if (worst_ratio > opts.split_rank_one_tol)
    report.warnings.push_back("merged factors deviate from rank-one structure (ratio " +
                              std::to_string(double(worst_ratio)) + ")");

  CpDecomposition<Scalar>& dec = report.decomposition;
  dec.factors.resize(static_cast<std::size_t>(q));
  dec.factors[static_cast<std::size_t>(opts.pivot)] = route.factor;
  for (std::size_t i = 0; i < opts.part1.size(); ++i)
    dec.factors[static_cast<std::size_t>(opts.part1[i])] = split1[i];
  for (std::size_t i = 0; i < opts.part2.size(); ++i)
    dec.factors[static_cast<std::size_t>(opts.part2[i])] = split2[i];
  dec.weights = Eigen::Vector<Scalar, Eigen::Dynamic>::Ones(r);

  apply_scale_convention(dec);
  dec.weights = recover_weights<Scalar>(khatri_rao_cols<Scalar>(dec.factors), x.values());

  const Scalar denom = std::max(x.frobenius_norm(), Scalar(1e-300));
  report.residual = (compose(dec).values() - x.values()).norm() / denom;
  return report;
}

template <typename Scalar>
struct FactorMatch {
  std::vector<Index> perm;   // perm[j] = column of the candidate matched to reference column j
  std::vector<int> signs;    // sign applied to the matched candidate column
  Scalar cost = 0;           // sum of squared distances between unit columns after matching
};

// Match candidate factor columns to reference columns up to sign, comparing
// unit-normalized columns.  Exhaustive over permutations for r <= 8, greedy
// beyond that.
template <typename Scalar>
FactorMatch<Scalar> match_factor_columns(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& candidate,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& reference) {
  if (candidate.rows() != reference.rows() || candidate.cols() != reference.cols())
    throw DimensionError("match_factor_columns: shape mismatch");
  const Index r = candidate.cols();
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  MatrixType cn = candidate, rn = reference;
  for (Index j = 0; j < r; ++j) {
    const Scalar a = cn.col(j).norm(), b = rn.col(j).norm();
    if (a > 0) cn.col(j) /= a;
    if (b > 0) rn.col(j) /= b;
  }
  // Pairwise cost under the best sign: 2 - 2|<c, ref>|.
  MatrixType dot = rn.transpose() * cn;
  FactorMatch<Scalar> best;
  best.cost = std::numeric_limits<Scalar>::max();
  if (r <= 8) {
    std::vector<Index> perm(static_cast<std::size_t>(r));
    for (Index j = 0; j < r; ++j) perm[static_cast<std::size_t>(j)] = j;
    do {
      Scalar cost = 0;
      for (Index j = 0; j < r; ++j)
        cost += 2 - 2 * std::abs(dot(j, perm[static_cast<std::size_t>(j)]));
      if (cost < best.cost) {
        best.cost = cost;
        best.perm = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    std::vector<char> used(static_cast<std::size_t>(r), 0);
    best.perm.assign(static_cast<std::size_t>(r), 0);
    best.cost = 0;
    for (Index j = 0; j < r; ++j) {
      Index arg = -1;
      Scalar bv = -1;
      for (Index c = 0; c < r; ++c) {
        if (used[static_cast<std::size_t>(c)]) continue;
        if (std::abs(dot(j, c)) > bv) {
          bv = std::abs(dot(j, c));
          arg = c;
        }
      }
      used[static_cast<std::size_t>(arg)] = 1;
      best.perm[static_cast<std::size_t>(j)] = arg;
      best.cost += 2 - 2 * bv;
    }
  }
  best.signs.assign(static_cast<std::size_t>(r), 1);
  for (Index j = 0; j < r; ++j)
    if (dot(j, best.perm[static_cast<std::size_t>(j)]) < 0) best.signs[static_cast<std::size_t>(j)] = -1;
  return best;
}

using DecomposeReportXd = DecomposeReport<double>;
using WhiteningPairXd = WhiteningPair<double>;

}  // namespace triad
