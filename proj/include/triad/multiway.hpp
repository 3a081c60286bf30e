#pragma once

// Dense multiway (q-way) arrays and their canonical polyadic algebra:
// rank-one composition, marginal/submodel arrays, Khatri-Rao products,
// unfoldings to three-way arrays, and slices.
//
// Storage is axis-major with the LAST axis fastest (row-major / C order),
// fixed once here and relied on everywhere: the linearization of a rank-one
// array equals the Kronecker product of its factor columns in variable order.
// Merged axes are always kept in ascending variable order, last fastest, so
// unfoldings and matricized marginals agree without reshuffling.
//
// Axis indices are 0-based throughout the library API; the CLI layer converts
// from the 1-based convention used in docs and error messages there.

#include <Eigen/Dense>
#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "triad/errors.hpp"

namespace triad {

using Eigen::Index;

template <typename Scalar>
class MultiwayArray {
 public:
  using VectorType = Eigen::Vector<Scalar, Eigen::Dynamic>;

  MultiwayArray() = default;

  explicit MultiwayArray(std::vector<Index> dims)
      : dims_(std::move(dims)), values_(VectorType::Zero(check_dims(dims_))) {
    init_strides();
  }

  MultiwayArray(std::vector<Index> dims, VectorType values)
      : dims_(std::move(dims)), values_(std::move(values)) {
    if (values_.size() != check_dims(dims_))
      throw DimensionError("MultiwayArray: value count does not match dims product");
    init_strides();
  }

  Index order() const { return static_cast<Index>(dims_.size()); }
  Index dim(Index axis) const { return dims_.at(static_cast<std::size_t>(axis)); }
  const std::vector<Index>& dims() const { return dims_; }
  Index size() const { return values_.size(); }

  const VectorType& values() const { return values_; }
  VectorType& values() { return values_; }

  Index offset(const std::vector<Index>& idx) const {
    if (idx.size() != dims_.size())
      throw DimensionError("MultiwayArray: index arity does not match order");
    Index off = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= dims_[i])
        throw DimensionError("MultiwayArray: index out of range");
      off += idx[i] * strides_[i];
    }
    return off;
  }

  Scalar& at(const std::vector<Index>& idx) { return values_(offset(idx)); }
  Scalar at(const std::vector<Index>& idx) const { return values_(offset(idx)); }

  template <typename... I>
  Scalar& operator()(I... idx) {
    return values_(offset({static_cast<Index>(idx)...}));
  }
  template <typename... I>
  Scalar operator()(I... idx) const {
    return values_(offset({static_cast<Index>(idx)...}));
  }

  // Decode a linear offset into the multi-index it addresses.
  std::vector<Index> unravel(Index off) const {
    std::vector<Index> idx(dims_.size());
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      idx[i] = off / strides_[i];
      off -= idx[i] * strides_[i];
    }
    return idx;
  }

  Scalar frobenius_norm() const { return values_.norm(); }

 private:
  static Index check_dims(const std::vector<Index>& dims) {
    if (dims.empty()) throw DimensionError("MultiwayArray: at least one axis required");
    Index total = 1;
    for (Index d : dims) {
      if (d <= 0) throw DimensionError("MultiwayArray: axis lengths must be positive");
      total *= d;
    }
    return total;
  }

  void init_strides() {
    strides_.assign(dims_.size(), 1);
    for (std::size_t i = dims_.size() - 1; i-- > 0;)
      strides_[i] = strides_[i + 1] * dims_[i + 1];
  }

  std::vector<Index> dims_;
  std::vector<Index> strides_;
  VectorType values_;
};

// A weighted sum of rank-one arrays: factors[i] is kappa_i x r, column j of
// each factor belonging to component j, plus a length-r weight vector.
template <typename Scalar>
struct CpDecomposition {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorType = Eigen::Vector<Scalar, Eigen::Dynamic>;

  std::vector<MatrixType> factors;
  VectorType weights;

  Index order() const { return static_cast<Index>(factors.size()); }
  Index rank() const { return weights.size(); }

  void validate() const {
    if (factors.empty()) throw DimensionError("CpDecomposition: no factors");
    const Index r = weights.size();
    if (r <= 0) throw DimensionError("CpDecomposition: empty weight vector");
    for (const auto& f : factors) {
      if (f.cols() != r)
        throw DimensionError("CpDecomposition: factor column count differs from rank");
      if (f.rows() <= 0) throw DimensionError("CpDecomposition: empty factor");
    }
  }

  std::vector<Index> dims() const {
    std::vector<Index> d;
    d.reserve(factors.size());
    for (const auto& f : factors) d.push_back(f.rows());
    return d;
  }
};

// Khatri-Rao product of vectors: the Kronecker product in the given order,
// so that it equals the linearization of the rank-one array they span.
template <typename Scalar>
Eigen::Vector<Scalar, Eigen::Dynamic> khatri_rao(
    const std::vector<Eigen::Vector<Scalar, Eigen::Dynamic>>& vs) {
  if (vs.empty()) throw DimensionError("khatri_rao: no vectors");
  Eigen::Vector<Scalar, Eigen::Dynamic> out = vs.front();
  for (std::size_t i = 1; i < vs.size(); ++i) {
    Eigen::Vector<Scalar, Eigen::Dynamic> next(out.size() * vs[i].size());
    for (Index a = 0; a < out.size(); ++a)
      next.segment(a * vs[i].size(), vs[i].size()) = out(a) * vs[i];
    out.swap(next);
  }
  return out;
}

// Columnwise Khatri-Rao of factor matrices (all with r columns): column j of
// the result is the Khatri-Rao product of the j-th columns.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> khatri_rao_cols(
    const std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& ms) {
  if (ms.empty()) throw DimensionError("khatri_rao_cols: no matrices");
  const Index r = ms.front().cols();
  Index rows = 1;
  for (const auto& m : ms) {
    if (m.cols() != r) throw DimensionError("khatri_rao_cols: column counts differ");
    rows *= m.rows();
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(rows, r);
  for (Index j = 0; j < r; ++j) {
    std::vector<Eigen::Vector<Scalar, Eigen::Dynamic>> cols;
    cols.reserve(ms.size());
    for (const auto& m : ms) cols.push_back(m.col(j));
    out.col(j) = khatri_rao<Scalar>(cols);
  }
  return out;
}

// Materialize the weighted sum of rank-one arrays.
template <typename Scalar>
MultiwayArray<Scalar> compose(const CpDecomposition<Scalar>& dec) {
  dec.validate();
  auto kr = khatri_rao_cols<Scalar>(dec.factors);
  return MultiwayArray<Scalar>(dec.dims(), kr * dec.weights);
}

namespace detail {

inline void check_axes_subset(const std::vector<Index>& axes, Index q, const char* who) {
  if (axes.empty()) throw DimensionError(std::string(who) + ": empty axis set");
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] < 0 || axes[i] >= q)
      throw DimensionError(std::string(who) + ": axis out of range");
    if (i > 0 && axes[i] <= axes[i - 1])
      throw DimensionError(std::string(who) + ": axes must be strictly ascending");
  }
}

}  // namespace detail

// Model-side submodel: keep only the factors of the listed axes (strictly
// ascending), same weights.
template <typename Scalar>
MultiwayArray<Scalar> submodel(const CpDecomposition<Scalar>& dec,
                               const std::vector<Index>& keep) {
  dec.validate();
  detail::check_axes_subset(keep, dec.order(), "submodel");
  CpDecomposition<Scalar> sub;
  sub.weights = dec.weights;
  for (Index a : keep) sub.factors.push_back(dec.factors[static_cast<std::size_t>(a)]);
  return compose(sub);
}

// Data-side submodel for contingency-table-like arrays: sum over the axes
// not listed in `keep` (strictly ascending).
template <typename Scalar>
MultiwayArray<Scalar> marginal(const MultiwayArray<Scalar>& a,
                               const std::vector<Index>& keep) {
  detail::check_axes_subset(keep, a.order(), "marginal");
  std::vector<Index> out_dims;
  out_dims.reserve(keep.size());
  for (Index ax : keep) out_dims.push_back(a.dim(ax));
  MultiwayArray<Scalar> out(out_dims);
  // Strides of the output multi-index contributed by each kept input axis.
  std::vector<Index> contrib(static_cast<std::size_t>(a.order()), -1);
  Index stride = 1;
  for (std::size_t i = keep.size(); i-- > 0;) {
    contrib[static_cast<std::size_t>(keep[i])] = stride;
    stride *= a.dim(keep[i]);
  }
  for (Index off = 0; off < a.size(); ++off) {
    const auto idx = a.unravel(off);
    Index g = 0;
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (contrib[i] >= 0) g += idx[i] * contrib[i];
    out.values()(g) += a.values()(off);
  }
  return out;
}

// Reorganize a q-way array into a three-way array (merged part1, pivot,
// merged part2).  part1 and part2 are strictly ascending, disjoint, exclude
// the pivot, and together with it cover all axes.  Merged indices run
// lexicographically with the last listed axis fastest, matching the
// Khatri-Rao order of the corresponding factor columns.
template <typename Scalar>
MultiwayArray<Scalar> unfold_to_three(const MultiwayArray<Scalar>& a, Index pivot,
                                      const std::vector<Index>& part1,
                                      const std::vector<Index>& part2) {
  const Index q = a.order();
  if (pivot < 0 || pivot >= q) throw DimensionError("unfold_to_three: pivot out of range");
  detail::check_axes_subset(part1, q, "unfold_to_three");
  detail::check_axes_subset(part2, q, "unfold_to_three");
  std::vector<char> seen(static_cast<std::size_t>(q), 0);
  seen[static_cast<std::size_t>(pivot)] = 1;
  for (Index ax : part1) {
    if (seen[static_cast<std::size_t>(ax)]++)
      throw DimensionError("unfold_to_three: axis reused across parts");
  }
  for (Index ax : part2) {
    if (seen[static_cast<std::size_t>(ax)]++)
      throw DimensionError("unfold_to_three: axis reused across parts");
  }
  if (std::size_t(q) != part1.size() + part2.size() + 1)
    throw DimensionError("unfold_to_three: parts plus pivot must cover all axes");

  Index d1 = 1, d2 = 1;
  for (Index ax : part1) d1 *= a.dim(ax);
  for (Index ax : part2) d2 *= a.dim(ax);
  MultiwayArray<Scalar> out({d1, a.dim(pivot), d2});

  std::vector<Index> c1(static_cast<std::size_t>(q), 0), c2(static_cast<std::size_t>(q), 0);
  Index s = 1;
  for (std::size_t i = part1.size(); i-- > 0;) {
    c1[static_cast<std::size_t>(part1[i])] = s;
    s *= a.dim(part1[i]);
  }
  s = 1;
  for (std::size_t i = part2.size(); i-- > 0;) {
    c2[static_cast<std::size_t>(part2[i])] = s;
    s *= a.dim(part2[i]);
  }
  for (Index off = 0; off < a.size(); ++off) {
    const auto idx = a.unravel(off);
    Index g1 = 0, g2 = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      g1 += idx[i] * c1[i];
      g2 += idx[i] * c2[i];
    }
    out(g1, idx[static_cast<std::size_t>(pivot)], g2) = a.values()(off);
  }
  return out;
}

// Flatten to a matrix with rows indexed by `row_axes` and columns by
// `col_axes` (each strictly ascending, together covering all axes).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> matricize(
    const MultiwayArray<Scalar>& a, const std::vector<Index>& row_axes,
    const std::vector<Index>& col_axes) {
  const Index q = a.order();
  detail::check_axes_subset(row_axes, q, "matricize");
  detail::check_axes_subset(col_axes, q, "matricize");
  if (std::size_t(q) != row_axes.size() + col_axes.size())
    throw DimensionError("matricize: axis sets must partition the axes");
  std::vector<char> seen(static_cast<std::size_t>(q), 0);
  for (Index ax : row_axes) seen[static_cast<std::size_t>(ax)]++;
  for (Index ax : col_axes)
    if (seen[static_cast<std::size_t>(ax)]++)
      throw DimensionError("matricize: axis reused");

  Index nr = 1, nc = 1;
  for (Index ax : row_axes) nr *= a.dim(ax);
  for (Index ax : col_axes) nc *= a.dim(ax);
  std::vector<Index> cr(static_cast<std::size_t>(q), 0), cc(static_cast<std::size_t>(q), 0);
  Index s = 1;
  for (std::size_t i = row_axes.size(); i-- > 0;) {
    cr[static_cast<std::size_t>(row_axes[i])] = s;
    s *= a.dim(row_axes[i]);
  }
  s = 1;
  for (std::size_t i = col_axes.size(); i-- > 0;) {
    cc[static_cast<std::size_t>(col_axes[i])] = s;
    s *= a.dim(col_axes[i]);
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(nr, nc);
  for (Index off = 0; off < a.size(); ++off) {
    const auto idx = a.unravel(off);
    Index gr = 0, gc = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      gr += idx[i] * cr[i];
      gc += idx[i] * cc[i];
    }
    out(gr, gc) = a.values()(off);
  }
  return out;
}

// Fix one axis at position k and drop it.
template <typename Scalar>
MultiwayArray<Scalar> slice_axis(const MultiwayArray<Scalar>& a, Index axis, Index k) {
  const Index q = a.order();
  if (axis < 0 || axis >= q) throw DimensionError("slice_axis: axis out of range");
  if (k < 0 || k >= a.dim(axis)) throw DimensionError("slice_axis: position out of range");
  if (q == 1) {
    return MultiwayArray<Scalar>({1},
                                 Eigen::Vector<Scalar, Eigen::Dynamic>::Constant(1, a.values()(k)));
  }
  std::vector<Index> out_dims;
  out_dims.reserve(static_cast<std::size_t>(q - 1));
  for (Index i = 0; i < q; ++i)
    if (i != axis) out_dims.push_back(a.dim(i));
  MultiwayArray<Scalar> out(out_dims);
  Index pos = 0;
  for (Index off = 0; off < a.size(); ++off) {
    const auto idx = a.unravel(off);
    if (idx[static_cast<std::size_t>(axis)] == k) out.values()(pos++) = a.values()(off);
  }
  return out;
}

// Third-axis slice of a three-way array, as the d1 x d2 matrix it addresses.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> slice(const MultiwayArray<Scalar>& a,
                                                            Index k) {
  if (a.order() != 3) throw DimensionError("slice: three-way array required");
  if (k < 0 || k >= a.dim(2)) throw DimensionError("slice: position out of range");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m(a.dim(0), a.dim(1));
  for (Index i = 0; i < a.dim(0); ++i)
    for (Index j = 0; j < a.dim(1); ++j) m(i, j) = a(i, j, k);
  return m;
}

// Middle-axis slice of a three-way array: the d1 x d3 matrix at pivot level k.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> pivot_slice(
    const MultiwayArray<Scalar>& a, Index k) {
  if (a.order() != 3) throw DimensionError("pivot_slice: three-way array required");
  if (k < 0 || k >= a.dim(1)) throw DimensionError("pivot_slice: position out of range");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m(a.dim(0), a.dim(2));
  for (Index i = 0; i < a.dim(0); ++i)
    for (Index j = 0; j < a.dim(2); ++j) m(i, j) = a(i, k, j);
  return m;
}

using MultiwayArrayXd = MultiwayArray<double>;
using CpDecompositionXd = CpDecomposition<double>;

}  // namespace triad
