#pragma once

// Nonorthogonal joint approximate diagonalization.
//
// Given square matrices C_1..C_kappa, find an invertible Q minimizing the sum
// of squared off-diagonal entries of Q^{-1} C_k Q, over the constraint set of
// unit-determinant matrices with equal column norms.  The minimizer is unique
// only up to column permutation and column sign/scale changes that respect the
// constraints; callers align solutions with align_columns when comparing.
//
// The solver is a Jacobi-like coordinate descent: for every column pair it
// applies one optimal lower-triangular shear, one optimal upper-triangular
// shear, and one optimal plane rotation, each available in closed form (the
// shear objective is a quartic polynomial in the shear coefficient, the
// rotation objective is a quadratic form on the unit circle).  Every update
// weakly decreases the criterion; after each sweep the iterate is pulled back
// onto the constraint set and the transformed stack is recomputed from scratch
// to stop roundoff drift.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "triad/errors.hpp"
#include "triad/numeric.hpp"
#include "triad/rng.hpp"

namespace triad {

using Eigen::Index;

template <typename Scalar>
struct JointDiagProblem {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  std::vector<MatrixType> matrices;

  Index r() const { return matrices.empty() ? 0 : matrices.front().rows(); }

  void validate() const {
    if (matrices.empty()) throw DimensionError("JointDiagProblem: empty stack");
    const Index n = matrices.front().rows();
    for (const auto& m : matrices)
      if (m.rows() != n || m.cols() != n)
        throw DimensionError("JointDiagProblem: matrices must be square with equal size");
  }
};

struct JointDiagOptions {
  double rel_tol = 1e-12;       // stop when the criterion's relative decrease falls below this
  int max_sweeps = 200;
  int restarts = 5;             // extra runs from random well-conditioned starts
  std::uint64_t seed = 0;       // seeds the restart starts only
  double column_norm_cap = 1e6; // iterate rejected if the common column norm exceeds this
  bool require_convergence = false;  // throw ConvergenceError instead of returning converged=false
};

template <typename Scalar>
struct JointDiagResult {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorType = Eigen::Vector<Scalar, Eigen::Dynamic>;

  MatrixType Q;                       // on the constraint set: det 1, equal column norms
  std::vector<VectorType> eigenvalues;  // diag(Q^{-1} C_k Q) for each k
  Scalar criterion = 0;               // off criterion at the returned Q
  int sweeps = 0;
  bool converged = false;
  std::vector<Scalar> trace;          // criterion before the first sweep and after each one
  bool degenerate = false;            // two eigenvalue columns nearly coincide

  // Eigenvalue profiles as a kappa x r matrix (row k = diagonal of the k-th
  // transformed matrix); column j is component j's profile.
  MatrixType eigenvalue_matrix() const {
    MatrixType e(static_cast<Index>(eigenvalues.size()), Q.cols());
    for (std::size_t k = 0; k < eigenvalues.size(); ++k)
      e.row(static_cast<Index>(k)) = eigenvalues[k].transpose();
    return e;
  }
};

namespace detail {

template <typename Scalar>
Scalar off_sum_squares(const std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& ms) {
  Scalar s = 0;
  for (const auto& m : ms)
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j)
        if (i != j) s += m(i, j) * m(i, j);
  return s;
}

// Real roots of a*x^3 + b*x^2 + c*x + d = 0, degrading gracefully to the
// quadratic/linear cases.  Good enough for line minimization: the caller
// evaluates the objective at every returned root anyway.
inline int real_cubic_roots(double a, double b, double c, double d, std::array<double, 3>& out) {
  const double scale = std::max({std::abs(a), std::abs(b), std::abs(c), std::abs(d)});
  if (scale == 0.0) return 0;
  if (std::abs(a) < 1e-14 * scale) {
    if (std::abs(b) < 1e-14 * scale) {
      if (std::abs(c) < 1e-14 * scale) return 0;
      out[0] = -d / c;
      return 1;
    }
    const double disc = c * c - 4.0 * b * d;
    if (disc < 0.0) return 0;
    const double sq = std::sqrt(disc);
    // Numerically stable quadratic roots.
    const double q = -0.5 * (c + (c >= 0.0 ? sq : -sq));
    out[0] = q / b;
    int n = 1;
    if (q != 0.0) out[n++] = d / q;
    return n;
  }
  const double bn = b / a, cn = c / a, dn = d / a;
  const double p = cn - bn * bn / 3.0;
  const double q = 2.0 * bn * bn * bn / 27.0 - bn * cn / 3.0 + dn;
  const double shift = -bn / 3.0;
  const double disc = 0.25 * q * q + p * p * p / 27.0;
  if (disc > 0.0) {
    const double sq = std::sqrt(disc);
    out[0] = std::cbrt(-0.5 * q + sq) + std::cbrt(-0.5 * q - sq) + shift;
    return 1;
  }
  if (p >= 0.0) {  // p == 0 and disc <= 0 forces q == 0: triple root
    out[0] = shift;
    return 1;
  }
  const double m = 2.0 * std::sqrt(-p / 3.0);
  double arg = 3.0 * q / (p * m);
  arg = std::min(1.0, std::max(-1.0, arg));
  const double theta = std::acos(arg) / 3.0;
  for (int k = 0; k < 3; ++k)
    out[static_cast<std::size_t>(k)] =
        m * std::cos(theta - 2.0943951023931954923 * k) + shift;
  return 3;
}

// State of one solver run: the transformed stack and the accumulated Q.
template <typename Scalar>
struct JdState {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  std::vector<MatrixType> m;
  MatrixType q;
};

// Apply the similarity of the shear S = I + a e_i e_j' to every matrix in the
// stack and accumulate Q <- Q S.  The two in-place row/column updates below
// realize (I - a e_i e_j') M (I + a e_i e_j') exactly, including the -a^2 term.
template <typename Scalar>
void apply_shear(JdState<Scalar>& st, Index i, Index j, Scalar a) {
  for (auto& m : st.m) {
    m.row(i) -= a * m.row(j);
    m.col(j) += a * m.col(i);
  }
  st.q.col(j) += a * st.q.col(i);
}

// Optimal shear coefficient for positions (i, j): the off criterion after the
// shear is a quartic c4 a^4 + c3 a^3 + c2 a^2 + c1 a + const, minimized by a
// root of its derivative.  Returns 0 when no strict decrease is available.
template <typename Scalar>
Scalar best_shear(const JdState<Scalar>& st, Index i, Index j) {
  Scalar c1 = 0, c2 = 0, c3 = 0, c4 = 0;
  const Index r = st.q.rows();
  for (const auto& m : st.m) {
    const Scalar u = m(i, j);
    const Scalar g = m(j, i);
    const Scalar delta = m(i, i) - m(j, j);
    c4 += g * g;
    c3 += -2.0 * delta * g;
    c2 += delta * delta - 2.0 * u * g;
    c1 += 2.0 * u * delta;
    for (Index y = 0; y < r; ++y) {
      if (y == i || y == j) continue;
      c2 += m(j, y) * m(j, y) + m(y, i) * m(y, i);
      c1 += -2.0 * m(i, y) * m(j, y) + 2.0 * m(y, j) * m(y, i);
    }
  }
  std::array<double, 3> roots{};
  const int n = real_cubic_roots(4.0 * c4, 3.0 * c3, 2.0 * c2, c1, roots);
  Scalar best_a = 0, best_f = 0;
  for (int t = 0; t < n; ++t) {
    const Scalar a = roots[static_cast<std::size_t>(t)];
    if (!std::isfinite(a) || std::abs(a) > 1e8) continue;
    const Scalar f = ((c4 * a + c3) * a + c2) * a * a + c1 * a;
    if (f < best_f) {
      best_f = f;
      best_a = a;
    }
  }
  return best_a;
}

// Optimal plane rotation for the pair (p, q): minimizes the criterion exactly
// over the rotation angle via the smallest eigenvector of a 2x2 Gram matrix.
template <typename Scalar>
void apply_best_rotation(JdState<Scalar>& st, Index p, Index q) {
  Scalar g11 = 0, g12 = 0, g22 = 0;
  for (const auto& m : st.m) {
    const Scalar d = 0.5 * (m(p, q) + m(q, p));
    const Scalar e = 0.5 * (m(q, q) - m(p, p));
    g11 += d * d;
    g12 += d * e;
    g22 += e * e;
  }
  const Scalar scale = g11 + g22;
  if (scale <= 0) return;
  const Scalar half_diff = 0.5 * (g11 - g22);
  const Scalar lam_min = 0.5 * scale - std::sqrt(half_diff * half_diff + g12 * g12);
  // Smallest eigenvector (u, v) of [[g11, g12], [g12, g22]]; pick the
  // better-conditioned expression of the two.
  Scalar u, v;
  if (std::abs(g11 - lam_min) >= std::abs(g22 - lam_min)) {
    u = g12;
    v = lam_min - g11;
  } else {
    u = lam_min - g22;
    v = g12;
  }
  Scalar nrm = std::sqrt(u * u + v * v);
  if (nrm <= 1e-15 * std::sqrt(scale)) return;  // already optimal
  u /= nrm;
  v /= nrm;
  if (u < 0 || (u == 0 && v < 0)) {  // small-angle representative: 2*theta in (-pi/2, pi/2]
    u = -u;
    v = -v;
  }
  const Scalar theta = 0.5 * std::atan2(v, u);
  if (std::abs(theta) < 1e-18) return;
  const Scalar c = std::cos(theta), s = std::sin(theta);
  using RowVec = Eigen::RowVector<Scalar, Eigen::Dynamic>;
  using ColVec = Eigen::Vector<Scalar, Eigen::Dynamic>;
  for (auto& m : st.m) {
    RowVec tp = c * m.row(p) + s * m.row(q);
    m.row(q) = -s * m.row(p) + c * m.row(q);
    m.row(p) = tp;
    ColVec cp = c * m.col(p) + s * m.col(q);
    m.col(q) = -s * m.col(p) + c * m.col(q);
    m.col(p) = cp;
  }
  ColVec qp = c * st.q.col(p) + s * st.q.col(q);
  st.q.col(q) = -s * st.q.col(p) + c * st.q.col(q);
  st.q.col(p) = qp;
}

// Pull Q back onto the constraint set: unit determinant, equal column norms.
// Equalizing norms to their geometric mean preserves the determinant, so the
// determinant is fixed afterwards by a global rescale (which keeps the norms
// equal).  Throws if Q has collapsed or the common norm exceeds the cap.
template <typename Scalar>
void normalize_to_constraint(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& q,
                             double column_norm_cap) {
  const Index r = q.rows();
  for (Index j = 0; j < r; ++j) {
    const Scalar nrm = q.col(j).norm();
    if (!(nrm > 0) || !std::isfinite(nrm))
      throw SingularMatrixError("joint diagonalization iterate has a degenerate column");
    q.col(j) /= nrm;
  }
  Scalar det = q.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-300)
    throw SingularMatrixError("joint diagonalization iterate is numerically singular");
  if (det < 0) {  // flip one column; only reachable from a randomized start
    q.col(0) = -q.col(0);
    det = -det;
  }
  const Scalar s = std::pow(det, Scalar(1) / static_cast<Scalar>(r));
  q /= s;
  const Scalar common_norm = Scalar(1) / s;
  if (common_norm > column_norm_cap)
    throw SingularMatrixError("joint diagonalization iterate exceeds the column norm cap; "
                              "the stack is too close to singular");
}

template <typename Scalar>
void recompute_stack(JdState<Scalar>& st,
                     const std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& c) {
  Eigen::PartialPivLU<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> lu(st.q);
  for (std::size_t k = 0; k < c.size(); ++k) st.m[k] = lu.solve(c[k] * st.q);
}

template <typename Scalar>
JointDiagResult<Scalar> run_single(const JointDiagProblem<Scalar>& problem,
                                   const JointDiagOptions& opts,
                                   Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> q0) {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Index r = problem.r();
  Scalar scale2 = 0;
  for (const auto& c : problem.matrices) scale2 += c.squaredNorm();
  // Below this the criterion is pure roundoff; treat it as zero.
  const Scalar floor = 1e-28 * std::max(scale2, Scalar(1e-300));

  JdState<Scalar> st;
  st.q = std::move(q0);
  normalize_to_constraint(st.q, opts.column_norm_cap);
  st.m.resize(problem.matrices.size());
  recompute_stack(st, problem.matrices);

  JointDiagResult<Scalar> res;
  Scalar crit = off_sum_squares(st.m);
  res.trace.push_back(crit);
  res.converged = (r == 1);

  for (int sweep = 0; sweep < opts.max_sweeps && r > 1; ++sweep) {
    for (Index p = 0; p < r; ++p) {
      for (Index q = p + 1; q < r; ++q) {
        const Scalar a_low = best_shear(st, q, p);
        if (a_low != 0) apply_shear(st, q, p, a_low);
        const Scalar a_up = best_shear(st, p, q);
        if (a_up != 0) apply_shear(st, p, q, a_up);
        apply_best_rotation(st, p, q);
      }
    }
    res.sweeps = sweep + 1;

    // Refresh the stack from the accumulated Q (drift control), then try the
    // constraint pullback.  The pullback is a diagonal similarity, which can
    // nudge the criterion either way; keep it only when it does not hurt,
    // unless the column norms have drifted badly and rebalancing is overdue.
    recompute_stack(st, problem.matrices);
    const Scalar crit_pre = off_sum_squares(st.m);
    MatrixType q_pre = st.q;
    Scalar norm_min = std::numeric_limits<Scalar>::max(), norm_max = 0;
    for (Index j = 0; j < r; ++j) {
      const Scalar nrm = st.q.col(j).norm();
      norm_min = std::min(norm_min, nrm);
      norm_max = std::max(norm_max, nrm);
    }
    normalize_to_constraint(st.q, opts.column_norm_cap);
    recompute_stack(st, problem.matrices);
    Scalar crit_post = off_sum_squares(st.m);
    if (crit_post > crit_pre * (1 + 1e-12) && norm_max < 1e3 * norm_min) {
      st.q = q_pre;
      recompute_stack(st, problem.matrices);
      crit_post = crit_pre;
    }
    res.trace.push_back(crit_post);

    const Scalar drop = crit - crit_post;
    if (crit_post <= floor || std::abs(drop) <= opts.rel_tol * std::max(crit, crit_post)) {
      crit = crit_post;
      res.converged = true;
      break;
    }
    crit = crit_post;
  }

  // Final pullback so the returned Q is on the constraint set even when the
  // last accepted iterate skipped it; then report criterion and eigenvalues
  // exactly at the returned Q.
  normalize_to_constraint(st.q, opts.column_norm_cap);
  recompute_stack(st, problem.matrices);
  res.Q = st.q;
  res.criterion = off_sum_squares(st.m);
  res.eigenvalues.resize(st.m.size());
  for (std::size_t k = 0; k < st.m.size(); ++k) res.eigenvalues[k] = st.m[k].diagonal();
  return res;
}

// Random well-conditioned start: an orthogonal matrix with determinant +1.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> random_orthogonal(Index r, Rng& rng) {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  MatrixType g(r, r);
  for (Index j = 0; j < r; ++j)
    for (Index i = 0; i < r; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<MatrixType> qr(g);
  MatrixType q = qr.householderQ();
  MatrixType rmat = qr.matrixQR().template triangularView<Eigen::Upper>();
  for (Index j = 0; j < r; ++j)
    if (rmat(j, j) < 0) q.col(j) = -q.col(j);
  if (q.determinant() < 0) q.col(0) = -q.col(0);
  return q;
}

}  // namespace detail

// Sum of squared off-diagonal entries of Q^{-1} C_k Q over the stack.
template <typename Scalar>
Scalar off_criterion(const JointDiagProblem<Scalar>& problem,
                     const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& q) {
  problem.validate();
  if (q.rows() != problem.r() || q.cols() != problem.r())
    throw DimensionError("off_criterion: Q size does not match the stack");
  Eigen::JacobiSVD<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> svd(q);
  const auto& sv = svd.singularValues();
  if (!(sv(sv.size() - 1) > 0) || sv(0) / sv(sv.size() - 1) > 1e12)
    throw SingularMatrixError("off_criterion: Q is numerically singular");
  Eigen::PartialPivLU<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> lu(q);
  Scalar s = 0;
  for (const auto& c : problem.matrices) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m = lu.solve(c * q);
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j)
        if (i != j) s += m(i, j) * m(i, j);
  }
  return s;
}

// Joint diagonalizer with seeded random restarts; the best run (lowest
// criterion) wins.  Non-convergence is reported through the converged flag
// carrying the best iterate, unless require_convergence asks for a throw.
template <typename Scalar>
JointDiagResult<Scalar> joint_diagonalize(const JointDiagProblem<Scalar>& problem,
                                          const JointDiagOptions& opts = {}) {
  problem.validate();
  const Index r = problem.r();

  Scalar scale2 = 0;
  for (const auto& c : problem.matrices) scale2 += c.squaredNorm();

  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  JointDiagResult<Scalar> best =
      detail::run_single(problem, opts, MatrixType(MatrixType::Identity(r, r)));

  // Already essentially exact: restarts cannot improve on this.
  const bool exact = best.converged && best.criterion <= 1e-24 * std::max(scale2, Scalar(1e-300));
  if (!exact) {
    Rng rng(derive_seed(opts.seed, 0x6a6f696e74ULL));
    for (int t = 0; t < opts.restarts; ++t) {
      JointDiagResult<Scalar> cand;
      try {
        cand = detail::run_single(problem, opts, detail::random_orthogonal<Scalar>(r, rng));
      } catch (const SingularMatrixError&) {
        continue;  // a bad start is not an error; other starts remain
      }
      if (cand.criterion < best.criterion) best = cand;
    }
  }

  // Degeneracy diagnostic: nearly coinciding eigenvalue profiles mean the
  // diagonalizer is poorly identified between those components.
  if (r > 1) {
    MatrixType e = best.eigenvalue_matrix();
    Scalar col_scale = 0;
    for (Index j = 0; j < r; ++j) col_scale = std::max(col_scale, e.col(j).norm());
    Scalar min_dist = std::numeric_limits<Scalar>::max();
    for (Index a = 0; a < r; ++a)
      for (Index b = a + 1; b < r; ++b)
        min_dist = std::min(min_dist, (e.col(a) - e.col(b)).norm());
    best.degenerate = min_dist < 1e-6 * std::max(col_scale, Scalar(1e-300));
  }

  if (opts.require_convergence && !best.converged)
    throw ConvergenceError("joint diagonalization did not converge within the sweep budget",
                           static_cast<double>(best.criterion));
  return best;
}

// First-order map from perturbations of the stack to perturbations of the
// recovered eigenvalue profiles, at a diagonalizing point Q0.  Block-diagonal
// with one identical r^2 x r^2 block per stacked matrix: the similarity
// transport (Q0' (x) Q0^{-1}) followed by the diagonal-coordinate selector.
// Both the input stack perturbation and the output are in stacked
// column-major vec coordinates.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> eigenvalue_perturbation_map(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& q0, Index kappa) {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (q0.rows() != q0.cols()) throw DimensionError("eigenvalue_perturbation_map: square Q required");
  if (kappa <= 0) throw DimensionError("eigenvalue_perturbation_map: positive stack size required");
  const Index r = q0.rows();
  MatrixType q0inv = q0.inverse();
  MatrixType block = kron<Scalar>(q0.transpose(), q0inv);
  for (Index p = 0; p < r * r; ++p) {
    const Index row = p % r, col = p / r;
    if (row != col) block.row(p).setZero();  // diagonal-coordinate selector
  }
  MatrixType h = MatrixType::Zero(r * r * kappa, r * r * kappa);
  for (Index k = 0; k < kappa; ++k)
    h.block(k * r * r, k * r * r, r * r, r * r) = block;
  return h;
}

template <typename Scalar>
struct EigenvectorMap {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> map;  // r^2 x (r^2 kappa)
  bool degenerate = false;  // more zero inverse gaps than the r structural ones
};

// First-order map from perturbations of the stack to the perturbation of the
// diagonalizer Q itself (column-major vec coordinates), at a diagonalizing
// point Q0 with eigenvalue profiles d[k].  Per-column scale directions lie in
// the structural null space (the pseudo-inverse zeroes the r diagonal
// coordinates), so predictions live in the quotient modulo column scalings.
template <typename Scalar>
EigenvectorMap<Scalar> eigenvector_perturbation_map(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& q0,
    const std::vector<Eigen::Vector<Scalar, Eigen::Dynamic>>& d) {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorType = Eigen::Vector<Scalar, Eigen::Dynamic>;
  if (q0.rows() != q0.cols()) throw DimensionError("eigenvector_perturbation_map: square Q required");
  const Index r = q0.rows();
  const Index kappa = static_cast<Index>(d.size());
  if (kappa == 0) throw DimensionError("eigenvector_perturbation_map: empty eigenvalue stack");
  for (const auto& dk : d)
    if (dk.size() != r) throw DimensionError("eigenvector_perturbation_map: eigenvalue size mismatch");

  // Kronecker-difference diagonals: entry (i*r + j) holds d_i - d_j, the gap
  // that divides the (j, i) mixing coordinate of the perturbation.
  std::vector<VectorType> gaps(static_cast<std::size_t>(kappa));
  VectorType gap2_sum = VectorType::Zero(r * r);
  for (Index k = 0; k < kappa; ++k) {
    VectorType g(r * r);
    const auto& dk = d[static_cast<std::size_t>(k)];
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < r; ++j) g(i * r + j) = dk(i) - dk(j);
    gaps[static_cast<std::size_t>(k)] = g;
    gap2_sum += g.cwiseProduct(g);
  }
  const Scalar tol = 1e-12 * std::max(gap2_sum.maxCoeff(), Scalar(1e-300));
  VectorType pinv = VectorType::Zero(r * r);
  Index zeros = 0;
  for (Index p = 0; p < r * r; ++p) {
    if (gap2_sum(p) > tol)
      pinv(p) = Scalar(1) / gap2_sum(p);
    else
      ++zeros;
  }

  EigenvectorMap<Scalar> out;
  out.degenerate = zeros > r;

  MatrixType q0inv = q0.inverse();
  MatrixType transport = kron<Scalar>(q0.transpose(), q0inv);  // r^2 x r^2
  MatrixType g = MatrixType::Zero(r * r, r * r * kappa);
  for (Index k = 0; k < kappa; ++k) {
    MatrixType blk = transport;
    const auto& gk = gaps[static_cast<std::size_t>(k)];
    for (Index p = 0; p < r * r; ++p) blk.row(p) *= gk(p) * pinv(p);
    g.block(0, k * r * r, r * r, r * r) = blk;
  }
  out.map = kron<Scalar>(MatrixType::Identity(r, r), q0) * g;
  return out;
}

template <typename Scalar>
struct ColumnAlignment {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> aligned;
  std::vector<Index> perm;  // perm[j] = column of the input placed at position j
};

// Align the columns of Q to those of a reference: greedy matching on absolute
// cosine similarity, then sign flips making diag(ref^{-1} aligned) positive.
template <typename Scalar>
ColumnAlignment<Scalar> align_columns(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& q,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& ref) {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (q.rows() != ref.rows() || q.cols() != ref.cols())
    throw DimensionError("align_columns: shape mismatch");
  if (q.rows() != q.cols())
    throw DimensionError("align_columns: square matrices required (the sign rule inverts the reference)");
  const Index r = q.cols();
  MatrixType cos(r, r);
  for (Index a = 0; a < r; ++a)
    for (Index b = 0; b < r; ++b) {
      const Scalar den = ref.col(a).norm() * q.col(b).norm();
      cos(a, b) = den > 0 ? std::abs(ref.col(a).dot(q.col(b))) / den : 0;
    }
  std::vector<Index> perm(static_cast<std::size_t>(r), -1);
  std::vector<char> row_used(static_cast<std::size_t>(r), 0), col_used(static_cast<std::size_t>(r), 0);
  for (Index step = 0; step < r; ++step) {
    Index bi = -1, bj = -1;
    Scalar bv = -1;
    for (Index a = 0; a < r; ++a) {
      if (row_used[static_cast<std::size_t>(a)]) continue;
      for (Index b = 0; b < r; ++b) {
        if (col_used[static_cast<std::size_t>(b)]) continue;
        if (cos(a, b) > bv) {
          bv = cos(a, b);
          bi = a;
          bj = b;
        }
      }
    }
    perm[static_cast<std::size_t>(bi)] = bj;
    row_used[static_cast<std::size_t>(bi)] = 1;
    col_used[static_cast<std::size_t>(bj)] = 1;
  }
  ColumnAlignment<Scalar> out;
  out.perm = perm;
  out.aligned.resize(q.rows(), r);
  for (Index a = 0; a < r; ++a) out.aligned.col(a) = q.col(perm[static_cast<std::size_t>(a)]);
  MatrixType rel = ref.partialPivLu().solve(out.aligned);
  for (Index a = 0; a < r; ++a)
    if (rel(a, a) < 0) out.aligned.col(a) = -out.aligned.col(a);
  return out;
}

using JointDiagProblemXd = JointDiagProblem<double>;
using JointDiagResultXd = JointDiagResult<double>;

}  // namespace triad
