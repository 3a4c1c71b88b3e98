#pragma once

// Locally smooth matrix factorizations over Taylor matrices.
//
// Discrete decisions (column pivots, reflector signs, reference factors, LU
// row pivots) are taken once at a reference point and frozen; re-evaluating
// the factorization at nearby t with the frozen decisions is straight-line
// Taylor arithmetic, so factors come out with correct time derivatives.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "geodae/taylor.hpp"

namespace geodae {

/// Relative threshold separating rank loss from roundoff in pivot decisions.
inline constexpr double kRankTol = 1e-10;

/** Householder QR with frozen pivoting: A * Pi0 = Q * R with square Q.
    perm/signs/rank are the decisions fixed at the reference point; pass a
    previous factorization to re-evaluate smoothly at a nearby time. */
struct FrozenQr {
  TaylorMatrix Q;           // m x m, orthogonal value slice
  TaylorMatrix R;           // m x n, upper triangular value slice
  std::vector<int> perm;    // Pi0: column j of A*Pi0 is A column perm[j]
  std::vector<double> signs;
  int rank = 0;

  TaylorMatrix range() const { return Q.block(0, 0, Q.rows(), rank); }
  TaylorMatrix null_complement() const {
    return Q.block(0, rank, Q.rows(), Q.rows() - rank);
  }
};

inline FrozenQr smooth_qr(const TaylorMatrix& A,
                          const FrozenQr* reference = nullptr,
                          double rank_tol = kRankTol) {
  const int m = A.rows(), n = A.cols(), K = A.order();
  const bool fresh = reference == nullptr;

  FrozenQr f;
  f.perm = fresh ? std::vector<int>() : reference->perm;
  f.signs = fresh ? std::vector<double>() : reference->signs;
  if (fresh) {
    f.perm.resize(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) f.perm[static_cast<size_t>(j)] = j;
  }

  TaylorMatrix B(m, n, K);
  for (int j = 0; j < n; ++j)
    B.set_block(0, j, A.col(f.perm[static_cast<size_t>(j)]));

  double scale = 0.0;
  for (int j = 0; j < n; ++j) scale = std::max(scale, A.value().col(j).norm());
  const double cutoff = rank_tol * (scale > 0.0 ? scale : 1.0);

  TaylorMatrix Qt = TaylorMatrix::identity(m, K);
  const int kmax = std::min(m, n);
  int rank = fresh ? kmax : reference->rank;

  for (int k = 0; k < (fresh ? kmax : rank); ++k) {
    if (fresh) {
      // Greedy pivot: remaining column with the largest tail norm.
      int best = k;
      double best_norm = B.value().col(k).tail(m - k).norm();
      for (int j = k + 1; j < n; ++j) {
        const double nj = B.value().col(j).tail(m - k).norm();
        if (nj > best_norm) {
          best = j;
          best_norm = nj;
        }
      }
      if (best != k) {
        std::swap(f.perm[static_cast<size_t>(k)], f.perm[static_cast<size_t>(best)]);
        TaylorMatrix ck = B.col(k), cb = B.col(best);
        B.set_block(0, k, cb);
        B.set_block(0, best, ck);
      }
      if (best_norm <= cutoff) {
        rank = k;
        break;
      }
      f.signs.push_back(B.value()(k, k) >= 0.0 ? 1.0 : -1.0);
    }

    const int tail = m - k;
    TaylorMatrix x = B.block(k, k, tail, 1);
    Taylor nrm2(K);
    for (int i = 0; i < tail; ++i) {
      Taylor xi = x.entry(i, 0);
      nrm2 += xi * xi;
    }
    if (nrm2.value() <= 0.0)
      throw singular_point_error("smooth_qr: pivot column vanished");
    const Taylor nrm = sqrt(nrm2);
    const double s = f.signs[static_cast<size_t>(k)];

    TaylorMatrix v = x;
    v.set_entry(0, 0, v.entry(0, 0) + s * nrm);
    Taylor vtv(K);
    for (int i = 0; i < tail; ++i) {
      Taylor vi = v.entry(i, 0);
      vtv += vi * vi;
    }
    const Taylor beta = Taylor(2.0, K) / vtv;

    // B[k:, k:] -= beta * v * (v^T B[k:, k:]); same reflector on Qt rows.
    TaylorMatrix sub = B.block(k, k, tail, n - k);
    sub -= (v * beta) * (transpose(v) * sub);
    B.set_block(k, k, sub);
    TaylorMatrix qsub = Qt.block(k, 0, tail, m);
    qsub -= (v * beta) * (transpose(v) * qsub);
    Qt.set_block(k, 0, qsub);

    // Normalize the pivot to a positive diagonal entry of R.
    if (s > 0.0) {
      TaylorMatrix rrow = B.block(k, 0, 1, n);
      B.set_block(k, 0, -rrow);
      TaylorMatrix qrow = Qt.block(k, 0, 1, m);
      Qt.set_block(k, 0, -qrow);
    }
  }

  f.rank = rank;
  f.Q = transpose(Qt);
  f.R = B;
  return f;
}

/// Orthonormal completion: columns T2' with [T2 T2'] pointwise nonsingular.
inline TaylorMatrix complete_to_basis(const TaylorMatrix& T2,
                                      const FrozenQr* reference = nullptr) {
  FrozenQr f = smooth_qr(T2, reference);
  if (f.rank != T2.cols())
    throw singular_point_error("complete_to_basis: rank-deficient input");
  return f.null_complement();
}

/** Cholesky factorization A = L L^T in Taylor arithmetic; decision-free. */
inline TaylorMatrix smooth_cholesky(const TaylorMatrix& A) {
  const int n = A.rows(), K = A.order();
  detail::require(n == A.cols(), "smooth_cholesky: square input required");
  TaylorMatrix L(n, n, K);
  for (int j = 0; j < n; ++j) {
    Taylor d = A.entry(j, j);
    for (int k = 0; k < j; ++k) {
      Taylor l = L.entry(j, k);
      d -= l * l;
    }
    if (d.value() <= 0.0)
      throw singular_point_error("smooth_cholesky: non-positive pivot");
    const Taylor ljj = sqrt(d);
    L.set_entry(j, j, ljj);
    for (int i = j + 1; i < n; ++i) {
      Taylor s = A.entry(i, j);
      for (int k = 0; k < j; ++k) s -= L.entry(i, k) * L.entry(j, k);
      L.set_entry(i, j, s / ljj);
    }
  }
  return L;
}

/// Forward substitution, L lower triangular with nonzero diagonal values.
inline TaylorMatrix tri_solve_lower(const TaylorMatrix& L, const TaylorMatrix& B) {
  const int n = L.rows(), m = B.cols();
  TaylorMatrix X(n, m, L.order());
  for (int c = 0; c < m; ++c)
    for (int i = 0; i < n; ++i) {
      Taylor s = B.entry(i, c);
      for (int k = 0; k < i; ++k) s -= L.entry(i, k) * X.entry(k, c);
      X.set_entry(i, c, s / L.entry(i, i));
    }
  return X;
}

inline TaylorMatrix tri_solve_upper(const TaylorMatrix& U, const TaylorMatrix& B) {
  const int n = U.rows(), m = B.cols();
  TaylorMatrix X(n, m, U.order());
  for (int c = 0; c < m; ++c)
    for (int i = n - 1; i >= 0; --i) {
      Taylor s = B.entry(i, c);
      for (int k = i + 1; k < n; ++k) s -= U.entry(i, k) * X.entry(k, c);
      X.set_entry(i, c, s / U.entry(i, i));
    }
  return X;
}

/// Solve A X = B through an existing Cholesky factor.
inline TaylorMatrix cholesky_solve(const TaylorMatrix& L, const TaylorMatrix& B) {
  return tri_solve_upper(transpose(L), tri_solve_lower(L, B));
}

/** LU with row pivoting frozen at the reference point. */
struct FrozenLu {
  TaylorMatrix L, U;      // P A = L U
  std::vector<int> piv;   // row i of the permuted matrix is A row piv[i]
};

inline FrozenLu smooth_lu(const TaylorMatrix& A,
                          const FrozenLu* reference = nullptr) {
  const int n = A.rows(), K = A.order();
  detail::require(n == A.cols(), "smooth_lu: square input required");
  const bool fresh = reference == nullptr;

  FrozenLu f;
  f.piv.resize(static_cast<size_t>(n));
  if (fresh)
    for (int i = 0; i < n; ++i) f.piv[static_cast<size_t>(i)] = i;
  else
    f.piv = reference->piv;

  TaylorMatrix U(n, n, K);
  for (int i = 0; i < n; ++i) U.set_block(i, 0, A.row(f.piv[static_cast<size_t>(i)]));
  TaylorMatrix L = TaylorMatrix::identity(n, K);

  for (int k = 0; k < n; ++k) {
    if (fresh) {
      int best = k;
      double best_abs = std::abs(U.value()(k, k));
      for (int i = k + 1; i < n; ++i)
        if (std::abs(U.value()(i, k)) > best_abs) {
          best = i;
          best_abs = std::abs(U.value()(i, k));
        }
      if (best != k) {
        std::swap(f.piv[static_cast<size_t>(k)], f.piv[static_cast<size_t>(best)]);
        TaylorMatrix rk = U.row(k), rb = U.row(best);
        U.set_block(k, 0, rb);
        U.set_block(best, 0, rk);
        // Swap the already-built part of L as well.
        if (k > 0) {
          TaylorMatrix lk = L.block(k, 0, 1, k), lb = L.block(best, 0, 1, k);
          L.set_block(k, 0, lb);
          L.set_block(best, 0, lk);
        }
      }
    }
    const Taylor pivot = U.entry(k, k);
    if (pivot.value() == 0.0)
      throw singular_point_error("smooth_lu: zero pivot");
    for (int i = k + 1; i < n; ++i) {
      const Taylor m = U.entry(i, k) / pivot;
      L.set_entry(i, k, m);
      TaylorMatrix ri = U.block(i, k, 1, n - k);
      ri -= m * U.block(k, k, 1, n - k);
      U.set_block(i, k, ri);
    }
  }
  f.L = L;
  f.U = U;
  return f;
}

inline TaylorMatrix lu_solve(const FrozenLu& f, const TaylorMatrix& B) {
  TaylorMatrix Bp(B.rows(), B.cols(), B.order());
  for (int i = 0; i < B.rows(); ++i)
    Bp.set_block(i, 0, B.row(f.piv[static_cast<size_t>(i)]));
  return tri_solve_upper(f.U, tri_solve_lower(f.L, Bp));
}

/// One-shot smooth linear solve A X = B (decisions taken fresh).
inline TaylorMatrix smooth_solve(const TaylorMatrix& A, const TaylorMatrix& B) {
  return lu_solve(smooth_lu(A), B);
}

/** Congruence normalization result: W with W^T Ebar W = target (J or S).
    Carries the decisions needed to re-evaluate the construction smoothly. */
struct CongruenceResult {
  TaylorMatrix W;
  Eigen::MatrixXd target;
  int p = 0, q = 0;
  // frozen decisions
  std::vector<double> signs;    // anti-triangularization reflector signs
  std::vector<int> lu_piv;      // pivot order for the E12 solve
  Eigen::MatrixXd W0;           // reference factor of the symmetric case
};

inline Eigen::MatrixXd symplectic_unit(int p) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * p, 2 * p);
  J.block(0, p, p, p) = Eigen::MatrixXd::Identity(p, p);
  J.block(p, 0, p, p) = -Eigen::MatrixXd::Identity(p, p);
  return J;
}

inline Eigen::MatrixXd signature_matrix(int p, int q) {
  Eigen::VectorXd d(p + q);
  d.head(p).setOnes();
  d.tail(q).setConstant(-1.0);
  return d.asDiagonal();
}

/** Skew-symmetric pointwise-nonsingular Ebar is brought to the symplectic
    unit J by p anti-triangularization steps (orthogonal reflectors, frozen
    signs) followed by a half-block elimination. */
inline CongruenceResult congruence_to_j(const TaylorMatrix& Ebar,
                                        const CongruenceResult* reference = nullptr) {
  const int d = Ebar.rows(), K = Ebar.order();
  detail::require(d == Ebar.cols() && d % 2 == 0,
                  "congruence_to_j: even-dimensional square input required");
  const int p = d / 2;
  const double scale = std::max(1.0, Ebar.value().cwiseAbs().maxCoeff());
  if ((Ebar.value() + Ebar.value().transpose()).cwiseAbs().maxCoeff() >
      1e-8 * scale)
    throw std::invalid_argument("congruence_to_j: input is not skew-symmetric");

  const bool fresh = reference == nullptr;
  CongruenceResult res;
  res.p = p;
  res.q = 0;
  res.target = symplectic_unit(p);
  res.signs = fresh ? std::vector<double>() : reference->signs;

  TaylorMatrix X = Ebar;
  TaylorMatrix W1 = TaylorMatrix::identity(d, K);
  size_t sign_idx = 0;

  for (int k = 0; k < p; ++k) {
    const int lo = k, hi = d - 1 - k;
    const int len = hi - lo;  // length of the column above the corner
    if (len < 2) continue;
    // Reflect c = X[lo:hi, hi] onto the first axis of the active block.
    TaylorMatrix c = X.block(lo, hi, len, 1);
    Taylor nrm2(K);
    for (int i = 0; i < len; ++i) {
      Taylor ci = c.entry(i, 0);
      nrm2 += ci * ci;
    }
    if (nrm2.value() <= (kRankTol * scale) * (kRankTol * scale))
      throw singular_point_error("congruence_to_j: singular corner column");
    const Taylor nrm = sqrt(nrm2);
    double s;
    if (fresh) {
      s = c.value()(0, 0) >= 0.0 ? 1.0 : -1.0;
      res.signs.push_back(s);
    } else {
      s = res.signs.at(sign_idx);
    }
    ++sign_idx;

    TaylorMatrix v = c;
    v.set_entry(0, 0, v.entry(0, 0) + s * nrm);
    Taylor vtv(K);
    for (int i = 0; i < len; ++i) {
      Taylor vi = v.entry(i, 0);
      vtv += vi * vi;
    }
    const Taylor beta = Taylor(2.0, K) / vtv;
    const TaylorMatrix vb = v * beta;

    TaylorMatrix rows = X.block(lo, 0, len, d);
    rows -= vb * (transpose(v) * rows);
    X.set_block(lo, 0, rows);
    TaylorMatrix cols = X.block(0, lo, d, len);
    cols -= (cols * v) * transpose(vb);
    X.set_block(0, lo, cols);
    TaylorMatrix wcols = W1.block(0, lo, d, len);
    wcols -= (wcols * v) * transpose(vb);
    W1.set_block(0, lo, wcols);
  }

  // X = [[E11, E12], [-E12^T, 0]] with E12 anti-triangular nonsingular.
  const TaylorMatrix E11 = X.block(0, 0, p, p);
  const TaylorMatrix E12 = X.block(0, p, p, p);

  FrozenLu lu;
  if (fresh) {
    lu = smooth_lu(E12);
    res.lu_piv = lu.piv;
  } else {
    FrozenLu ref_lu;
    ref_lu.piv = reference->lu_piv;
    lu = smooth_lu(E12, &ref_lu);
  }
  const TaylorMatrix H = lu_solve(lu, TaylorMatrix::identity(p, K));
  const TaylorMatrix Kblk = -0.5 * (H * E11);

  TaylorMatrix W2(d, d, K);
  W2.set_block(0, 0, TaylorMatrix::identity(p, K));
  W2.set_block(p, 0, Kblk);
  W2.set_block(p, p, H);

  res.W = W1 * W2;
  return res;
}

/** Symmetric pointwise-nonsingular Ebar with inertia (p, q) is brought to
    S = diag(I_p, -I_q): reference factorization at t0, then smooth Cholesky
    of the leading block and of the negated Schur complement. */
inline CongruenceResult congruence_to_s(const TaylorMatrix& Ebar, int p, int q,
                                        const CongruenceResult* reference = nullptr) {
  const int d = Ebar.rows(), K = Ebar.order();
  detail::require(d == Ebar.cols() && d == p + q && p >= 0 && q >= 0,
                  "congruence_to_s: dimension/inertia mismatch");
  const double scale = std::max(1.0, Ebar.value().cwiseAbs().maxCoeff());
  if ((Ebar.value() - Ebar.value().transpose()).cwiseAbs().maxCoeff() >
      1e-8 * scale)
    throw std::invalid_argument("congruence_to_s: input is not symmetric");

  const bool fresh = reference == nullptr;
  CongruenceResult res;
  res.p = p;
  res.q = q;
  res.target = signature_matrix(p, q);

  if (fresh) {
    // Reference factorization by symmetric eigendecomposition: columns
    // ordered positive-then-negative, sign-fixed, scaled by 1/sqrt|lambda|.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ebar.value());
    const Eigen::VectorXd lam = es.eigenvalues();
    const Eigen::MatrixXd V = es.eigenvectors();
    const double lam_tol = kRankTol * lam.cwiseAbs().maxCoeff();
    std::vector<int> pos, neg;
    for (int i = d - 1; i >= 0; --i) {
      if (lam(i) > lam_tol)
        pos.push_back(i);
      else if (lam(i) < -lam_tol)
        neg.push_back(i);
      else
        throw singular_point_error("congruence_to_s: near-singular input");
    }
    std::reverse(neg.begin(), neg.end());  // most negative first
    if (static_cast<int>(pos.size()) != p || static_cast<int>(neg.size()) != q)
      throw std::invalid_argument("congruence_to_s: inertia mismatch");
    Eigen::MatrixXd W0(d, d);
    int col = 0;
    auto place = [&](int src) {
      Eigen::VectorXd v = V.col(src);
      int imax = 0;
      v.cwiseAbs().maxCoeff(&imax);
      if (v(imax) < 0.0) v = -v;
      W0.col(col++) = v / std::sqrt(std::abs(lam(src)));
    };
    for (int i : pos) place(i);
    for (int i : neg) place(i);
    res.W0 = W0;
  } else {
    res.W0 = reference->W0;
  }

  const TaylorMatrix W0t(res.W0, K);
  const TaylorMatrix Xt = transpose(W0t) * Ebar * W0t;

  if (q == 0) {
    const TaylorMatrix L11 = smooth_cholesky(Xt);
    res.W = W0t * transpose(tri_solve_lower(L11, TaylorMatrix::identity(p, K)));
    return res;
  }
  if (p == 0) {
    const TaylorMatrix L22 = smooth_cholesky(-Xt);
    res.W = W0t * transpose(tri_solve_lower(L22, TaylorMatrix::identity(q, K)));
    return res;
  }

  const TaylorMatrix X11 = Xt.block(0, 0, p, p);
  const TaylorMatrix X12 = Xt.block(0, p, p, q);
  const TaylorMatrix X22 = Xt.block(p, p, q, q);

  const TaylorMatrix L11 = smooth_cholesky(X11);
  const TaylorMatrix X11inv_X12 = cholesky_solve(L11, X12);
  const TaylorMatrix schur = X22 - transpose(X12) * X11inv_X12;
  const TaylorMatrix L22 = smooth_cholesky(-schur);

  TaylorMatrix M1(d, d, K);
  M1.set_block(0, 0, transpose(tri_solve_lower(L11, TaylorMatrix::identity(p, K))));
  M1.set_block(0, p, -X11inv_X12);
  M1.set_block(p, p, TaylorMatrix::identity(q, K));
  TaylorMatrix M2 = TaylorMatrix::identity(d, K);
  M2.set_block(p, p, transpose(tri_solve_lower(L22, TaylorMatrix::identity(q, K))));

  res.W = W0t * M1 * M2;
  return res;
}

}  // namespace geodae
