#pragma once

// Fixing the transformation Q on an integration window and evaluating the
// inherent ODE: xdot1 = L(t, x1) with the algebraic recovery x2 = R(t, x1).
// Linear problems get closed-form affine evaluations; nonlinear problems are
// evaluated through an underdetermined Gauss-Newton solve on the derivative
// array.

#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "geodae/reduce.hpp"

namespace geodae {

enum class QKind {
  INHERENT,
  SPIN_STABILIZED,
  ROTATED,
  SELF_ADJOINT,
  SKEW_ADJOINT,
  PRESCRIBED
};

inline const char* to_string(QKind k) {
  switch (k) {
    case QKind::INHERENT: return "INHERENT";
    case QKind::SPIN_STABILIZED: return "SPIN_STABILIZED";
    case QKind::ROTATED: return "ROTATED";
    case QKind::SELF_ADJOINT: return "SELF_ADJOINT";
    case QKind::SKEW_ADJOINT: return "SKEW_ADJOINT";
    case QKind::PRESCRIBED: return "PRESCRIBED";
  }
  return "?";
}

struct QStrategy {
  QKind kind = QKind::INHERENT;
  // User transformation for PRESCRIBED, queried as (t, order).
  std::function<TaylorMatrix(double, int)> prescribed;
  // Base the construction on E itself when mu = 0 instead of reducing.
  bool mu0_shortcut = true;
  bool constant_z1 = false;
};

enum class RhsStructure { none, hamiltonian, generalized_orthogonal };

/// Inherent ODE data at one time: xdot1 = B x1 + b, x2 = P x1 + p.
struct AffineRhs {
  Eigen::MatrixXd B, P;
  Eigen::VectorXd b, p;
};

struct TransformedBlocks {
  TaylorMatrix E11, E12, A11, A12, A21, A22;
  TaylorVector g1, g2;
};

/** Transformation window for a linear DAE: all factorization decisions are
    frozen at t0, evaluations anywhere in [t0, t0+h] re-run the construction
    in Taylor arithmetic. */
class LinearWindow {
 public:
  LinearWindow(const LinearDae& dae, CharValues cv, QStrategy strategy,
               double t0, double h)
      : t0_(t0), h_(h), dae_(dae), cv_(cv), strategy_(strategy) {
    const int n = dae_.n;
    if (strategy_.kind == QKind::SELF_ADJOINT &&
        dae_.symmetry != Symmetry::self_adjoint)
      throw std::invalid_argument("SELF_ADJOINT strategy needs a self-adjoint problem");
    if (strategy_.kind == QKind::SKEW_ADJOINT &&
        dae_.symmetry != Symmetry::skew_adjoint)
      throw std::invalid_argument("SKEW_ADJOINT strategy needs a skew-adjoint problem");
    if (strategy_.kind == QKind::PRESCRIBED && !strategy_.prescribed)
      throw std::invalid_argument("PRESCRIBED strategy needs a user transformation");

    shortcut_ = cv_.mu == 0 && strategy_.mu0_shortcut;
    if (shortcut_) {
      qr_e_ = smooth_qr(dae_.E(t0, 1));
      if (qr_e_.rank != cv_.d)
        throw hypothesis_error("window: rank of E contradicts d at the reference point");
      qr_et_ = smooth_qr(transpose(dae_.E(t0, 1)));
    } else {
      ReduceOptions opts;
      opts.constant_z1 = strategy_.constant_z1;
      red_.emplace(dae_, cv_, t0, opts);
    }

    switch (strategy_.kind) {
      case QKind::ROTATED:
      case QKind::INHERENT:
      case QKind::SPIN_STABILIZED: {
        if (!shortcut_)
          qr_rot_ = smooth_qr(transpose(red_->eval(t0).E1));
        const TaylorMatrix q0 = eval_q_fresh(t0, 2);
        q0_ = q0.value();
        qdot0_ = q0.coeff(1);
        break;
      }
      case QKind::SELF_ADJOINT:
      case QKind::SKEW_ADJOINT: {
        const TaylorMatrix T2 = eval_t2_base(t0, 1);
        if (!shortcut_) qr_complete_ = smooth_qr(T2);
        const TaylorMatrix ebar =
            transpose(T2) * dae_.E(t0, 1) * T2;
        if (strategy_.kind == QKind::SELF_ADJOINT)
          congr_ = congruence_to_j(ebar);
        else
          congr_ = congruence_to_s(ebar, dae_.p, dae_.q);
        break;
      }
      case QKind::PRESCRIBED: {
        const TaylorMatrix q0 = strategy_.prescribed(t0, 1);
        detail::require(q0.rows() == n && q0.cols() == n,
                        "PRESCRIBED transformation has the wrong shape");
        if (std::abs(Eigen::FullPivLU<Eigen::MatrixXd>(q0.value()).determinant()) <
            kRankTol)
          throw singular_point_error("PRESCRIBED transformation singular at t0");
        break;
      }
    }

    // Solvability of the algebraic part at the reference point.
    if (cv_.a > 0) {
      const TransformedBlocks blk = blocks(t0);
      Eigen::FullPivLU<Eigen::MatrixXd> lu(blk.A22.value());
      lu.setThreshold(kRankTol);
      if (!lu.isInvertible())
        throw singular_point_error("window: algebraic block A22 is singular at t0");
    }
  }

  double t0() const { return t0_; }
  double h() const { return h_; }
  int n() const { return dae_.n; }
  int d() const { return cv_.d; }
  int a() const { return cv_.a; }
  const CharValues& cv() const { return cv_; }
  const LinearDae& dae() const { return dae_; }
  QKind kind() const { return strategy_.kind; }

  RhsStructure structure() const {
    if (strategy_.kind == QKind::SELF_ADJOINT) return RhsStructure::hamiltonian;
    if (strategy_.kind == QKind::SKEW_ADJOINT)
      return RhsStructure::generalized_orthogonal;
    return RhsStructure::none;
  }
  Eigen::MatrixXd structure_target() const {
    if (strategy_.kind == QKind::SELF_ADJOINT) return symplectic_unit(cv_.d / 2);
    if (strategy_.kind == QKind::SKEW_ADJOINT)
      return signature_matrix(dae_.p, dae_.q);
    return Eigen::MatrixXd();
  }

  /// <Q, Qdot, ...> at t with the frozen decisions, order >= 2.
  TaylorMatrix q(double t, int order = 2) const {
    switch (strategy_.kind) {
      case QKind::INHERENT:
        return TaylorMatrix(q0_, order);
      case QKind::SPIN_STABILIZED: {
        TaylorMatrix Q(q0_ + (t - t0_) * qdot0_, order);
        Q.coeff(1) = qdot0_;
        return Q;
      }
      case QKind::PRESCRIBED:
        return strategy_.prescribed(t, order);
      default:
        return eval_q_fresh(t, order);
    }
  }

  /// Reduced DAE blocks in the transformed unknowns at t (K = 1).
  TransformedBlocks blocks(double t) const {
    const int n = dae_.n, d = cv_.d, a = cv_.a;
    TaylorMatrix E1(d, n, 2), A1(d, n, 2), A2(a, n, 2);
    TaylorVector f1(d, 1, 2), f2(a, 1, 2);
    reduced_at(t, E1, A1, f1, A2, f2);

    const TaylorMatrix Q2 = q(t, 2);
    const TaylorMatrix Qdot = derivative(Q2);
    const TaylorMatrix T2q = Q2.block(0, 0, n, d);
    const TaylorMatrix T2p = Q2.block(0, d, n, a);
    const TaylorMatrix T2qdot = Qdot.block(0, 0, n, d);
    const TaylorMatrix T2pdot = Qdot.block(0, d, n, a);
    const TaylorMatrix E1lo = truncate(E1, 1);

    TransformedBlocks b;
    b.E11 = truncate(E1 * T2q, 1);
    b.E12 = truncate(E1 * T2p, 1);
    b.A11 = truncate(A1 * T2q, 1) - E1lo * T2qdot;
    b.A12 = truncate(A1 * T2p, 1) - E1lo * T2pdot;
    b.A21 = truncate(A2 * T2q, 1);
    b.A22 = truncate(A2 * T2p, 1);
    b.g1 = truncate(f1, 1);
    b.g2 = truncate(f2, 1);
    return b;
  }

  /// Inherent ODE and algebraic recovery coefficients at t.
  AffineRhs affine(double t) const {
    const TransformedBlocks blk = blocks(t);
    const int d = cv_.d, a = cv_.a;
    AffineRhs r;
    Eigen::MatrixXd lhs = blk.E11.value();
    Eigen::MatrixXd rhs_x = blk.A11.value();
    Eigen::VectorXd rhs_c = blk.g1.value();
    if (a > 0) {
      Eigen::FullPivLU<Eigen::MatrixXd> lu(blk.A22.value());
      lu.setThreshold(kRankTol);
      if (!lu.isInvertible())
        throw singular_point_error("inherent rhs: singular algebraic block");
      r.P = -lu.solve(blk.A21.value());
      r.p = -lu.solve(blk.g2.value());
      const Eigen::MatrixXd R1 =
          -lu.solve(blk.A21.coeff(1) + blk.A22.coeff(1) * r.P);
      const Eigen::VectorXd rdot =
          -lu.solve(blk.A22.coeff(1) * r.p + blk.g2.coeff(1));
      lhs += blk.E12.value() * r.P;
      rhs_x += blk.A12.value() * r.P - blk.E12.value() * R1;
      rhs_c += blk.A12.value() * r.p - blk.E12.value() * rdot;
    } else {
      r.P = Eigen::MatrixXd::Zero(0, d);
      r.p = Eigen::VectorXd::Zero(0);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu1(lhs);
    lu1.setThreshold(kRankTol);
    if (!lu1.isInvertible())
      throw singular_point_error("inherent rhs: singular differential block");
    r.B = lu1.solve(rhs_x);
    r.b = lu1.solve(rhs_c);
    return r;
  }

  Eigen::VectorXd l(double t, const Eigen::VectorXd& x1) const {
    const AffineRhs r = affine(t);
    return r.B * x1 + r.b;
  }
  Eigen::VectorXd algebraic(double t, const Eigen::VectorXd& x1) const {
    const AffineRhs r = affine(t);
    return r.P * x1 + r.p;
  }

  Eigen::VectorXd to_x1(double t, const Eigen::VectorXd& x_full) const {
    const Eigen::VectorXd z = q(t).value().partialPivLu().solve(x_full);
    return z.head(cv_.d);
  }
  Eigen::VectorXd to_full(double t, const Eigen::VectorXd& x1) const {
    Eigen::VectorXd z(dae_.n);
    z.head(cv_.d) = x1;
    z.tail(cv_.a) = algebraic(t, x1);
    return q(t).value() * z;
  }

 private:
  // T2 base for the symmetric constructions (before the W modification).
  TaylorMatrix eval_t2_base(double t, int order) const {
    if (shortcut_) {
      FrozenQr f = smooth_qr(transpose(dae_.E(t, order)), &qr_et_);
      return f.Q.block(0, 0, dae_.n, cv_.d);
    }
    return red_->eval(t, order).proj.T2;
  }

  TaylorMatrix eval_q_fresh(double t, int order) const {
    switch (strategy_.kind) {
      case QKind::INHERENT:
      case QKind::SPIN_STABILIZED:
      case QKind::ROTATED: {
        if (shortcut_) {
          FrozenQr f = smooth_qr(transpose(dae_.E(t, order)), &qr_et_);
          return f.Q;
        }
        FrozenQr f = smooth_qr(transpose(red_->eval(t, order).E1), &qr_rot_);
        return f.Q;
      }
      case QKind::SELF_ADJOINT:
      case QKind::SKEW_ADJOINT: {
        const TaylorMatrix T2 = eval_t2_base(t, order);
        const TaylorMatrix ebar = transpose(T2) * dae_.E(t, order) * T2;
        CongruenceResult w = strategy_.kind == QKind::SELF_ADJOINT
                                 ? congruence_to_j(ebar, &congr_)
                                 : congruence_to_s(ebar, dae_.p, dae_.q, &congr_);
        TaylorMatrix T2p =
            shortcut_
                ? smooth_qr(transpose(dae_.E(t, order)), &qr_et_)
                      .Q.block(0, cv_.d, dae_.n, cv_.a)
                : smooth_qr(T2, &qr_complete_).null_complement();
        return hcat(T2 * w.W, T2p);
      }
      default:
        throw std::logic_error("eval_q_fresh: unexpected strategy");
    }
  }

  void reduced_at(double t, TaylorMatrix& E1, TaylorMatrix& A1, TaylorVector& f1,
                  TaylorMatrix& A2, TaylorVector& f2) const {
    if (shortcut_) {
      const int n = dae_.n, d = cv_.d;
      FrozenQr f = smooth_qr(dae_.E(t, 2), &qr_e_);
      const TaylorMatrix Z1t = transpose(f.Q.block(0, 0, n, d));
      const TaylorMatrix Z2t = transpose(f.Q.block(0, d, n, n - d));
      const TaylorMatrix E = dae_.E(t, 2), A = dae_.A(t, 2);
      const TaylorVector ff = dae_.rhs(t, 2);
      E1 = Z1t * E;
      A1 = Z1t * A;
      f1 = Z1t * ff;
      A2 = Z2t * A;
      f2 = Z2t * ff;
      return;
    }
    ReducedEval ev = red_->eval(t, 2);
    E1 = ev.E1;
    A1 = ev.A1;
    f1 = ev.f1;
    A2 = ev.A2;
    f2 = ev.f2;
  }

  double t0_, h_;
  LinearDae dae_;
  CharValues cv_;
  QStrategy strategy_;
  bool shortcut_ = false;
  std::optional<ReducedDae> red_;
  FrozenQr qr_e_, qr_et_, qr_rot_, qr_complete_;
  CongruenceResult congr_;
  Eigen::MatrixXd q0_, qdot0_;
};

inline LinearWindow choose_q(const QStrategy& strategy, const LinearDae& dae,
                             const CharValues& cv, double t0, double h) {
  return LinearWindow(dae, cv, strategy, t0, h);
}

/// Spec-level operation: one evaluation of the linear inherent ODE.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> inherent_rhs_linear(
    const LinearWindow& window, double t, const Eigen::VectorXd& x1) {
  const AffineRhs r = window.affine(t);
  return {r.B * x1 + r.b, r.P * x1 + r.p};
}

// -- nonlinear path ----------------------------------------------------------

struct GnOptions {
  double tol = 1e-10;
  int max_iter = 25;
  bool check_rank = false;
};

struct GnResult {
  Eigen::VectorXd x, xdot, w;  // solution of the array system
  Eigen::VectorXd L, R;        // inherent rhs and algebraic recovery
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> residual_history;
  double min_singular_ratio = -1.0;  // smallest/largest sigma when checked
  bool converged = false;
};

/** Gauss-Newton on F_{mu+1}(t, x, xdot, w) = 0, [I_d 0] Q^{-1} x = x1 with
    minimum-norm steps; L and R are read off the converged point. */
inline GnResult gauss_newton_eval(const NonlinearDae& dae,
                                  const Eigen::MatrixXd& Q,
                                  const Eigen::MatrixXd& Qdot, double t,
                                  const Eigen::VectorXd& x1,
                                  const Eigen::VectorXd& guess,
                                  const GnOptions& opts = {}) {
  const int n = dae.n, d = dae.d, a = dae.a, mu = dae.mu;
  const int ny = (mu + 2) * n;
  detail::require(guess.size() == n + ny, "gauss_newton_eval: bad guess size");
  const Eigen::PartialPivLU<Eigen::MatrixXd> qlu(Q);
  const Eigen::MatrixXd qinv_top = qlu.inverse().topRows(d);

  Eigen::VectorXd u = guess;
  GnResult res;
  const double rhs_scale = 1.0 + guess.cwiseAbs().maxCoeff();
  const int rows = (mu + 2) * n + d;

  auto residual = [&](const Eigen::VectorXd& uu) {
    Eigen::VectorXd r(rows);
    r.head((mu + 2) * n) = dae.F_array(mu + 1, t, uu.head(n), uu.tail(ny));
    r.tail(d) = qinv_top * uu.head(n) - x1;
    return r;
  };

  for (int it = 0; it <= opts.max_iter; ++it) {
    const Eigen::VectorXd x = u.head(n);
    const Eigen::VectorXd y = u.tail(ny);
    const Eigen::VectorXd r = residual(u);
    const double rn = r.cwiseAbs().maxCoeff();
    res.residual_history.push_back(rn);
    res.residual = rn;
    res.iterations = it;
    if (rn <= opts.tol * rhs_scale) {
      res.converged = true;
      break;
    }
    if (it == opts.max_iter) break;

    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(rows, n + ny);
    J.block(0, 0, (mu + 2) * n, n) =
        -dae.N_of(mu + 1, t, x, y).leftCols(n);
    J.block(0, n, (mu + 2) * n, ny) = dae.M_of(mu + 1, t, x, y);
    J.block((mu + 2) * n, 0, d, n) = qinv_top;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(J);
    if (cod.rank() < rows)
      throw singular_point_error(
          "gauss_newton_eval: Jacobian lost row rank at an iterate");
    const Eigen::VectorXd delta = cod.solve(-r);
    // Backtracking damping: full steps near the solution keep the quadratic
    // convergence; shortened steps guard stage queries far from the cache.
    double lambda = 1.0;
    Eigen::VectorXd u_best = u + delta;
    double rn_best = residual(u_best).cwiseAbs().maxCoeff();
    while (rn_best > (1.0 - 0.2 * lambda) * rn && lambda > 1.0 / 64) {
      lambda *= 0.5;
      const Eigen::VectorXd u_try = u + lambda * delta;
      const double rn_try = residual(u_try).cwiseAbs().maxCoeff();
      if (rn_try < rn_best) {
        rn_best = rn_try;
        u_best = u_try;
      }
    }
    u = u_best;
  }

  const Eigen::VectorXd x = u.head(n);
  const Eigen::VectorXd xdot = u.segment(n, n);
  res.x = x;
  res.xdot = xdot;
  res.w = u.tail((mu + 1) * n);
  const Eigen::VectorXd qix = qlu.solve(x);
  res.R = qix.tail(a);
  res.L = qinv_top * (xdot - Qdot * qlu.solve(x));

  if (opts.check_rank) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(rows, n + ny);
    J.block(0, 0, (mu + 2) * n, n) = -dae.N_of(mu + 1, t, x, u.tail(ny)).leftCols(n);
    J.block(0, n, (mu + 2) * n, ny) = dae.M_of(mu + 1, t, x, u.tail(ny));
    J.block((mu + 2) * n, 0, d, n) = qinv_top;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
    res.min_singular_ratio =
        svd.singularValues()(svd.singularValues().size() - 1) /
        svd.singularValues()(0);
  }
  return res;
}

/// Consistent derivative stack: Gauss-Newton on F_level(t, x0, .) = 0 alone.
inline Eigen::VectorXd consistent_derivatives(
    const NonlinearDae& dae, int level, double t, const Eigen::VectorXd& x0,
    const Eigen::VectorXd& y_guess = Eigen::VectorXd(), double tol = 1e-12,
    int max_iter = 50) {
  const int n = dae.n;
  Eigen::VectorXd y = Eigen::VectorXd::Zero((level + 1) * n);
  if (y_guess.size() >= y.size()) y = y_guess.head(y.size());
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd r = dae.F_array(level, t, x0, y);
    if (r.cwiseAbs().maxCoeff() <= tol) return y;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(
        dae.M_of(level, t, x0, y));
    y += cod.solve(-r);
  }
  throw singular_point_error("consistent_derivatives: no convergence");
}

/// Projector data of the nonlinear reduction at a consistent point.
struct NonlinearProjectors {
  Eigen::MatrixXd Q;   // [T2r T2'] from the rotated split of E1hat
  Eigen::MatrixXd Z1;  // n x d differential selector
  Eigen::MatrixXd T2;  // n x d kernel of A2hat
};

inline NonlinearProjectors nonlinear_projectors(const NonlinearDae& dae, double t,
                                                const Eigen::VectorXd& x,
                                                const Eigen::VectorXd& y) {
  const int n = dae.n, mu = dae.mu, a = dae.a, d = dae.d;
  const Eigen::VectorXd ymu = y.head((mu + 1) * n);
  const Eigen::MatrixXd M = dae.M_of(mu, t, x, ymu);
  FrozenQr qm = smooth_qr(TaylorMatrix(M, 1));
  if ((mu + 1) * n - qm.rank != a)
    throw hypothesis_error("nonlinear_projectors: rank of M_mu contradicts a");
  const Eigen::MatrixXd Z2 = qm.Q.value().rightCols(a);
  const Eigen::MatrixXd A2 =
      Z2.transpose() * dae.N_of(mu, t, x, ymu).leftCols(n);
  FrozenQr qa = smooth_qr(TaylorMatrix(A2.transpose(), 1));
  if (qa.rank != a)
    throw hypothesis_error("nonlinear_projectors: A2hat rank deficient");
  NonlinearProjectors p;
  p.T2 = qa.Q.value().rightCols(d);
  const Eigen::MatrixXd Fxdot = dae.M_of(0, t, x, y.head(n));
  FrozenQr qe = smooth_qr(TaylorMatrix(Fxdot * p.T2, 1));
  if (qe.rank != d)
    throw hypothesis_error("nonlinear_projectors: F_xdot T2 rank deficient");
  p.Z1 = qe.Q.value().leftCols(d);
  const Eigen::MatrixXd E1 = p.Z1.transpose() * Fxdot;
  FrozenQr qrot = smooth_qr(TaylorMatrix(E1.transpose(), 1));
  p.Q = qrot.Q.value();
  return p;
}

/** Window for a nonlinear DAE; Q is constant (INHERENT) or user-supplied.
    The warm-start cache carries the previous array solution within one
    integration. */
struct GnCache {
  Eigen::VectorXd u;  // (x, xdot, w)
  bool valid = false;
};

class NonlinearWindow {
 public:
  NonlinearWindow(const NonlinearDae& dae, QStrategy strategy, double t0,
                  double h, GnCache& cache)
      : t0_(t0), h_(h), dae_(dae), strategy_(strategy), cache_(&cache) {
    if (strategy_.kind != QKind::INHERENT && strategy_.kind != QKind::PRESCRIBED)
      throw std::invalid_argument(
          "nonlinear problems support only INHERENT and PRESCRIBED transformations");
    detail::require(cache.valid, "NonlinearWindow: needs a seeded warm-start cache");
    if (strategy_.kind == QKind::INHERENT) {
      const int n = dae_.n;
      q0_ = nonlinear_projectors(dae_, t0, cache.u.head(n),
                                 cache.u.segment(n, (dae_.mu + 1) * n))
                .Q;
    }
  }

  int d() const { return dae_.d; }
  int a() const { return dae_.a; }
  double t0() const { return t0_; }

  Eigen::MatrixXd q_value(double t) const {
    if (strategy_.kind == QKind::INHERENT) return q0_;
    return strategy_.prescribed(t, 1).value();
  }
  Eigen::MatrixXd qdot_value(double t) const {
    if (strategy_.kind == QKind::INHERENT)
      return Eigen::MatrixXd::Zero(dae_.n, dae_.n);
    return strategy_.prescribed(t, 1).coeff(1);
  }

  GnResult eval(double t, const Eigen::VectorXd& x1, GnOptions opts = {}) const {
    GnResult res = gauss_newton_eval(dae_, q_value(t), qdot_value(t), t, x1,
                                     cache_->u, opts);
    if (!res.converged)
      throw singular_point_error("nonlinear inherent rhs: Gauss-Newton did not converge");
    cache_->u.head(dae_.n) = res.x;
    cache_->u.segment(dae_.n, dae_.n) = res.xdot;
    cache_->u.tail((dae_.mu + 1) * dae_.n) = res.w;
    return res;
  }

  Eigen::VectorXd l(double t, const Eigen::VectorXd& x1) const {
    return eval(t, x1).L;
  }
  Eigen::VectorXd to_x1(double t, const Eigen::VectorXd& x_full) const {
    return (q_value(t).partialPivLu().solve(x_full)).head(dae_.d);
  }
  Eigen::VectorXd full_state(double t, const Eigen::VectorXd& x1) const {
    return eval(t, x1).x;
  }

 private:
  double t0_, h_;
  NonlinearDae dae_;
  QStrategy strategy_;
  GnCache* cache_;
  Eigen::MatrixXd q0_;
};

/// Seed the warm-start cache at the initial point: solve the array equations
/// for the derivative stack with x fixed at the consistent initial value.
inline GnCache seed_cache(const NonlinearDae& dae, double t0,
                          const Eigen::VectorXd& x0) {
  GnCache cache;
  const Eigen::VectorXd y = consistent_derivatives(dae, dae.mu + 1, t0, x0);
  cache.u.resize(dae.n + y.size());
  cache.u << x0, y;
  cache.valid = true;
  return cache;
}

}  // namespace geodae
