#pragma once

// Derivative arrays: the stacked block systems M_l, N_l, g_l obtained by
// differentiating a DAE residual l times, with their time derivatives via the
// shift relations, plus the closure contract for nonlinear problems.

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "geodae/taylor.hpp"

namespace geodae {

namespace detail {
inline double binom(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}
inline double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}
}  // namespace detail

/// j-th time derivative of a Taylor-represented matrix function, reduced to
/// the requested order: coeff_m = (j+m)!/m! * a_{j+m}.
inline TaylorMatrix nth_derivative(const TaylorMatrix& a, int j, int order) {
  detail::require(a.order() >= j + order, "nth_derivative: order too low");
  TaylorMatrix r(a.rows(), a.cols(), order);
  for (int m = 0; m <= order; ++m)
    r.coeff(m) = a.coeff(j + m) * (detail::factorial(j + m) /
                                   (detail::factorial(m)));
  return r;
}

enum class Symmetry { none, self_adjoint, skew_adjoint };

/** Linear time-varying DAE E(t) xdot = A(t) x + f(t), supplied as Taylor
    coefficient providers. Providers must honor any requested order (the
    reduction needs coefficients up to mu+2). */
struct LinearDae {
  int n = 0;
  std::function<TaylorMatrix(double t, int order)> E;
  std::function<TaylorMatrix(double t, int order)> A;
  std::function<TaylorVector(double t, int order)> f;  // empty: homogeneous
  Symmetry symmetry = Symmetry::none;
  int p = 0, q = 0;  // inertia of the nonsingular part for the symmetry class

  TaylorVector rhs(double t, int order) const {
    if (f) return f(t, order);
    return TaylorVector(n, 1, order);
  }
};

/// Max defect of the declared symmetry relations at time t.
inline double symmetry_defect(const LinearDae& dae, double t) {
  if (dae.symmetry == Symmetry::none) return 0.0;
  const TaylorMatrix E = dae.E(t, 2);
  const TaylorMatrix A = dae.A(t, 1);
  const Eigen::MatrixXd Ev = E.value();
  const Eigen::MatrixXd Edot = E.coeff(1);
  double d = 0.0;
  if (dae.symmetry == Symmetry::self_adjoint) {
    d = (Ev.transpose() + Ev).cwiseAbs().maxCoeff();
    d = std::max(d, (A.value().transpose() - A.value() - Edot).cwiseAbs().maxCoeff());
  } else {
    d = (Ev.transpose() - Ev).cwiseAbs().maxCoeff();
    d = std::max(d, (A.value().transpose() + A.value() + Edot).cwiseAbs().maxCoeff());
  }
  return d;
}

/** Level-mu derivative array of a linear DAE. Block row i stacks the i-th
    total derivative of the residual; M is the Jacobian with respect to
    (xdot, ..., x^(mu+1)), N has the minus-x-Jacobian in its first block
    column, g stacks the inhomogeneity derivatives. */
struct DerivativeArrayLinear {
  int mu = 0;
  int n = 0;
  TaylorMatrix M;  // (mu+1)n x (mu+1)n
  TaylorMatrix N;  // (mu+1)n x (mu+1)n, only first block column nonzero
  TaylorVector g;  // (mu+1)n

  Eigen::MatrixXd n_first_block() const {
    return N.value().block(0, 0, (mu + 1) * n, n);
  }
};

inline DerivativeArrayLinear build_linear_array(const LinearDae& dae, int mu,
                                                double t, int order = 1) {
  const int n = dae.n;
  const int provider_order = mu + order;
  const TaylorMatrix E = dae.E(t, provider_order);
  const TaylorMatrix A = dae.A(t, provider_order);
  const TaylorVector g = dae.rhs(t, provider_order);

  DerivativeArrayLinear arr;
  arr.mu = mu;
  arr.n = n;
  arr.M = TaylorMatrix((mu + 1) * n, (mu + 1) * n, order);
  arr.N = TaylorMatrix((mu + 1) * n, (mu + 1) * n, order);
  arr.g = TaylorVector((mu + 1) * n, 1, order);

  for (int i = 0; i <= mu; ++i) {
    for (int k = 0; k <= i; ++k) {
      TaylorMatrix blk = detail::binom(i, i - k) * nth_derivative(E, i - k, order);
      if (k <= i - 1)
        blk -= detail::binom(i, i - k - 1) * nth_derivative(A, i - k - 1, order);
      arr.M.set_block(i * n, k * n, blk);
    }
    arr.N.set_block(i * n, 0, nth_derivative(A, i, order));
    arr.g.set_block(i * n, 0, nth_derivative(g, i, order));
  }
  return arr;
}

/** Time derivatives of the level-mu arrays recovered from the level-(mu+1)
    evaluations through the shift relations Mdot = S^T M - M S^T + N,
    Ndot = S^T N, gdot = S^T g, truncated to the leading blocks. */
struct ArrayDerivatives {
  Eigen::MatrixXd Mdot, Ndot;
  Eigen::VectorXd gdot;
};

inline ArrayDerivatives shift_derivatives(const DerivativeArrayLinear& next) {
  const int n = next.n;
  const int mu = next.mu - 1;
  detail::require(mu >= 0, "shift_derivatives: need a level >= 1 array");
  const Eigen::MatrixXd& M = next.M.value();
  const Eigen::MatrixXd& N = next.N.value();
  const Eigen::VectorXd g = next.g.value();

  ArrayDerivatives d;
  d.Mdot = Eigen::MatrixXd::Zero((mu + 1) * n, (mu + 1) * n);
  d.Ndot = Eigen::MatrixXd::Zero((mu + 1) * n, (mu + 1) * n);
  d.gdot = Eigen::VectorXd::Zero((mu + 1) * n);
  for (int i = 0; i <= mu; ++i) {
    for (int k = 0; k <= mu; ++k) {
      Eigen::MatrixXd blk = M.block((i + 1) * n, k * n, n, n) + N.block(i * n, k * n, n, n);
      if (k >= 1) blk -= M.block(i * n, (k - 1) * n, n, n);
      d.Mdot.block(i * n, k * n, n, n) = blk;
      d.Ndot.block(i * n, k * n, n, n) = N.block((i + 1) * n, k * n, n, n);
    }
    d.gdot.segment(i * n, n) = g.segment((i + 1) * n, n);
  }
  return d;
}

/** Nonlinear DAE with user-supplied derivative array closures. The stacked
    derivative variable y holds (xdot, ..., x^(l+1)) for the requested level. */
struct NonlinearDae {
  int n = 0;
  int mu = 0, a = 0, d = 0;  // declared characteristic values
  std::function<Eigen::VectorXd(double t, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& xdot)>
      F;
  std::function<Eigen::VectorXd(int ell, double t, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& y)>
      F_array;
  std::function<Eigen::MatrixXd(int ell, double t, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& y)>
      M_of;
  std::function<Eigen::MatrixXd(int ell, double t, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& y)>
      N_of;
};

/** Residual with Jacobians evaluable in Taylor arithmetic; the standard way a
    problem supplies its derivative array closures. The t argument is always
    the running time variable. */
struct TaylorResidual {
  int n = 0;
  std::function<TaylorVector(const Taylor& t, const TaylorVector& x,
                             const TaylorVector& xdot)>
      F;
  std::function<TaylorMatrix(const Taylor& t, const TaylorVector& x,
                             const TaylorVector& xdot)>
      Fx;
  std::function<TaylorMatrix(const Taylor& t, const TaylorVector& x,
                             const TaylorVector& xdot)>
      Fxdot;
};

namespace detail {

struct ResidualArgs {
  Taylor t;
  TaylorVector x, xdot;
};

// Assemble Taylor arguments of working order from a derivative-array point.
inline ResidualArgs residual_args(int n, int ell, double t,
                                  const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& y) {
  const int order = std::max(ell, 1);
  ResidualArgs args{Taylor::time(t, order), TaylorVector(n, 1, order),
                    TaylorVector(n, 1, order)};
  args.x.coeff(0) = x;
  for (int m = 1; m <= order; ++m)
    if ((m - 1 + 1) * n <= y.size())
      args.x.coeff(m) = y.segment((m - 1) * n, n) / factorial(m);
  for (int m = 0; m <= order; ++m)
    if ((m + 1) * n <= y.size())
      args.xdot.coeff(m) = y.segment(m * n, n) / factorial(m);
  return args;
}

}  // namespace detail

/// F_l stacked residual from a Taylor-evaluable residual.
inline Eigen::VectorXd eval_residual_array(const TaylorResidual& r, int ell,
                                           double t, const Eigen::VectorXd& x,
                                           const Eigen::VectorXd& y) {
  const int n = r.n;
  const auto args = detail::residual_args(n, ell, t, x, y);
  const TaylorVector F = r.F(args.t, args.x, args.xdot);
  Eigen::VectorXd out((ell + 1) * n);
  for (int i = 0; i <= ell; ++i)
    out.segment(i * n, n) = F.coeff(i) * detail::factorial(i);
  return out;
}

/// M_l from the Taylor expansions of the pointwise Jacobians.
inline Eigen::MatrixXd eval_array_m(const TaylorResidual& r, int ell, double t,
                                    const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& y) {
  const int n = r.n;
  const auto args = detail::residual_args(n, ell, t, x, y);
  const TaylorMatrix Fx = r.Fx(args.t, args.x, args.xdot);
  const TaylorMatrix Fxd = r.Fxdot(args.t, args.x, args.xdot);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero((ell + 1) * n, (ell + 1) * n);
  for (int i = 0; i <= ell; ++i)
    for (int k = 0; k <= i; ++k) {
      Eigen::MatrixXd blk = detail::binom(i, k) * Fxd.coeff(i - k) *
                            detail::factorial(i - k);
      if (k + 1 <= i)
        blk += detail::binom(i, k + 1) * Fx.coeff(i - k - 1) *
               detail::factorial(i - k - 1);
      M.block(i * n, k * n, n, n) = blk;
    }
  return M;
}

/// N_l = -[F_{l;x} 0 ... 0].
inline Eigen::MatrixXd eval_array_n(const TaylorResidual& r, int ell, double t,
                                    const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& y) {
  const int n = r.n;
  const auto args = detail::residual_args(n, ell, t, x, y);
  const TaylorMatrix Fx = r.Fx(args.t, args.x, args.xdot);
  Eigen::MatrixXd N = Eigen::MatrixXd::Zero((ell + 1) * n, (ell + 1) * n);
  for (int i = 0; i <= ell; ++i)
    N.block(i * n, 0, n, n) = -Fx.coeff(i) * detail::factorial(i);
  return N;
}

inline NonlinearDae make_nonlinear(const TaylorResidual& r, int mu, int a,
                                   int d) {
  NonlinearDae dae;
  dae.n = r.n;
  dae.mu = mu;
  dae.a = a;
  dae.d = d;
  dae.F = [r](double t, const Eigen::VectorXd& x, const Eigen::VectorXd& xdot) {
    return eval_residual_array(r, 0, t, x, xdot);
  };
  dae.F_array = [r](int ell, double t, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& y) {
    return eval_residual_array(r, ell, t, x, y);
  };
  dae.M_of = [r](int ell, double t, const Eigen::VectorXd& x,
                 const Eigen::VectorXd& y) {
    return eval_array_m(r, ell, t, x, y);
  };
  dae.N_of = [r](int ell, double t, const Eigen::VectorXd& x,
                 const Eigen::VectorXd& y) {
    return eval_array_n(r, ell, t, x, y);
  };
  return dae;
}

/// Linear DAE viewed through the nonlinear interface (cross-checks).
inline TaylorResidual linear_as_residual(const LinearDae& dae) {
  TaylorResidual r;
  r.n = dae.n;
  r.F = [dae](const Taylor& t, const TaylorVector& x, const TaylorVector& xdot) {
    const int K = t.order();
    return TaylorVector(dae.E(t.value(), K) * xdot - dae.A(t.value(), K) * x -
                        dae.rhs(t.value(), K));
  };
  r.Fx = [dae](const Taylor& t, const TaylorVector&, const TaylorVector&) {
    return -dae.A(t.value(), t.order());
  };
  r.Fxdot = [dae](const Taylor& t, const TaylorVector&, const TaylorVector&) {
    return dae.E(t.value(), t.order());
  };
  return r;
}

/** Finite-difference consistency check of the Jacobian closures against the
    residual closure at one point; report-only. */
struct ArrayCheckReport {
  double m_deviation = 0.0;
  double n_deviation = 0.0;
  double residual_norm = 0.0;
};

inline ArrayCheckReport verify_nonlinear_array(const NonlinearDae& dae, int ell,
                                               double t, const Eigen::VectorXd& x,
                                               const Eigen::VectorXd& y,
                                               double h = 1e-7) {
  const int n = dae.n;
  ArrayCheckReport rep;
  rep.residual_norm = dae.F_array(ell, t, x, y).cwiseAbs().maxCoeff();

  const Eigen::MatrixXd M = dae.M_of(ell, t, x, y);
  for (int j = 0; j < (ell + 1) * n; ++j) {
    Eigen::VectorXd yp = y, ym = y;
    yp(j) += h;
    ym(j) -= h;
    const Eigen::VectorXd col =
        (dae.F_array(ell, t, x, yp) - dae.F_array(ell, t, x, ym)) / (2 * h);
    rep.m_deviation = std::max(rep.m_deviation, (M.col(j) - col).cwiseAbs().maxCoeff());
  }
  const Eigen::MatrixXd N = dae.N_of(ell, t, x, y);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    const Eigen::VectorXd col =
        (dae.F_array(ell, t, xp, y) - dae.F_array(ell, t, xm, y)) / (2 * h);
    rep.n_deviation =
        std::max(rep.n_deviation, (N.col(j) + col).cwiseAbs().maxCoeff());
  }
  return rep;
}

}  // namespace geodae
