#pragma once

// Flow propagation for homogeneous linear DAEs and the geometric error
// with respect to a quadratic Lie group.

#include "geodae/integrate.hpp"

namespace geodae {

/// Max-abs entry of Phi^T X Phi - X.
inline double geometric_error(const Eigen::MatrixXd& Phi,
                              const Eigen::MatrixXd& X) {
  return (Phi.transpose() * X * Phi - X).cwiseAbs().maxCoeff();
}

struct FlowReport {
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> Phi;  // d x d flow matrices on the grid
  Eigen::MatrixXd X;
  double max_error = 0.0;
  long steps = 0;
};

/** Propagates the d columns of the flow of the inherent variables on a fixed
    grid. Structure-preserving versions read the flow in the internally
    constructed coordinates (a fresh frame per grid point); all other
    versions map the state through the problem's constructing frame and read
    the leading components. */
inline FlowReport propagate_flow(
    const LinearDae& dae, const CharValues& cv, const IntegratorSpec& spec_in,
    double t0, double t1, int n_steps, const Eigen::MatrixXd& X,
    const std::function<TaylorMatrix(double, int)>& frame) {
  IntegratorSpec spec = spec_in;
  validate(spec);
  if (spec.method == Method::IMPLICIT_EULER) {
    spec.method = Method::RADAU;
    spec.stages = 1;
  }
  const int n = dae.n, d = cv.d, a = cv.a;
  const double h = (t1 - t0) / n_steps;
  const bool internal = !spec.direct &&
                        (spec.strategy.kind == QKind::SELF_ADJOINT ||
                         spec.strategy.kind == QKind::SKEW_ADJOINT);
  detail::require(internal || static_cast<bool>(frame),
                  "propagate_flow: non-geometric versions need the constructor frame");

  FlowReport rep;
  rep.X = X;
  rep.steps = n_steps;

  // Initial columns: unit vectors of the flow coordinates, lifted to
  // consistent full states.
  Eigen::MatrixXd state(n, d);
  std::optional<LinearWindow> window;
  if (internal) {
    window.emplace(dae, cv, spec.strategy, t0, h);
    for (int i = 0; i < d; ++i)
      state.col(i) = window->to_full(t0, Eigen::VectorXd::Unit(d, i));
  } else {
    const Eigen::MatrixXd F0 = frame(t0, 1).value();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(F0);
    for (int i = 0; i < d; ++i) {
      Eigen::VectorXd xhat = Eigen::VectorXd::Zero(n);
      xhat(i) = 1.0;
      state.col(i) = lu.solve(xhat);
    }
  }

  for (int k = 0; k <= n_steps; ++k) {
    const double t = t0 + k * (t1 - t0) / n_steps;
    if (internal && k > 0)
      window.emplace(dae, cv, spec.strategy, t, h);

    Eigen::MatrixXd Phi(d, d);
    if (internal) {
      const Eigen::MatrixXd z =
          window->q(t).value().partialPivLu().solve(state);
      Phi = z.topRows(d);
    } else {
      Phi = (frame(t, 1).value() * state).topRows(d);
    }
    rep.times.push_back(t);
    rep.Phi.push_back(Phi);
    rep.max_error = std::max(rep.max_error, geometric_error(Phi, X));
    if (k == n_steps) break;

    if (spec.direct) {
      ReducedDae red(dae, cv, t);
      state = spec.method == Method::GAUSS_LOBATTO
                  ? gauss_lobatto_direct_step_linear(red, t, h, state, spec.stages)
                  : radau_direct_step_linear(red, t, h, state, spec.stages);
      continue;
    }
    if (!internal) window.emplace(dae, cv, spec.strategy, t, h);
    const Eigen::MatrixXd x1 =
        window->q(t).value().partialPivLu().solve(state).topRows(d);
    Eigen::MatrixXd x1n;
    if (spec.method == Method::DORMAND_PRINCE) {
      auto mrhs = [&](double tq, const Eigen::MatrixXd& z) -> Eigen::MatrixXd {
        const AffineRhs r = window->affine(tq);
        return r.B * z + r.b.replicate(1, z.cols());
      };
      x1n = step_explicit(mrhs, t, x1, h, dormand_prince_tableau(spec.stages)).x;
    } else {
      auto rhs = [&](double tq) { return window->affine(tq); };
      x1n = collocation_step_linear(rhs, t, h, x1,
                                    collocation_grid(spec.method, spec.stages));
    }
    const AffineRhs re = window->affine(t + h);
    Eigen::MatrixXd z(n, d);
    z.topRows(d) = x1n;
    if (a > 0) z.bottomRows(a) = re.P * x1n + re.p.replicate(1, d);
    state = window->q(t + h).value() * z;
  }
  return rep;
}

}  // namespace geodae
