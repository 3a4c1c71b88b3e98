#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "geodae/inherent.hpp"
#include "geodae/problems.hpp"

using namespace geodae;

namespace {

Eigen::VectorXd self3_exact(const Problem& p, double t) {
  // Canonical solution (cos t, sin t, 0) pulled back through the frame.
  Eigen::Vector3d xhat(std::cos(t), std::sin(t), 0.0);
  return p.constructor_q(t, 1).value().partialPivLu().solve(xhat);
}

// Derivative of the window coordinate of a known solution, by central FD.
Eigen::VectorXd x1_fd(const LinearWindow& w,
                      const std::function<Eigen::VectorXd(double)>& sol,
                      double t, double h) {
  return (w.to_x1(t + h, sol(t + h)) - w.to_x1(t - h, sol(t - h))) / (2 * h);
}

}  // namespace

TEST_CASE("pure ODE: every strategy returns E^{-1}(A x + f)") {
  LinearDae dae;
  dae.n = 3;
  Eigen::MatrixXd A0(3, 3);
  A0 << 0.2, 1.0, -0.3, 0.5, -0.7, 0.1, 0.0, 0.4, 0.9;
  dae.E = [](double, int order) {
    return TaylorMatrix(Eigen::MatrixXd::Identity(3, 3), order);
  };
  dae.A = [A0](double, int order) { return TaylorMatrix(A0, order); };
  dae.f = [](double t, int order) {
    TaylorVector f(3, 1, order);
    f.set_entry(1, 0, taylor_sin(1.0, t, order));
    return f;
  };
  const CharValues cv{0, 0, 3};
  const Eigen::Vector3d x1(0.3, -0.4, 0.8);
  for (QKind kind : {QKind::INHERENT, QKind::SPIN_STABILIZED, QKind::ROTATED}) {
    QStrategy s;
    s.kind = kind;
    LinearWindow w = choose_q(s, dae, cv, 0.3, 0.1);
    auto [xdot1, x2] = inherent_rhs_linear(w, 0.35, w.to_x1(0.35, x1));
    CHECK(x2.size() == 0);
    // Map back: the full-state derivative is coordinate independent.
    Eigen::VectorXd expect = A0 * x1;
    expect(1) += std::sin(0.35);
    const Eigen::VectorXd got = w.q(0.35).value() * xdot1 +
                                derivative(w.q(0.35)).value() * w.to_x1(0.35, x1);
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("INHERENT transformation is constant, SPIN_STABILIZED is linear") {
  Problem p = make_wensch();
  QStrategy s;
  s.kind = QKind::INHERENT;
  LinearWindow wi = choose_q(s, *p.linear, p.cv, 0.2, 0.1);
  CHECK(max_abs(wi.q(0.27) - wi.q(0.2)) == 0.0);
  CHECK(derivative(wi.q(0.25)).value().cwiseAbs().maxCoeff() == 0.0);

  s.kind = QKind::SPIN_STABILIZED;
  LinearWindow ws = choose_q(s, *p.linear, p.cv, 0.2, 0.1);
  const Eigen::MatrixXd q0 = ws.q(0.2).value();
  const Eigen::MatrixXd qd = derivative(ws.q(0.2)).value();
  CHECK((ws.q(0.26).value() - (q0 + 0.06 * qd)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("Wensch: inherent ODE reproduces the exact solution derivative") {
  Problem p = make_wensch();
  auto sol = p.exact;
  for (QKind kind :
       {QKind::INHERENT, QKind::SPIN_STABILIZED, QKind::ROTATED}) {
    QStrategy s;
    s.kind = kind;
    const double t0 = 0.4;
    LinearWindow w = choose_q(s, *p.linear, p.cv, t0, 0.05);
    for (double t : {t0, t0 + 0.03}) {
      const Eigen::VectorXd x1 = w.to_x1(t, sol(t));
      auto [xdot1, x2] = inherent_rhs_linear(w, t, x1);
      // Algebraic recovery reconstructs the full state.
      CHECK((w.to_full(t, x1) - sol(t)).cwiseAbs().maxCoeff() < 1e-9);
      // L matches the drift of the window coordinate of the solution.
      const Eigen::VectorXd fd = x1_fd(w, sol, t, 1e-6);
      CHECK((xdot1 - fd).cwiseAbs().maxCoeff() < 1e-4 * (1 + fd.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("self-adjoint window brings the leading block to J") {
  Problem p = make_self3();
  QStrategy s;
  s.kind = QKind::SELF_ADJOINT;
  for (double t0 : {0.0, 0.9, 2.4}) {
    LinearWindow w = choose_q(s, *p.linear, p.cv, t0, 0.2);
    for (double t : {t0, t0 + 0.13}) {
      const TaylorMatrix Q = w.q(t);
      const TaylorMatrix QEQ = transpose(Q) * p.linear->E(t, 2) * Q;
      const Eigen::MatrixXd J = symplectic_unit(1);
      CHECK((QEQ.value().topLeftCorner(2, 2) - J).cwiseAbs().maxCoeff() < 1e-10);
      // Derivative of the leading block vanishes along the window.
      CHECK(QEQ.coeff(1).topLeftCorner(2, 2).cwiseAbs().maxCoeff() < 1e-9);
      // Off-diagonal blocks vanish for the mu = 0 construction.
      CHECK(QEQ.value().topRightCorner(2, 1).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("skew-adjoint window brings the leading block to S") {
  for (const std::string& name : {"skew4", "indef5"}) {
    Problem p = make_problem(name);
    QStrategy s;
    s.kind = QKind::SKEW_ADJOINT;
    const Eigen::MatrixXd S = signature_matrix(p.linear->p, p.linear->q);
    const int d = p.cv.d;
    for (double t0 : {0.0, 1.7}) {
      LinearWindow w = choose_q(s, *p.linear, p.cv, t0, 0.2);
      const double t = t0 + 0.11;
      const TaylorMatrix Q = w.q(t);
      const TaylorMatrix QEQ = transpose(Q) * p.linear->E(t, 2) * Q;
      CHECK((QEQ.value().topLeftCorner(d, d) - S).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(QEQ.coeff(1).topLeftCorner(d, d).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("structure of the assembled rhs matrix") {
  // Hamiltonian: J B symmetric; generalized orthogonal: S B skew.
  {
    Problem p = make_self3();
    QStrategy s;
    s.kind = QKind::SELF_ADJOINT;
    const Eigen::MatrixXd J = symplectic_unit(1);
    for (int i = 0; i < 20; ++i) {
      const double t0 = 0.31 * i;
      LinearWindow w = choose_q(s, *p.linear, p.cv, t0, 0.3);
      for (double t : {t0, t0 + 0.17}) {
        const Eigen::MatrixXd C = J * w.affine(t).B;
        CHECK((C - C.transpose()).cwiseAbs().maxCoeff() < 1e-9);
      }
    }
    // On the canonical data (frame frozen to the identity via omega = 0)
    // the rhs matrix is exactly J^{-1}: xdot1 = J^{-1} x1.
    Problem pc = make_self3({{"omega", 0.0}});
    LinearWindow w0 = choose_q(s, *pc.linear, pc.cv, 0.0, 0.1);
    const Eigen::MatrixXd C0 = J * w0.affine(0.0).B;
    CHECK((C0 - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  }
  for (const std::string& name : {"skew4", "indef5"}) {
    Problem p = make_problem(name);
    QStrategy s;
    s.kind = QKind::SKEW_ADJOINT;
    const Eigen::MatrixXd S = signature_matrix(p.linear->p, p.linear->q);
    for (int i = 0; i < 20; ++i) {
      const double t0 = 0.31 * i;
      LinearWindow w = choose_q(s, *p.linear, p.cv, t0, 0.3);
      const Eigen::MatrixXd JB = S * w.affine(t0 + 0.11).B;
      CHECK((JB + JB.transpose()).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("self3: all strategies advance the same solution") {
  Problem p = make_self3();
  for (QKind kind : {QKind::INHERENT, QKind::SPIN_STABILIZED, QKind::ROTATED,
                     QKind::SELF_ADJOINT}) {
    QStrategy s;
    s.kind = kind;
    const double t0 = 1.3;
    LinearWindow w = choose_q(s, *p.linear, p.cv, t0, 0.1);
    auto sol = [&](double t) { return self3_exact(p, t); };
    for (double t : {t0, t0 + 0.06}) {
      const Eigen::VectorXd x1 = w.to_x1(t, sol(t));
      CHECK((w.to_full(t, x1) - sol(t)).cwiseAbs().maxCoeff() < 1e-10);
      auto [xdot1, x2] = inherent_rhs_linear(w, t, x1);
      const Eigen::VectorXd fd = x1_fd(w, sol, t, 1e-6);
      CHECK((xdot1 - fd).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("symmetry tag is enforced") {
  Problem w = make_wensch();
  QStrategy s;
  s.kind = QKind::SELF_ADJOINT;
  CHECK_THROWS_AS(choose_q(s, *w.linear, w.cv, 0.2, 0.1), std::invalid_argument);
  Problem s4 = make_skew4();
  CHECK_THROWS_AS(choose_q(s, *s4.linear, s4.cv, 0.2, 0.1), std::invalid_argument);
}

TEST_CASE("pendulum: consistent seed and Gauss-Newton evaluation") {
  Problem p = make_pendulum();
  const NonlinearDae& dae = *p.nonlinear;
  GnCache cache = seed_cache(dae, 0.0, p.x0);
  CHECK(dae.F_array(3, 0.0, cache.u.head(5), cache.u.tail(20))
            .cwiseAbs()
            .maxCoeff() < 1e-10);

  QStrategy s;
  s.kind = QKind::INHERENT;
  NonlinearWindow w(dae, s, 0.0, 0.1, cache);
  const Eigen::VectorXd x1 = w.to_x1(0.0, p.x0);
  GnOptions opts;
  opts.check_rank = true;
  GnResult res = w.eval(0.0, x1, opts);
  CHECK(res.converged);
  // Consistent guess: convergence in one step.
  CHECK(res.iterations <= 1);
  CHECK(res.residual < 1e-12);
  Eigen::VectorXd expect_x(5), expect_xdot(5);
  expect_x << 0, 0, 1, 0, 0;
  expect_xdot << 0, -1, 0, 0, 0;
  CHECK((res.x - expect_x).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((res.xdot - expect_xdot).cwiseAbs().maxCoeff() < 1e-10);
  // The inherent velocity has unit norm: xdot lies in the span of the
  // differential columns of the orthogonal Q.
  CHECK(res.L.norm() == Catch::Approx(1.0).margin(1e-9));
  // Full row rank at the solution.
  CHECK(res.min_singular_ratio > 1e-8);
}

TEST_CASE("pendulum: superlinear residual decay from perturbed guesses") {
  Problem p = make_pendulum();
  const NonlinearDae& dae = *p.nonlinear;
  GnCache cache = seed_cache(dae, 0.0, p.x0);
  QStrategy s;
  s.kind = QKind::INHERENT;
  NonlinearWindow w(dae, s, 0.0, 0.1, cache);
  const Eigen::MatrixXd Q = w.q_value(0.0);
  const Eigen::MatrixXd Qdot = w.qdot_value(0.0);

  std::mt19937 rng(23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd guess = cache.u;
    for (int i = 0; i < guess.size(); ++i) guess(i) += 1e-3 * u(rng);
    const Eigen::VectorXd x1 = w.to_x1(0.0, p.x0);
    GnResult res = gauss_newton_eval(dae, Q, Qdot, 0.0, x1, guess);
    REQUIRE(res.converged);
    // Quadratic-type contraction: r_{k+1} <= C r_k^2 with a uniform C until
    // roundoff; assert superlinear decay over the recorded history.
    for (size_t k = 0; k + 1 < res.residual_history.size(); ++k) {
      const double rk = res.residual_history[k];
      const double rk1 = res.residual_history[k + 1];
      if (rk1 < 1e-14) break;
      CHECK(rk1 <= 50.0 * rk * rk);
    }
  }
}

TEST_CASE("linear problem through the nonlinear path matches the linear path") {
  Problem p = make_wensch();
  TaylorResidual res = linear_as_residual(*p.linear);
  NonlinearDae nl = make_nonlinear(res, 0, 1, 1);

  QStrategy s;
  s.kind = QKind::INHERENT;
  const double t0 = 0.3;
  LinearWindow lw = choose_q(s, *p.linear, p.cv, t0, 0.05);

  const Eigen::VectorXd x_exact = p.exact(t0);
  const Eigen::VectorXd x1 = lw.to_x1(t0, x_exact);
  auto [xdot1_lin, x2_lin] = inherent_rhs_linear(lw, t0, x1);

  // Same transformation handed to the Gauss-Newton evaluator.
  const Eigen::MatrixXd Q = lw.q(t0).value();
  Eigen::VectorXd guess(nl.n + 2 * nl.n);
  guess << x_exact, -x_exact, x_exact;  // xdot = -x on the solution; w free
  GnResult gn = gauss_newton_eval(nl, Q, Eigen::MatrixXd::Zero(2, 2), t0, x1,
                                  guess);
  REQUIRE(gn.converged);
  CHECK((gn.L - xdot1_lin).cwiseAbs().maxCoeff() < 1e-10 * 1e5);
  CHECK((gn.R - x2_lin).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((gn.x - x_exact).cwiseAbs().maxCoeff() < 1e-10);
}
