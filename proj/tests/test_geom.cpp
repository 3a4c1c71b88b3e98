#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "geodae/geom.hpp"
#include "geodae/problems.hpp"

using namespace geodae;

namespace {

IntegratorSpec fixed_spec(Method m, int stages, QKind kind, bool direct = false) {
  IntegratorSpec s;
  s.method = m;
  s.stages = stages;
  s.direct = direct;
  s.strategy.kind = kind;
  return s;
}

}  // namespace

TEST_CASE("geometric error basics") {
  const Eigen::MatrixXd J = symplectic_unit(1);
  CHECK(geometric_error(Eigen::MatrixXd::Identity(2, 2), J) == 0.0);
  CHECK(geometric_error(2.0 * Eigen::MatrixXd::Identity(2, 2), J) == 3.0);

  // Product of random symplectic shears stays in the group.
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd Phi = Eigen::MatrixXd::Identity(2, 2);
  for (int k = 0; k < 20; ++k) {
    Eigen::MatrixXd S = Eigen::MatrixXd::Identity(2, 2);
    if (k % 2)
      S(0, 1) = u(rng);
    else
      S(1, 0) = u(rng);
    Phi = Phi * S;
  }
  CHECK(geometric_error(Phi, J) < 1e-12);
}

TEST_CASE("constant Hamiltonian ODE: Gauss flow stays symplectic") {
  const Eigen::MatrixXd J = symplectic_unit(1);
  LinearDae dae;
  dae.n = 2;
  dae.E = [](double, int o) {
    return TaylorMatrix(Eigen::MatrixXd::Identity(2, 2), o);
  };
  dae.A = [J](double, int o) { return TaylorMatrix(J, o); };
  dae.symmetry = Symmetry::none;
  auto frame = [](double, int o) { return TaylorMatrix::identity(2, o); };
  FlowReport rep =
      propagate_flow(dae, CharValues{0, 0, 2}, fixed_spec(Method::GAUSS, 2, QKind::INHERENT),
                     0.0, 100.0, 1000, J, frame);
  CHECK(rep.max_error < 1e-10);

  // Zero right-hand side: the flow is the identity.
  LinearDae zero = dae;
  zero.A = [](double, int o) { return TaylorMatrix(2, 2, o); };
  FlowReport rz =
      propagate_flow(zero, CharValues{0, 0, 2}, fixed_spec(Method::GAUSS, 2, QKind::INHERENT),
                     0.0, 10.0, 100, J, frame);
  CHECK(rz.max_error == 0.0);
  for (const auto& Phi : rz.Phi)
    CHECK((Phi - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("self3 flow: structure-preserving runs reach roundoff level") {
  Problem p = make_self3();
  const double t1 = 200.0 * M_PI;
  FlowReport rep = propagate_flow(
      *p.linear, p.cv, fixed_spec(Method::GAUSS, 2, QKind::SELF_ADJOINT), 0.0,
      t1, 1000, p.flow_X, p.constructor_q);
  INFO("SELF_ADJOINT error " << rep.max_error);
  CHECK(rep.max_error <= 5e-7);
  CHECK(rep.Phi.front() == Eigen::MatrixXd::Identity(2, 2));
}

TEST_CASE("self3 flow: rotated and explicit runs are not structure preserving") {
  Problem p = make_self3();
  const double t1 = 200.0 * M_PI;
  FlowReport rot = propagate_flow(
      *p.linear, p.cv, fixed_spec(Method::GAUSS, 2, QKind::ROTATED), 0.0, t1,
      1000, p.flow_X, p.constructor_q);
  INFO("ROTATED error " << rot.max_error);
  CHECK(rot.max_error >= 1e-5);
  CHECK(rot.max_error <= 1e-2);

  FlowReport dp = propagate_flow(
      *p.linear, p.cv, fixed_spec(Method::DORMAND_PRINCE, 7, QKind::INHERENT),
      0.0, t1, 1000, p.flow_X, p.constructor_q);
  INFO("DORMAND-PRINCE error " << dp.max_error);
  CHECK(dp.max_error >= 1e-2);

  FlowReport gl = propagate_flow(
      *p.linear, p.cv,
      fixed_spec(Method::GAUSS_LOBATTO, 2, QKind::INHERENT, true), 0.0, t1,
      1000, p.flow_X, p.constructor_q);
  INFO("GAUSS-LOBATTO DIRECT error " << gl.max_error);
  // Orders of magnitude above the structure-preserving runs.
  CHECK(gl.max_error >= 1e-4);
}

TEST_CASE("skew4 flow: orthogonal structure preserved by the skew window") {
  Problem p = make_skew4();
  const double t1 = 200.0 * M_PI;
  FlowReport rep = propagate_flow(
      *p.linear, p.cv, fixed_spec(Method::GAUSS, 2, QKind::SKEW_ADJOINT), 0.0,
      t1, 1000, p.flow_X, p.constructor_q);
  INFO("SKEW_ADJOINT error " << rep.max_error);
  CHECK(rep.max_error <= 5e-7);

  FlowReport gl = propagate_flow(
      *p.linear, p.cv,
      fixed_spec(Method::GAUSS_LOBATTO, 2, QKind::INHERENT, true), 0.0, t1,
      1000, p.flow_X, p.constructor_q);
  INFO("GAUSS-LOBATTO DIRECT error " << gl.max_error);
  CHECK(gl.max_error >= 1e-2);
}

TEST_CASE("indef5 flow: O(2,1) structure preserved, others drift") {
  Problem p = make_indef5();
  const double t1 = 200.0 * M_PI;
  FlowReport rep = propagate_flow(
      *p.linear, p.cv, fixed_spec(Method::GAUSS, 2, QKind::SKEW_ADJOINT), 0.0,
      t1, 1000, p.flow_X, p.constructor_q);
  INFO("SKEW_ADJOINT error " << rep.max_error);
  CHECK(rep.max_error <= 5e-7);

  for (IntegratorSpec s :
       {fixed_spec(Method::GAUSS_LOBATTO, 2, QKind::INHERENT, true),
        fixed_spec(Method::DORMAND_PRINCE, 7, QKind::INHERENT),
        fixed_spec(Method::GAUSS, 2, QKind::ROTATED)}) {
    FlowReport r = propagate_flow(*p.linear, p.cv, s, 0.0, t1, 1000, p.flow_X,
                                  p.constructor_q);
    INFO(to_string(s.method) << " " << to_string(s.strategy.kind)
                             << (s.direct ? " DIRECT" : "") << " error "
                             << r.max_error);
    CHECK(r.max_error >= 1e-1);
  }
}

TEST_CASE("per-step invariant conservation for Lie-algebra valued systems") {
  // xdot = B(t) x with B^T X + X B = 0 for X = J and X = S: every one-step
  // transfer matrix of Gauss collocation lies in the group.
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  auto algebra_rhs = [&](const Eigen::MatrixXd& X, const Eigen::MatrixXd& C0,
                         const Eigen::MatrixXd& C1) {
    return [X, C0, C1](double t) {
      // Project onto the algebra: G - X G^T X^{-1} satisfies G^T X + X G = 0.
      Eigen::MatrixXd M = C0 + std::sin(t) * C1;
      Eigen::MatrixXd G = M - X * M.transpose() * X.inverse();
      AffineRhs r;
      r.B = G;
      r.b = Eigen::VectorXd::Zero(X.rows());
      r.P = Eigen::MatrixXd::Zero(0, X.rows());
      r.p = Eigen::VectorXd::Zero(0);
      return r;
    };
  };

  const CollocationGrid g = collocation_grid(Method::GAUSS, 2);
  for (const Eigen::MatrixXd& X :
       {symplectic_unit(2), Eigen::MatrixXd(signature_matrix(2, 1))}) {
    const int d = static_cast<int>(X.rows());
    Eigen::MatrixXd C0(d, d), C1(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        C0(i, j) = u(rng);
        C1(i, j) = u(rng);
      }
    auto rhs = algebra_rhs(X, C0, C1);
    REQUIRE((rhs(0.37).B.transpose() * X + X * rhs(0.37).B).cwiseAbs().maxCoeff() <
            1e-12);
    // Per-step transfer matrices from the identity at 1000 different times.
    double per_step_max = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const Eigen::MatrixXd G =
          collocation_step_linear(rhs, 0.013 * k, 0.05, Eigen::MatrixXd::Identity(d, d), g);
      per_step_max = std::max(per_step_max, geometric_error(G, X));
    }
    CHECK(per_step_max <= 1e-10);
  }

  // Accumulated over 1000 steps of a bounded flow only roundoff remains.
  {
    const Eigen::MatrixXd X = symplectic_unit(1);
    Eigen::MatrixXd C0(2, 2), C1(2, 2);
    C0 << 1.4, 0.2, 0.2, 0.9;  // positive definite: bounded oscillatory flow
    C1 << 0.1, 0.05, 0.05, 0.2;
    auto rhs = [&](double t) {
      AffineRhs r;
      r.B = -X * (C0 + std::sin(t) * C1);  // J^{-1} C = -J C
      r.b = Eigen::VectorXd::Zero(2);
      r.P = Eigen::MatrixXd::Zero(0, 2);
      r.p = Eigen::VectorXd::Zero(0);
      return r;
    };
    Eigen::MatrixXd Phi = Eigen::MatrixXd::Identity(2, 2);
    for (int k = 0; k < 1000; ++k)
      Phi = collocation_step_linear(rhs, 0.05 * k, 0.05, Phi, g);
    CHECK(geometric_error(Phi, X) <= 1e-8);
  }

  // Dormand-Prince drifts over 1000 steps on the same field.
  {
    const Eigen::MatrixXd X = symplectic_unit(1);
    Eigen::MatrixXd C(2, 2);
    C << 1.3, 0.4, 0.4, -0.2;
    auto mrhs = [&](double, const Eigen::MatrixXd& z) -> Eigen::MatrixXd {
      return X.inverse() * C * z;
    };
    Eigen::MatrixXd Phi = Eigen::MatrixXd::Identity(2, 2);
    for (int k = 0; k < 1000; ++k)
      Phi = step_explicit(mrhs, 0.05 * k, Phi, 0.05, dormand_prince_tableau(7)).x;
    CHECK(geometric_error(Phi, X) > 1e-6);
  }
}
