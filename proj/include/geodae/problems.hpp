#pragma once

// Built-in problem library: a stiff linear DAE with known solution, the
// constrained pendulum, and three homogeneous flow problems built by
// congruence from constant canonical pairs.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geodae/reduce.hpp"

namespace geodae {

/// Taylor coefficients of sin(w t) at t.
inline Taylor taylor_sin(double w, double t, int order) {
  Taylor s(order);
  double wj = 1.0;
  for (int j = 0; j <= order; ++j) {
    s[j] = wj * std::sin(w * t + j * M_PI / 2.0) / detail::factorial(j);
    wj *= w;
  }
  return s;
}

/// Taylor coefficients of exp(c t) at t.
inline Taylor taylor_exp(double c, double t, int order) {
  Taylor e(order);
  double cj = std::exp(c * t);
  for (int j = 0; j <= order; ++j) {
    e[j] = cj / detail::factorial(j);
    cj *= c;
  }
  return e;
}

struct Problem {
  std::string name;
  std::string title;
  std::optional<LinearDae> linear;
  std::optional<NonlinearDae> nonlinear;
  CharValues cv;
  Eigen::VectorXd x0;
  double t_end = 1.0;
  std::map<std::string, double> params;
  // Exact solution, when one is built in.
  std::function<Eigen::VectorXd(double)> exact;
  // Frame of the constructing transformation, x_hat = Qc(t) x, for problems
  // assembled by congruence; flow errors of non-geometric versions are
  // measured in its leading components.
  std::function<TaylorMatrix(double, int)> constructor_q;
  Eigen::MatrixXd flow_X;  // group matrix of the flow (J or S)
  std::function<double(const Eigen::VectorXd&)> constraint;

  int n() const { return linear ? linear->n : nonlinear->n; }
};

namespace detail {

inline void apply_params(std::map<std::string, double>& defaults,
                         const std::map<std::string, double>& user) {
  for (const auto& [k, v] : user) {
    auto it = defaults.find(k);
    if (it == defaults.end())
      throw std::invalid_argument("unknown parameter: " + k);
    it->second = v;
  }
}

// Tridiagonal transformation with unit diagonal and s(t) = sin(w t)/2 off it.
inline std::function<TaylorMatrix(double, int)> banded_q(int n, double w) {
  return [n, w](double t, int order) {
    const Taylor s = 0.5 * taylor_sin(w, t, order);
    TaylorMatrix Q(n, n, order);
    for (int i = 0; i < n; ++i) Q.set_entry(i, i, Taylor(1.0, order));
    for (int i = 0; i + 1 < n; ++i) {
      Q.set_entry(i, i + 1, s);
      Q.set_entry(i + 1, i, s);
    }
    return Q;
  };
}

inline Problem flow_problem(const std::string& name, const std::string& title,
                            const Eigen::MatrixXd& Ehat,
                            const Eigen::MatrixXd& Ahat, Symmetry sym, int p,
                            int q, const Eigen::MatrixXd& X,
                            const std::map<std::string, double>& user) {
  Problem prob;
  prob.name = name;
  prob.title = title;
  prob.params = {{"omega", 1.0}};
  apply_params(prob.params, user);
  const double w = prob.params.at("omega");
  const int n = static_cast<int>(Ehat.rows());

  LinearDae canonical;
  canonical.n = n;
  canonical.E = [Ehat](double, int order) { return TaylorMatrix(Ehat, order); };
  canonical.A = [Ahat](double, int order) { return TaylorMatrix(Ahat, order); };
  canonical.symmetry = sym;
  canonical.p = p;
  canonical.q = q;

  prob.constructor_q = banded_q(n, w);
  prob.linear = congruence_transform_dae(canonical, prob.constructor_q);
  const int d = sym == Symmetry::self_adjoint ? 2 * p : p + q;
  prob.cv = CharValues{0, n - d, d};
  prob.flow_X = X;
  prob.t_end = 200.0 * M_PI;
  prob.x0 = Eigen::VectorXd::Zero(n);
  prob.x0(0) = 1.0;  // Qc(0) = I, leading canonical basis vector
  return prob;
}

}  // namespace detail

inline Problem make_wensch(const std::map<std::string, double>& user = {}) {
  Problem prob;
  prob.name = "wensch";
  prob.title = "stiff linear DAE, exact solution exp(-t)";
  prob.params = {{"delta", -1e5}, {"eta", 0.0}};
  detail::apply_params(prob.params, user);
  const double delta = prob.params.at("delta");
  const double eta = prob.params.at("eta");

  LinearDae dae;
  dae.n = 2;
  dae.E = [delta](double t, int order) {
    TaylorMatrix E(2, 2, order);
    E.set_entry(0, 0, Taylor(delta - 1.0, order));
    Taylor dt = Taylor::time(t, order) * delta;
    E.set_entry(0, 1, dt);
    return E;
  };
  dae.A = [delta, eta](double t, int order) {
    TaylorMatrix A(2, 2, order);
    A.set_entry(0, 0, Taylor(-eta * (delta - 1.0), order));
    A.set_entry(0, 1, Taylor::time(t, order) * (-eta * delta));
    A.set_entry(1, 0, Taylor(delta - 1.0, order));
    A.set_entry(1, 1, Taylor::time(t, order) * delta - 1.0);
    return A;
  };
  dae.f = [delta, eta](double t, int order) {
    const Taylor e = taylor_exp(-1.0, t, order);
    const Taylor lin = Taylor::time(t, order) * delta + (delta - 1.0);
    TaylorVector f(2, 1, order);
    f.set_entry(0, 0, (eta - 1.0) * lin * e);
    f.set_entry(1, 0, -(Taylor::time(t, order) * delta + (delta - 2.0)) * e);
    return f;
  };
  prob.linear = dae;
  prob.cv = CharValues{0, 1, 1};
  prob.x0 = Eigen::Vector2d(1.0, 1.0);
  prob.t_end = 1.0;
  prob.exact = [](double t) {
    return Eigen::VectorXd(Eigen::Vector2d(std::exp(-t), std::exp(-t)));
  };
  return prob;
}

inline Problem make_pendulum(const std::map<std::string, double>& user = {}) {
  Problem prob;
  prob.name = "pendulum";
  prob.title = "constrained pendulum, five equations";
  detail::apply_params(prob.params, user);

  TaylorResidual r;
  r.n = 5;
  r.F = [](const Taylor& /*t*/, const TaylorVector& x, const TaylorVector& xd) {
    const int K = x.order();
    TaylorVector F(5, 1, K);
    F.set_entry(0, 0, xd.entry(2, 0) - x.entry(0, 0));
    F.set_entry(1, 0, xd.entry(3, 0) - x.entry(1, 0));
    F.set_entry(2, 0, xd.entry(0, 0) + 2.0 * x.entry(2, 0) * x.entry(4, 0));
    F.set_entry(3, 0,
                xd.entry(1, 0) + 1.0 + 2.0 * x.entry(3, 0) * x.entry(4, 0));
    F.set_entry(4, 0, x.entry(2, 0) * x.entry(2, 0) +
                          x.entry(3, 0) * x.entry(3, 0) - 1.0);
    return F;
  };
  r.Fx = [](const Taylor&, const TaylorVector& x, const TaylorVector&) {
    const int K = x.order();
    TaylorMatrix Fx(5, 5, K);
    Fx.set_entry(0, 0, Taylor(-1.0, K));
    Fx.set_entry(1, 1, Taylor(-1.0, K));
    Fx.set_entry(2, 2, 2.0 * x.entry(4, 0));
    Fx.set_entry(2, 4, 2.0 * x.entry(2, 0));
    Fx.set_entry(3, 3, 2.0 * x.entry(4, 0));
    Fx.set_entry(3, 4, 2.0 * x.entry(3, 0));
    Fx.set_entry(4, 2, 2.0 * x.entry(2, 0));
    Fx.set_entry(4, 3, 2.0 * x.entry(3, 0));
    return Fx;
  };
  r.Fxdot = [](const Taylor&, const TaylorVector& x, const TaylorVector&) {
    const int K = x.order();
    Eigen::MatrixXd Fxd = Eigen::MatrixXd::Zero(5, 5);
    Fxd(0, 2) = 1.0;
    Fxd(1, 3) = 1.0;
    Fxd(2, 0) = 1.0;
    Fxd(3, 1) = 1.0;
    return TaylorMatrix(Fxd, K);
  };

  prob.nonlinear = make_nonlinear(r, 2, 3, 2);
  prob.cv = CharValues{2, 3, 2};
  prob.x0 = Eigen::VectorXd::Zero(5);
  prob.x0(2) = 1.0;
  prob.t_end = 10.0;
  prob.constraint = [](const Eigen::VectorXd& x) {
    return std::abs(x(2) * x(2) + x(3) * x(3) - 1.0);
  };
  return prob;
}

inline Problem make_self3(const std::map<std::string, double>& user = {}) {
  Eigen::MatrixXd Ehat(3, 3), Ahat(3, 3);
  Ehat << 0, 1, 0, -1, 0, 0, 0, 0, 0;
  Ahat = Eigen::MatrixXd::Identity(3, 3);
  return detail::flow_problem("self3",
                              "self-adjoint DAE with symplectic flow",
                              Ehat, Ahat, Symmetry::self_adjoint, 1, 0,
                              symplectic_unit(1), user);
}

inline Problem make_skew4(const std::map<std::string, double>& user = {}) {
  Eigen::MatrixXd Ehat = Eigen::MatrixXd::Zero(4, 4);
  Ehat(0, 0) = 1.0;
  Ehat(1, 1) = 1.0;
  Eigen::MatrixXd Ahat = Eigen::MatrixXd::Zero(4, 4);
  Ahat(0, 1) = 1.0;
  Ahat(1, 0) = -1.0;
  Ahat(2, 3) = 1.0;
  Ahat(3, 2) = -1.0;
  return detail::flow_problem("skew4",
                              "skew-adjoint DAE with orthogonal flow",
                              Ehat, Ahat, Symmetry::skew_adjoint, 2, 0,
                              signature_matrix(2, 0), user);
}

inline Problem make_indef5(const std::map<std::string, double>& user = {}) {
  Eigen::MatrixXd Ehat = Eigen::MatrixXd::Zero(5, 5);
  Ehat(0, 0) = 1.0;
  Ehat(1, 1) = 1.0;
  Ehat(2, 2) = -1.0;
  Eigen::MatrixXd Ahat = Eigen::MatrixXd::Zero(5, 5);
  Ahat(0, 1) = 1.0;
  Ahat(1, 0) = -1.0;
  Ahat(3, 4) = 1.0;
  Ahat(4, 3) = -1.0;
  return detail::flow_problem("indef5",
                              "skew-adjoint DAE with flow in O(2,1)",
                              Ehat, Ahat, Symmetry::skew_adjoint, 2, 1,
                              signature_matrix(2, 1), user);
}

inline Problem make_problem(const std::string& name,
                            const std::map<std::string, double>& params = {}) {
  if (name == "wensch") return make_wensch(params);
  if (name == "pendulum") return make_pendulum(params);
  if (name == "self3") return make_self3(params);
  if (name == "skew4") return make_skew4(params);
  if (name == "indef5") return make_indef5(params);
  throw std::invalid_argument("unknown problem: " + name);
}

inline std::vector<std::string> problem_names() {
  return {"wensch", "pendulum", "self3", "skew4", "indef5"};
}

}  // namespace geodae
