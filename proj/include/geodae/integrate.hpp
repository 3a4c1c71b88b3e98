#pragma once

// Time stepping: embedded Dormand-Prince pairs, Gauss and Radau collocation,
// Gauss-Lobatto DAE collocation, and the adaptive driver that re-freezes the
// transformation window on every accepted step.

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "geodae/collocation.hpp"
#include "geodae/inherent.hpp"

namespace geodae {

class convergence_error : public std::runtime_error {
 public:
  explicit convergence_error(const std::string& what)
      : std::runtime_error(what) {}
};

enum class Method { GAUSS_LOBATTO, RADAU, DORMAND_PRINCE, GAUSS, IMPLICIT_EULER };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::GAUSS_LOBATTO: return "GAUSS-LOBATTO";
    case Method::RADAU: return "RADAU";
    case Method::DORMAND_PRINCE: return "DORMAND-PRINCE";
    case Method::GAUSS: return "GAUSS";
    case Method::IMPLICIT_EULER: return "IMPLICIT_EULER";
  }
  return "?";
}

struct IntegratorSpec {
  Method method = Method::IMPLICIT_EULER;
  int stages = 1;
  bool direct = false;   // discretize the reduced DAE instead of an inherent ODE
  QStrategy strategy;    // transformation choice for the inherent versions
  bool adaptive = false;
  double tol = 1e-5;
  int n_steps = 100;
  double initial_step = 0.0;  // adaptive start; 0 picks span/100
};

inline int method_order(Method m, int stages) {
  switch (m) {
    case Method::IMPLICIT_EULER: return 1;
    case Method::RADAU: return 2 * stages - 1;
    case Method::GAUSS: return 2 * stages;
    case Method::GAUSS_LOBATTO: return 2 * stages;
    case Method::DORMAND_PRINCE: return stages >= 13 ? 7 : 4;
  }
  return 1;
}

inline void validate(const IntegratorSpec& spec) {
  if (spec.direct && (spec.method == Method::DORMAND_PRINCE || spec.method == Method::GAUSS))
    throw std::invalid_argument("ODE methods require an inherent-ODE version");
  if (spec.method == Method::DORMAND_PRINCE && spec.stages != 7 && spec.stages != 13)
    throw std::invalid_argument("DORMAND-PRINCE pairs have 7 or 13 stages");
  if (spec.stages < 1) throw std::invalid_argument("stages must be positive");
}

struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  long steps_taken = 0;
  long rejected = 0;
};

// -- embedded explicit pairs --------------------------------------------------

/** Butcher data of an embedded pair; b propagates (the lower-order member,
    matching the order the pair is labelled with), e = b_high - b estimates
    the local error. */
struct ExplicitTableau {
  int stages = 0;
  int order = 0;
  Eigen::MatrixXd a;
  Eigen::VectorXd b, e, c;
};

inline const ExplicitTableau& dormand_prince_tableau(int stages) {
  static const ExplicitTableau t7 = [] {
    ExplicitTableau t;
    t.stages = 7;
    t.order = 4;
    t.a = Eigen::MatrixXd::Zero(7, 7);
    t.a(1, 0) = 1.0 / 5;
    t.a(2, 0) = 3.0 / 40;
    t.a(2, 1) = 9.0 / 40;
    t.a(3, 0) = 44.0 / 45;
    t.a(3, 1) = -56.0 / 15;
    t.a(3, 2) = 32.0 / 9;
    t.a(4, 0) = 19372.0 / 6561;
    t.a(4, 1) = -25360.0 / 2187;
    t.a(4, 2) = 64448.0 / 6561;
    t.a(4, 3) = -212.0 / 729;
    t.a(5, 0) = 9017.0 / 3168;
    t.a(5, 1) = -355.0 / 33;
    t.a(5, 2) = 46732.0 / 5247;
    t.a(5, 3) = 49.0 / 176;
    t.a(5, 4) = -5103.0 / 18656;
    t.a(6, 0) = 35.0 / 384;
    t.a(6, 2) = 500.0 / 1113;
    t.a(6, 3) = 125.0 / 192;
    t.a(6, 4) = -2187.0 / 6784;
    t.a(6, 5) = 11.0 / 84;
    t.c = Eigen::VectorXd::Zero(7);
    t.c << 0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1, 1;
    Eigen::VectorXd b5(7), b4(7);
    b5 << 35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0;
    b4 << 5179.0 / 57600, 0, 7571.0 / 16695, 393.0 / 640, -92097.0 / 339200,
        187.0 / 2100, 1.0 / 40;
    t.b = b4;
    t.e = b5 - b4;
    return t;
  }();
  static const ExplicitTableau t13 = [] {
    ExplicitTableau t;
    t.stages = 13;
    t.order = 7;
    t.a = Eigen::MatrixXd::Zero(13, 13);
    t.a(1, 0) = 1.0 / 18;
    t.a(2, 0) = 1.0 / 48;
    t.a(2, 1) = 1.0 / 16;
    t.a(3, 0) = 1.0 / 32;
    t.a(3, 2) = 3.0 / 32;
    t.a(4, 0) = 5.0 / 16;
    t.a(4, 2) = -75.0 / 64;
    t.a(4, 3) = 75.0 / 64;
    t.a(5, 0) = 3.0 / 80;
    t.a(5, 3) = 3.0 / 16;
    t.a(5, 4) = 3.0 / 20;
    t.a(6, 0) = 29443841.0 / 614563906;
    t.a(6, 3) = 77736538.0 / 692538347;
    t.a(6, 4) = -28693883.0 / 1125000000;
    t.a(6, 5) = 23124283.0 / 1800000000;
    t.a(7, 0) = 16016141.0 / 946692911;
    t.a(7, 3) = 61564180.0 / 158732637;
    t.a(7, 4) = 22789713.0 / 633445777;
    t.a(7, 5) = 545815736.0 / 2771057229;
    t.a(7, 6) = -180193667.0 / 1043307555;
    t.a(8, 0) = 39632708.0 / 573591083;
    t.a(8, 3) = -433636366.0 / 683701615;
    t.a(8, 4) = -421739975.0 / 2616292301;
    t.a(8, 5) = 100302831.0 / 723423059;
    t.a(8, 6) = 790204164.0 / 839813087;
    t.a(8, 7) = 800635310.0 / 3783071287;
    t.a(9, 0) = 246121993.0 / 1340847787;
    t.a(9, 3) = -37695042795.0 / 15268766246;
    t.a(9, 4) = -309121744.0 / 1061227803;
    t.a(9, 5) = -12992083.0 / 490766935;
    t.a(9, 6) = 6005943493.0 / 2108947869;
    t.a(9, 7) = 393006217.0 / 1396673457;
    t.a(9, 8) = 123872331.0 / 1001029789;
    t.a(10, 0) = -1028468189.0 / 846180014;
    t.a(10, 3) = 8478235783.0 / 508512852;
    t.a(10, 4) = 1311729495.0 / 1432422823;
    t.a(10, 5) = -10304129995.0 / 1701304382;
    t.a(10, 6) = -48777925059.0 / 3047939560;
    t.a(10, 7) = 15336726248.0 / 1032824649;
    t.a(10, 8) = -45442868181.0 / 3398467696;
    t.a(10, 9) = 3065993473.0 / 597172653;
    t.a(11, 0) = 185892177.0 / 718116043;
    t.a(11, 3) = -3185094517.0 / 667107341;
    t.a(11, 4) = -477755414.0 / 1098053517;
    t.a(11, 5) = -703635378.0 / 230739211;
    t.a(11, 6) = 5731566787.0 / 1027545527;
    t.a(11, 7) = 5232866602.0 / 850066563;
    t.a(11, 8) = -4093664535.0 / 808688257;
    t.a(11, 9) = 3962137247.0 / 1805957418;
    t.a(11, 10) = 65686358.0 / 487910083;
    t.a(12, 0) = 403863854.0 / 491063109;
    t.a(12, 3) = -5068492393.0 / 434740067;
    t.a(12, 4) = -411421997.0 / 543043805;
    t.a(12, 5) = 652783627.0 / 914296604;
    t.a(12, 6) = 11173962825.0 / 925320556;
    t.a(12, 7) = -13158990841.0 / 6184727034;
    t.a(12, 8) = 3936647629.0 / 1978049680;
    t.a(12, 9) = -160528059.0 / 685178525;
    t.a(12, 10) = 248638103.0 / 1413531060;
    t.c = Eigen::VectorXd::Zero(13);
    t.c << 0, 1.0 / 18, 1.0 / 12, 1.0 / 8, 5.0 / 16, 3.0 / 8, 59.0 / 400,
        93.0 / 200, 5490023248.0 / 9719169821, 13.0 / 20,
        1201146811.0 / 1299019798, 1, 1;
    Eigen::VectorXd b8 = Eigen::VectorXd::Zero(13), b7 = Eigen::VectorXd::Zero(13);
    b8(0) = 14005451.0 / 335480064;
    b8(5) = -59238493.0 / 1068277825;
    b8(6) = 181606767.0 / 758867731;
    b8(7) = 561292985.0 / 797845732;
    b8(8) = -1041891430.0 / 1371343529;
    b8(9) = 760417239.0 / 1151165299;
    b8(10) = 118820643.0 / 751138087;
    b8(11) = -528747749.0 / 2220607170;
    b8(12) = 1.0 / 4;
    b7(0) = 13451932.0 / 455176623;
    b7(5) = -808719846.0 / 976000145;
    b7(6) = 1757004468.0 / 5645159321;
    b7(7) = 656045339.0 / 265891186;
    b7(8) = -3867574721.0 / 1518517206;
    b7(9) = 465885868.0 / 322736535;
    b7(10) = 53011238.0 / 667516719;
    b7(11) = 2.0 / 45;
    t.b = b7;
    t.e = b8 - b7;
    return t;
  }();
  if (stages == 13) return t13;
  if (stages == 7) return t7;
  throw std::invalid_argument("DORMAND-PRINCE pairs have 7 or 13 stages");
}

/// Matrix-state right-hand side: columns are independent solutions.
using MatrixRhs = std::function<Eigen::MatrixXd(double, const Eigen::MatrixXd&)>;

struct ExplicitStep {
  Eigen::MatrixXd x;
  Eigen::MatrixXd err;
};

inline ExplicitStep step_explicit(const MatrixRhs& rhs, double t,
                                  const Eigen::MatrixXd& x0, double h,
                                  const ExplicitTableau& tab) {
  std::vector<Eigen::MatrixXd> k(static_cast<size_t>(tab.stages));
  for (int i = 0; i < tab.stages; ++i) {
    Eigen::MatrixXd xi = x0;
    for (int j = 0; j < i; ++j)
      if (tab.a(i, j) != 0.0) xi += h * tab.a(i, j) * k[static_cast<size_t>(j)];
    k[static_cast<size_t>(i)] = rhs(t + tab.c(i) * h, xi);
  }
  ExplicitStep out;
  out.x = x0;
  out.err = Eigen::MatrixXd::Zero(x0.rows(), x0.cols());
  for (int i = 0; i < tab.stages; ++i) {
    if (tab.b(i) != 0.0) out.x += h * tab.b(i) * k[static_cast<size_t>(i)];
    if (tab.e(i) != 0.0) out.err += h * tab.e(i) * k[static_cast<size_t>(i)];
  }
  return out;
}

// -- implicit collocation -----------------------------------------------------

/** Collocation grid in derivative form: interpolation nodes {0, c_1..c_s},
    differentiation matrix over them, and the end-point evaluation rule. */
struct CollocationGrid {
  std::vector<double> nodes;  // size s+1, nodes[0] = 0
  Eigen::MatrixXd D;          // (s+1) x (s+1) derivative matrix
  bool right_end = true;      // last node is 1
  Eigen::VectorXd interp_end; // Lagrange values at 1 when right_end is false
};

inline CollocationGrid collocation_grid(Method m, int s) {
  CollocationGrid g;
  std::vector<double> c;
  switch (m) {
    case Method::IMPLICIT_EULER:
      c = {1.0};
      break;
    case Method::RADAU:
      c = colloc::radau_nodes(s);
      break;
    case Method::GAUSS:
    case Method::GAUSS_LOBATTO:  // on a pure ODE the GL step is Gauss collocation
      c = colloc::gauss_nodes(s);
      break;
    default:
      throw std::invalid_argument("collocation_grid: explicit method");
  }
  g.nodes.push_back(0.0);
  for (double ci : c) g.nodes.push_back(ci);
  g.D = colloc::differentiation_matrix(g.nodes);
  g.right_end = std::abs(g.nodes.back() - 1.0) < 1e-13;
  if (!g.right_end) g.interp_end = colloc::lagrange_values(g.nodes, 1.0);
  return g;
}

/// One collocation step of the affine ODE xdot = B(t) x + b(t); matrix state.
inline Eigen::MatrixXd collocation_step_linear(
    const std::function<AffineRhs(double)>& rhs, double t, double h,
    const Eigen::MatrixXd& x0, const CollocationGrid& g) {
  const int s = static_cast<int>(g.nodes.size()) - 1;
  const int d = static_cast<int>(x0.rows());
  const int m = static_cast<int>(x0.cols());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(s * d, s * d);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(s * d, m);
  for (int i = 1; i <= s; ++i) {
    const AffineRhs ri = rhs(t + g.nodes[static_cast<size_t>(i)] * h);
    for (int j = 1; j <= s; ++j) {
      A.block((i - 1) * d, (j - 1) * d, d, d) =
          (g.D(i, j) / h) * Eigen::MatrixXd::Identity(d, d);
    }
    A.block((i - 1) * d, (i - 1) * d, d, d) -= ri.B;
    R.block((i - 1) * d, 0, d, m) =
        ri.b.replicate(1, m) - (g.D(i, 0) / h) * x0;
  }
  const Eigen::MatrixXd Z = A.partialPivLu().solve(R);
  if (g.right_end) return Z.bottomRows(d);
  Eigen::MatrixXd xe = g.interp_end(0) * x0;
  for (int j = 1; j <= s; ++j)
    xe += g.interp_end(j) * Z.block((j - 1) * d, 0, d, m);
  return xe;
}

/// Collocation step of a nonlinear ODE by Newton with frozen FD Jacobians.
inline Eigen::VectorXd collocation_step_nonlinear(
    const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& L,
    double t, double h, const Eigen::VectorXd& x0, const CollocationGrid& g,
    double tol) {
  const int s = static_cast<int>(g.nodes.size()) - 1;
  const int d = static_cast<int>(x0.size());

  // FD Jacobian of L at the step start, reused for all stages.
  Eigen::MatrixXd JL(d, d);
  {
    const Eigen::VectorXd f0 = L(t, x0);
    const double fd = 1e-7 * (1.0 + x0.cwiseAbs().maxCoeff());
    for (int j = 0; j < d; ++j) {
      Eigen::VectorXd xp = x0;
      xp(j) += fd;
      JL.col(j) = (L(t, xp) - f0) / fd;
    }
  }
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(s * d, s * d);
  for (int i = 1; i <= s; ++i) {
    for (int j = 1; j <= s; ++j)
      A.block((i - 1) * d, (j - 1) * d, d, d) =
          (g.D(i, j) / h) * Eigen::MatrixXd::Identity(d, d);
    A.block((i - 1) * d, (i - 1) * d, d, d) -= JL;
  }
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);

  Eigen::VectorXd Z = x0.replicate(s, 1);
  const double scale = 1.0 + x0.cwiseAbs().maxCoeff();
  for (int it = 0; it < 60; ++it) {
    Eigen::VectorXd r(s * d);
    for (int i = 1; i <= s; ++i) {
      Eigen::VectorXd u = (g.D(i, 0) / h) * x0;
      for (int j = 1; j <= s; ++j)
        u += (g.D(i, j) / h) * Z.segment((j - 1) * d, d);
      r.segment((i - 1) * d, d) =
          u - L(t + g.nodes[static_cast<size_t>(i)] * h, Z.segment((i - 1) * d, d));
    }
    if (r.cwiseAbs().maxCoeff() <= tol * scale) {
      if (g.right_end) return Z.tail(d);
      Eigen::VectorXd xe = g.interp_end(0) * x0;
      for (int j = 1; j <= s; ++j)
        xe += g.interp_end(j) * Z.segment((j - 1) * d, d);
      return xe;
    }
    Z -= lu.solve(r);
  }
  throw convergence_error("collocation stage iteration did not converge");
}

// -- direct collocation of the reduced linear DAE ------------------------------

/** Radau-family step (implicit Euler for s = 1) applied to the reduced DAE:
    differential rows collocated, algebraic rows enforced at every node. */
inline Eigen::MatrixXd radau_direct_step_linear(const ReducedDae& red, double t,
                                                double h, const Eigen::MatrixXd& x0,
                                                int s) {
  const int n = red.dae().n, d = red.cv().d, a = red.cv().a;
  const int m = static_cast<int>(x0.cols());
  std::vector<double> nodes{0.0};
  for (double c : colloc::radau_nodes(s)) nodes.push_back(c);
  const Eigen::MatrixXd D = colloc::differentiation_matrix(nodes);

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(s * n, s * n);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(s * n, m);
  for (int i = 1; i <= s; ++i) {
    const ReducedEval ev = red.eval(t + nodes[static_cast<size_t>(i)] * h);
    const Eigen::MatrixXd E1 = ev.E1.value(), A1 = ev.A1.value();
    const Eigen::MatrixXd A2 = ev.A2.value();
    for (int j = 1; j <= s; ++j)
      A.block((i - 1) * n, (j - 1) * n, d, n) = (D(i, j) / h) * E1;
    A.block((i - 1) * n, (i - 1) * n, d, n) -= A1;
    R.block((i - 1) * n, 0, d, m) =
        ev.f1.value().replicate(1, m) - (D(i, 0) / h) * E1 * x0;
    A.block((i - 1) * n + d, (i - 1) * n, a, n) = A2;
    R.block((i - 1) * n + d, 0, a, m) = -ev.f2.value().replicate(1, m);
  }
  const Eigen::MatrixXd Z = A.partialPivLu().solve(R);
  return Z.bottomRows(n);
}

/** Gauss-Lobatto DAE step: the polynomial runs through the Lobatto nodes,
    differential rows are collocated at the s Gauss points, algebraic rows at
    the non-initial Lobatto points. */
inline Eigen::MatrixXd gauss_lobatto_direct_step_linear(
    const ReducedDae& red, double t, double h, const Eigen::MatrixXd& x0, int s) {
  const int n = red.dae().n, d = red.cv().d, a = red.cv().a;
  const int m = static_cast<int>(x0.cols());
  const std::vector<double> lob = colloc::lobatto_nodes(s);  // s+1 nodes
  const std::vector<double> gau = colloc::gauss_nodes(s);

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(s * n, s * n);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(s * n, m);
  for (int i = 0; i < s; ++i) {
    // differential block at the Gauss node
    const double tg = t + gau[static_cast<size_t>(i)] * h;
    const ReducedEval evg = red.eval(tg);
    const Eigen::MatrixXd E1 = evg.E1.value(), A1 = evg.A1.value();
    const Eigen::VectorXd lv = colloc::lagrange_values(lob, gau[static_cast<size_t>(i)]);
    const Eigen::VectorXd ld = colloc::lagrange_derivative_at(lob, gau[static_cast<size_t>(i)]);
    for (int j = 1; j <= s; ++j)
      A.block(i * n, (j - 1) * n, d, n) = (ld(j) / h) * E1 - lv(j) * A1;
    R.block(i * n, 0, d, m) = evg.f1.value().replicate(1, m) -
                              ((ld(0) / h) * E1 - lv(0) * A1) * x0;
    // algebraic block at the matching non-initial Lobatto node
    const double tl = t + lob[static_cast<size_t>(i + 1)] * h;
    const ReducedEval evl = red.eval(tl);
    A.block(i * n + d, i * n, a, n) = evl.A2.value();
    R.block(i * n + d, 0, a, m) = -evl.f2.value().replicate(1, m);
  }
  const Eigen::MatrixXd Z = A.partialPivLu().solve(R);
  return Z.bottomRows(n);
}

// -- direct collocation of the nonlinear reduced DAE ---------------------------

/** Collocation of the strangeness-free reduced system of a nonlinear DAE:
    Z1^T F at the differential nodes, the level-mu array equations as the
    algebraic constraint (extra derivative unknowns per node, minimum-norm
    Gauss-Newton). */
inline Eigen::VectorXd direct_step_nonlinear(const NonlinearDae& dae,
                                             const Eigen::MatrixXd& Z1, double t,
                                             double h, const Eigen::VectorXd& x0,
                                             const Eigen::VectorXd& y_guess,
                                             Method method, int s, double tol) {
  const int n = dae.n, d = dae.d, mu = dae.mu;
  const int ny = (mu + 1) * n;
  const bool lobatto = method == Method::GAUSS_LOBATTO;

  // Interpolation nodes carrying the unknown state values.
  std::vector<double> nodes{0.0};
  if (lobatto) {
    nodes = colloc::lobatto_nodes(s);
  } else {
    for (double c : colloc::radau_nodes(s)) nodes.push_back(c);
  }
  // Differential collocation points.
  std::vector<double> cpts =
      lobatto ? colloc::gauss_nodes(s)
              : std::vector<double>(nodes.begin() + 1, nodes.end());

  std::vector<Eigen::VectorXd> lv, ld;
  for (double c : cpts) {
    lv.push_back(colloc::lagrange_values(nodes, c));
    ld.push_back(colloc::lagrange_derivative_at(nodes, c));
  }

  const int rows = s * d + s * ny;
  const int cols = s * (n + ny);
  auto Xof = [&](const Eigen::VectorXd& u, int j) {
    return u.segment((j - 1) * n, n);
  };
  auto Yof = [&](const Eigen::VectorXd& u, int i) {
    return u.segment(s * n + i * ny, ny);
  };

  Eigen::VectorXd u(cols);
  for (int j = 1; j <= s; ++j) u.segment((j - 1) * n, n) = x0;
  for (int i = 0; i < s; ++i) u.segment(s * n + i * ny, ny) = y_guess.head(ny);

  const double scale = 1.0 + x0.cwiseAbs().maxCoeff();
  for (int it = 0; it <= 40; ++it) {
    Eigen::VectorXd r(rows);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(rows, cols);
    for (int i = 0; i < s; ++i) {
      // state and derivative of the interpolant at the collocation point
      const double tc = t + cpts[static_cast<size_t>(i)] * h;
      Eigen::VectorXd xc = lv[static_cast<size_t>(i)](0) * x0;
      Eigen::VectorXd vc = (ld[static_cast<size_t>(i)](0) / h) * x0;
      for (int j = 1; j <= s; ++j) {
        xc += lv[static_cast<size_t>(i)](j) * Xof(u, j);
        vc += (ld[static_cast<size_t>(i)](j) / h) * Xof(u, j);
      }
      r.segment(i * d, d) = Z1.transpose() * dae.F(tc, xc, vc);
      const Eigen::MatrixXd Fx = -dae.N_of(0, tc, xc, vc);
      const Eigen::MatrixXd Fxd = dae.M_of(0, tc, xc, vc);
      for (int j = 1; j <= s; ++j)
        J.block(i * d, (j - 1) * n, d, n) =
            Z1.transpose() *
            (lv[static_cast<size_t>(i)](j) * Fx + (ld[static_cast<size_t>(i)](j) / h) * Fxd);
      // algebraic rows at the non-initial interpolation node
      const double ta = t + nodes[static_cast<size_t>(i + 1)] * h;
      const Eigen::VectorXd xi = Xof(u, i + 1);
      const Eigen::VectorXd yi = Yof(u, i);
      r.segment(s * d + i * ny, ny) = dae.F_array(mu, ta, xi, yi);
      J.block(s * d + i * ny, i * n, ny, n) = -dae.N_of(mu, ta, xi, yi).leftCols(n);
      J.block(s * d + i * ny, s * n + i * ny, ny, ny) = dae.M_of(mu, ta, xi, yi);
    }
    if (r.cwiseAbs().maxCoeff() <= tol * scale) return u.segment((s - 1) * n, n);
    if (it == 40) break;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(J);
    u += cod.solve(-r);
  }
  throw convergence_error("direct nonlinear collocation did not converge");
}

// -- spec-level single-step entry points ---------------------------------------

inline Eigen::VectorXd step_gauss(const std::function<AffineRhs(double)>& rhs,
                                  double t, const Eigen::VectorXd& x1, double h,
                                  int s) {
  return collocation_step_linear(rhs, t, h, x1, collocation_grid(Method::GAUSS, s));
}

inline Eigen::VectorXd step_radau(const std::function<AffineRhs(double)>& rhs,
                                  double t, const Eigen::VectorXd& x1, double h,
                                  int s) {
  return collocation_step_linear(rhs, t, h, x1, collocation_grid(Method::RADAU, s));
}

inline Eigen::VectorXd step_radau_direct(const ReducedDae& red, double t,
                                         const Eigen::VectorXd& x, double h, int s) {
  return radau_direct_step_linear(red, t, h, x, s);
}

inline Eigen::VectorXd step_gauss_lobatto_dae(const ReducedDae& red, double t,
                                              const Eigen::VectorXd& x, double h,
                                              int s) {
  if (red.cv().a == 0) {
    auto rhs = [&](double tt) {
      ReducedEval ev = red.eval(tt);
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(ev.E1.value());
      AffineRhs r;
      r.B = lu.solve(ev.A1.value());
      r.b = lu.solve(ev.f1.value());
      r.P = Eigen::MatrixXd::Zero(0, red.dae().n);
      r.p = Eigen::VectorXd::Zero(0);
      return r;
    };
    return step_gauss(rhs, t, x, h, s);
  }
  return gauss_lobatto_direct_step_linear(red, t, h, x, s);
}

// -- adaptive driver ------------------------------------------------------------

namespace detail_i {

inline double scaled_rms(const Eigen::MatrixXd& diff, const Eigen::MatrixXd& r0,
                         const Eigen::MatrixXd& r1, double tol) {
  double acc = 0.0;
  for (int j = 0; j < diff.cols(); ++j)
    for (int i = 0; i < diff.rows(); ++i) {
      const double sc =
          tol + tol * std::max(std::abs(r0(i, j)), std::abs(r1(i, j)));
      acc += (diff(i, j) / sc) * (diff(i, j) / sc);
    }
  return std::sqrt(acc / diff.size());
}

inline double controller(double h, double err, int order) {
  const double fac = 0.9 * std::pow(err > 0 ? 1.0 / err : 1e8, 1.0 / (order + 1));
  return h * std::clamp(fac, 0.2, 5.0);
}

}  // namespace detail_i

/** Drives one integration; the transformation window (or the reduction
    recipe in DIRECT mode) is re-frozen at every accepted step. */
inline Trajectory integrate_linear(const IntegratorSpec& spec_in,
                                   const LinearDae& dae, const CharValues& cv,
                                   double t0, double t1,
                                   const Eigen::VectorXd& x0) {
  IntegratorSpec spec = spec_in;
  validate(spec);
  if (spec.method == Method::IMPLICIT_EULER) {
    spec.method = Method::RADAU;
    spec.stages = 1;
  }
  const double span = t1 - t0;
  const int order = method_order(spec_in.method, spec.stages);
  double h = spec.adaptive
                 ? (spec.initial_step > 0 ? spec.initial_step : span / 100)
                 : span / spec.n_steps;

  Trajectory traj;
  traj.times.push_back(t0);
  traj.states.push_back(x0);
  double t = t0;
  Eigen::VectorXd x = x0;
  long grid_index = 0;

  while (t < t1 - 1e-12 * std::abs(span)) {
    if (spec.adaptive)
      h = std::min(h, t1 - t);
    else
      h = t0 + (++grid_index) * span / spec.n_steps - t;
    std::optional<LinearWindow> window;
    std::optional<ReducedDae> red;
    if (spec.direct)
      red.emplace(dae, cv, t);
    else
      window.emplace(dae, cv, spec.strategy, t, h);

    // Inherent versions advance the window coordinate x1 and control the
    // local error there; DIRECT advances and controls the full state.
    auto step_x1 = [&](double tt, double hh,
                       const Eigen::VectorXd& z) -> Eigen::VectorXd {
      if (spec.method == Method::DORMAND_PRINCE) {
        auto mrhs = [&](double tq, const Eigen::MatrixXd& zz) -> Eigen::MatrixXd {
          const AffineRhs r = window->affine(tq);
          return r.B * zz + r.b;
        };
        return step_explicit(mrhs, tt, z, hh, dormand_prince_tableau(spec.stages)).x;
      }
      auto rhs = [&](double tq) { return window->affine(tq); };
      return collocation_step_linear(rhs, tt, hh, z,
                                     collocation_grid(spec.method, spec.stages));
    };
    auto step_state = [&](double tt, double hh,
                          const Eigen::VectorXd& xs) -> Eigen::VectorXd {
      if (spec.method == Method::GAUSS_LOBATTO)
        return step_gauss_lobatto_dae(*red, tt, xs, hh, spec.stages);
      return radau_direct_step_linear(*red, tt, hh, xs, spec.stages);
    };

    bool accepted = false;
    while (!accepted) {
      try {
        if (!spec.adaptive) {
          if (spec.direct) {
            x = step_state(t, h, x);
          } else {
            x = window->to_full(t + h, step_x1(t, h, window->to_x1(t, x)));
          }
          t += h;
          ++traj.steps_taken;
          traj.times.push_back(t);
          traj.states.push_back(x);
          accepted = true;
          break;
        }
        double err = 0.0;
        Eigen::VectorXd x_new;
        if (spec.method == Method::DORMAND_PRINCE) {
          const Eigen::VectorXd x1 = window->to_x1(t, x);
          auto mrhs = [&](double tq, const Eigen::MatrixXd& z) -> Eigen::MatrixXd {
            const AffineRhs r = window->affine(tq);
            return r.B * z + r.b;
          };
          const ExplicitStep st = step_explicit(
              mrhs, t, x1, h, dormand_prince_tableau(spec.stages));
          err = detail_i::scaled_rms(st.err, x1, st.x, spec.tol);
          if (err <= 1.0) x_new = window->to_full(t + h, st.x);
        } else if (spec.direct) {
          const Eigen::VectorXd xf = step_state(t, h, x);
          const Eigen::VectorXd xm = step_state(t, h / 2, x);
          const Eigen::VectorXd xh = step_state(t + h / 2, h / 2, xm);
          const double denom = std::pow(2.0, order) - 1.0;
          err = detail_i::scaled_rms((xh - xf) / denom, x, xh, spec.tol);
          x_new = xh;
        } else {
          const Eigen::VectorXd x1 = window->to_x1(t, x);
          const Eigen::VectorXd zf = step_x1(t, h, x1);
          const Eigen::VectorXd zm = step_x1(t, h / 2, x1);
          const Eigen::VectorXd zh = step_x1(t + h / 2, h / 2, zm);
          const double denom = std::pow(2.0, order) - 1.0;
          err = detail_i::scaled_rms((zh - zf) / denom, x1, zh, spec.tol);
          if (err <= 1.0) x_new = window->to_full(t + h, zh);
        }
        if (err <= 1.0) {
          x = x_new;
          t += h;
          ++traj.steps_taken;
          traj.times.push_back(t);
          traj.states.push_back(x);
          h = detail_i::controller(h, err, order);
          accepted = true;
        } else {
          ++traj.rejected;
          h = std::min(detail_i::controller(h, err, order), 0.9 * h);
        }
      } catch (const singular_point_error&) {
        if (!spec.adaptive) throw;
        ++traj.rejected;
        h *= 0.5;
      } catch (const convergence_error&) {
        if (!spec.adaptive) throw;
        ++traj.rejected;
        h *= 0.5;
      }
      if (spec.adaptive && h < 1e-14 * std::abs(span))
        throw convergence_error("integrate: step size underflow");
    }
  }
  return traj;
}

inline Trajectory integrate_nonlinear(const IntegratorSpec& spec_in,
                                      const NonlinearDae& dae, double t0,
                                      double t1, const Eigen::VectorXd& x0) {
  IntegratorSpec spec = spec_in;
  validate(spec);
  if (spec.method == Method::IMPLICIT_EULER) {
    spec.method = Method::RADAU;
    spec.stages = 1;
  }
  const double span = t1 - t0;
  const int order = method_order(spec_in.method, spec.stages);
  double h = spec.adaptive
                 ? (spec.initial_step > 0 ? spec.initial_step : span / 100)
                 : span / spec.n_steps;

  GnCache cache = seed_cache(dae, t0, x0);
  const double gn_tol = 1e-11;

  Trajectory traj;
  traj.times.push_back(t0);
  traj.states.push_back(x0);
  double t = t0;
  Eigen::VectorXd x = x0;
  long grid_index = 0;

  while (t < t1 - 1e-12 * std::abs(span)) {
    if (spec.adaptive)
      h = std::min(h, t1 - t);
    else
      h = t0 + (++grid_index) * span / spec.n_steps - t;
    std::optional<NonlinearWindow> window;
    Eigen::MatrixXd Z1;
    if (spec.direct) {
      Z1 = nonlinear_projectors(dae, t, cache.u.head(dae.n),
                                cache.u.segment(dae.n, (dae.mu + 1) * dae.n))
               .Z1;
    } else {
      window.emplace(dae, spec.strategy, t, h, cache);
    }

    auto step_x1 = [&](double tt, double hh,
                       const Eigen::VectorXd& z) -> Eigen::VectorXd {
      if (spec.method == Method::DORMAND_PRINCE) {
        auto mrhs = [&](double tq, const Eigen::MatrixXd& zz) -> Eigen::MatrixXd {
          return window->l(tq, Eigen::VectorXd(zz));
        };
        return step_explicit(mrhs, tt, z, hh, dormand_prince_tableau(spec.stages)).x;
      }
      auto L = [&](double tq, const Eigen::VectorXd& zz) {
        return window->l(tq, zz);
      };
      return collocation_step_nonlinear(
          L, tt, hh, z, collocation_grid(spec.method, spec.stages), 1e-12);
    };
    auto step_state = [&](double tt, double hh,
                          const Eigen::VectorXd& xs) -> Eigen::VectorXd {
      return direct_step_nonlinear(dae, Z1, tt, hh, xs,
                                   cache.u.tail((dae.mu + 2) * dae.n),
                                   spec.method, spec.stages, gn_tol);
    };

    bool accepted = false;
    while (!accepted) {
      // Attempts are transactional: failed or rejected attempts must not
      // leave their intermediate array solutions in the warm-start cache.
      const GnCache saved = cache;
      try {
        double err = 0.0;
        Eigen::VectorXd x_new;
        if (!spec.adaptive) {
          x_new = spec.direct
                      ? step_state(t, h, x)
                      : window->full_state(t + h, step_x1(t, h, window->to_x1(t, x)));
        } else if (spec.method == Method::DORMAND_PRINCE) {
          const Eigen::VectorXd x1 = window->to_x1(t, x);
          auto mrhs = [&](double tq, const Eigen::MatrixXd& z) -> Eigen::MatrixXd {
            return window->l(tq, Eigen::VectorXd(z));
          };
          const ExplicitStep st = step_explicit(
              mrhs, t, x1, h, dormand_prince_tableau(spec.stages));
          err = detail_i::scaled_rms(st.err, x1, st.x, spec.tol);
          if (err <= 1.0) x_new = window->full_state(t + h, st.x);
        } else if (spec.direct) {
          const Eigen::VectorXd xf = step_state(t, h, x);
          const Eigen::VectorXd xm = step_state(t, h / 2, x);
          const Eigen::VectorXd xh = step_state(t + h / 2, h / 2, xm);
          const double denom = std::pow(2.0, order) - 1.0;
          err = detail_i::scaled_rms((xh - xf) / denom, x, xh, spec.tol);
          x_new = xh;
        } else {
          const Eigen::VectorXd x1 = window->to_x1(t, x);
          const Eigen::VectorXd zf = step_x1(t, h, x1);
          const Eigen::VectorXd zm = step_x1(t, h / 2, x1);
          const Eigen::VectorXd zh = step_x1(t + h / 2, h / 2, zm);
          const double denom = std::pow(2.0, order) - 1.0;
          err = detail_i::scaled_rms((zh - zf) / denom, x1, zh, spec.tol);
          if (err <= 1.0) x_new = window->full_state(t + h, zh);
        }
        if (!spec.adaptive || err <= 1.0) {
          x = x_new;
          t += h;
          ++traj.steps_taken;
          traj.times.push_back(t);
          traj.states.push_back(x);
          if (spec.adaptive) h = detail_i::controller(h, err, order);
          // refresh the cache at the accepted point
          cache.u.head(dae.n) = x;
          if (spec.direct)
            cache.u.tail((dae.mu + 2) * dae.n) = consistent_derivatives(
                dae, dae.mu + 1, t, x, cache.u.tail((dae.mu + 2) * dae.n));
          accepted = true;
        } else {
          cache = saved;
          ++traj.rejected;
          h = std::min(detail_i::controller(h, err, order), 0.9 * h);
        }
      } catch (const singular_point_error&) {
        if (!spec.adaptive) throw;
        cache = saved;
        ++traj.rejected;
        h *= 0.5;
      } catch (const convergence_error&) {
        if (!spec.adaptive) throw;
        cache = saved;
        ++traj.rejected;
        h *= 0.5;
      }
      if (spec.adaptive && h < 1e-14 * std::abs(span))
        throw convergence_error("integrate: step size underflow");
    }
  }
  return traj;
}

}  // namespace geodae
