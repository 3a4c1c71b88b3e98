#pragma once

// Collocation nodes on [0,1] and Lagrange utilities. Gauss, Radau (right
// endpoint) and Lobatto node families are the roots of derivatives of
// x^a (x-1)^b; they are computed from the companion matrix and polished by
// Newton in extended precision.

#include <algorithm>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "geodae/taylor.hpp"

namespace geodae {
namespace colloc {

namespace detail_c {

// Monomial coefficients (ascending) of d^m/dx^m [x^a (x-1)^b].
inline std::vector<long double> node_polynomial(int a, int b, int m) {
  std::vector<long double> c(static_cast<size_t>(a + b) + 1, 0.0L);
  // x^a (x-1)^b = sum_k C(b,k) (-1)^(b-k) x^(a+k)
  long double binom = 1.0L;
  for (int k = 0; k <= b; ++k) {
    c[static_cast<size_t>(a + k)] = binom * ((b - k) % 2 == 0 ? 1.0L : -1.0L);
    binom = binom * (b - k) / (k + 1);
  }
  for (int d = 0; d < m; ++d) {
    for (size_t i = 0; i + 1 < c.size(); ++i) c[i] = (i + 1) * c[i + 1];
    c.pop_back();
  }
  return c;
}

inline long double horner(const std::vector<long double>& c, long double x) {
  long double v = 0.0L;
  for (size_t i = c.size(); i-- > 0;) v = v * x + c[i];
  return v;
}

inline std::vector<double> polynomial_roots01(const std::vector<long double>& c) {
  const int deg = static_cast<int>(c.size()) - 1;
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(deg, deg);
  for (int i = 1; i < deg; ++i) comp(i, i - 1) = 1.0;
  for (int i = 0; i < deg; ++i)
    comp(i, deg - 1) = -static_cast<double>(c[static_cast<size_t>(i)] / c.back());
  Eigen::EigenSolver<Eigen::MatrixXd> es(comp);
  std::vector<double> roots;
  std::vector<long double> dc(c.size() - 1);
  for (size_t i = 0; i + 1 < c.size(); ++i) dc[i] = (i + 1) * c[i + 1];
  for (int i = 0; i < deg; ++i) {
    if (std::abs(es.eigenvalues()(i).imag()) > 1e-8) continue;
    long double x = es.eigenvalues()(i).real();
    if (x < -1e-8 || x > 1.0 + 1e-8) continue;
    for (int it = 0; it < 4; ++it) {
      const long double f = horner(c, x), df = horner(dc, x);
      if (df == 0.0L) break;
      x -= f / df;
    }
    roots.push_back(std::clamp(static_cast<double>(x), 0.0, 1.0));
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

}  // namespace detail_c

/// s Gauss nodes in (0, 1).
inline std::vector<double> gauss_nodes(int s) {
  return detail_c::polynomial_roots01(detail_c::node_polynomial(s, s, s));
}

/// s Radau nodes in (0, 1], right endpoint included.
inline std::vector<double> radau_nodes(int s) {
  if (s == 1) return {1.0};
  return detail_c::polynomial_roots01(detail_c::node_polynomial(s - 1, s, s - 1));
}

/// s+1 Lobatto nodes in [0, 1], both endpoints included.
inline std::vector<double> lobatto_nodes(int s) {
  return detail_c::polynomial_roots01(detail_c::node_polynomial(s, s, s - 1));
}

/// Barycentric weights of a node set.
inline std::vector<double> barycentric_weights(const std::vector<double>& x) {
  const size_t m = x.size();
  std::vector<double> w(m, 1.0);
  for (size_t j = 0; j < m; ++j)
    for (size_t k = 0; k < m; ++k)
      if (k != j) w[j] /= (x[j] - x[k]);
  return w;
}

/// Lagrange basis values l_j(xq).
inline Eigen::VectorXd lagrange_values(const std::vector<double>& x, double xq) {
  const size_t m = x.size();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<int>(m));
  for (size_t j = 0; j < m; ++j)
    if (std::abs(xq - x[j]) < 1e-14) {
      v(static_cast<int>(j)) = 1.0;
      return v;
    }
  const std::vector<double> w = barycentric_weights(x);
  double denom = 0.0;
  for (size_t j = 0; j < m; ++j) denom += w[j] / (xq - x[j]);
  for (size_t j = 0; j < m; ++j)
    v(static_cast<int>(j)) = (w[j] / (xq - x[j])) / denom;
  return v;
}

/// Differentiation matrix D(i, j) = l_j'(x_i) over the node set.
inline Eigen::MatrixXd differentiation_matrix(const std::vector<double>& x) {
  const int m = static_cast<int>(x.size());
  const std::vector<double> w = barycentric_weights(x);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    double diag = 0.0;
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      D(i, j) = (w[static_cast<size_t>(j)] / w[static_cast<size_t>(i)]) /
                (x[static_cast<size_t>(i)] - x[static_cast<size_t>(j)]);
      diag -= D(i, j);
    }
    D(i, i) = diag;
  }
  return D;
}

/// l_j'(xq) for all j; xq may coincide with a node.
inline Eigen::VectorXd lagrange_derivative_at(const std::vector<double>& x,
                                              double xq) {
  const size_t m = x.size();
  for (size_t j = 0; j < m; ++j)
    if (std::abs(xq - x[j]) < 1e-14)
      return differentiation_matrix(x).row(static_cast<int>(j));
  // Off-node: l_j'(xq) = l_j(xq) (S2/S1 - 1/(xq - x_j)) with
  // S1 = sum w_k/(xq - x_k), S2 = sum w_k/(xq - x_k)^2.
  const std::vector<double> w = barycentric_weights(x);
  double s1 = 0.0, s2 = 0.0;
  for (size_t k = 0; k < m; ++k) {
    const double q = w[k] / (xq - x[k]);
    s1 += q;
    s2 += q / (xq - x[k]);
  }
  const Eigen::VectorXd lv = lagrange_values(x, xq);
  Eigen::VectorXd r(static_cast<int>(m));
  for (size_t j = 0; j < m; ++j)
    r(static_cast<int>(j)) =
        lv(static_cast<int>(j)) * (s2 / s1 - 1.0 / (xq - x[j]));
  return r;
}

}  // namespace colloc
}  // namespace geodae
