#pragma once

// Truncated Taylor arithmetic over scalars and dense matrices.
//
// A Taylor value stores coefficients c[j] = x^(j)(t0)/j! up to a configurable
// order K; K = 1 is the classical value/derivative pair of forward-mode
// automatic differentiation, higher K supplies the derivatives needed by
// derivative arrays. All kernels are straight-line arithmetic (no branches on
// values) so that algorithms built on top of them stay smooth in t.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace geodae {

/// Thrown when a smooth construction hits a point where it stops being
/// smooth: zero divisor, non-positive sqrt argument, lost pivot or rank.
class singular_point_error : public std::runtime_error {
 public:
  explicit singular_point_error(const std::string& what)
      : std::runtime_error(what) {}
};

namespace detail {
inline void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}
}  // namespace detail

/** Truncated Taylor series of a scalar: coeffs()[j] = x^(j)/j!. */
class Taylor {
 public:
  Taylor() : c_(2, 0.0) {}
  explicit Taylor(int order) : c_(static_cast<size_t>(order) + 1, 0.0) {
    detail::require(order >= 1, "Taylor: order must be >= 1");
  }
  Taylor(double value, int order) : Taylor(order) { c_[0] = value; }
  Taylor(double value, double deriv, int order) : Taylor(order) {
    c_[0] = value;
    c_[1] = deriv;
  }

  /// The running time variable itself: value t0, derivative 1.
  static Taylor time(double t0, int order) { return Taylor(t0, 1.0, order); }
  static Taylor constant(double v, int order) { return Taylor(v, order); }

  int order() const { return static_cast<int>(c_.size()) - 1; }
  double operator[](int j) const { return c_[static_cast<size_t>(j)]; }
  double& operator[](int j) { return c_[static_cast<size_t>(j)]; }
  double value() const { return c_[0]; }
  double deriv() const { return c_[1]; }

  Taylor& operator+=(const Taylor& o) {
    match(o);
    for (size_t j = 0; j < c_.size(); ++j) c_[j] += o.c_[j];
    return *this;
  }
  Taylor& operator-=(const Taylor& o) {
    match(o);
    for (size_t j = 0; j < c_.size(); ++j) c_[j] -= o.c_[j];
    return *this;
  }
  Taylor& operator*=(double s) {
    for (double& x : c_) x *= s;
    return *this;
  }

  friend Taylor operator+(Taylor a, const Taylor& b) { return a += b; }
  friend Taylor operator-(Taylor a, const Taylor& b) { return a -= b; }
  friend Taylor operator-(Taylor a) { return a *= -1.0; }
  friend Taylor operator*(Taylor a, double s) { return a *= s; }
  friend Taylor operator*(double s, Taylor a) { return a *= s; }
  friend Taylor operator+(Taylor a, double s) {
    a[0] += s;
    return a;
  }
  friend Taylor operator+(double s, Taylor a) {
    a[0] += s;
    return a;
  }
  friend Taylor operator-(Taylor a, double s) {
    a[0] -= s;
    return a;
  }
  friend Taylor operator-(double s, const Taylor& a) { return s + (-a); }

  /// Cauchy product: c_k = sum_j a_j b_{k-j}.
  friend Taylor operator*(const Taylor& a, const Taylor& b) {
    a.match(b);
    Taylor r(a.order());
    for (int k = 0; k <= a.order(); ++k) {
      double s = 0.0;
      for (int j = 0; j <= k; ++j) s += a[j] * b[k - j];
      r[k] = s;
    }
    return r;
  }

  /// Recursive convolution: q_k = (a_k - sum_{j<k} q_j b_{k-j}) / b_0.
  friend Taylor operator/(const Taylor& a, const Taylor& b) {
    a.match(b);
    if (b[0] == 0.0)
      throw singular_point_error("Taylor division by zero leading coefficient");
    Taylor q(a.order());
    for (int k = 0; k <= a.order(); ++k) {
      double s = a[k];
      for (int j = 0; j < k; ++j) s -= q[j] * b[k - j];
      q[k] = s / b[0];
    }
    return q;
  }
  friend Taylor operator/(const Taylor& a, double s) { return a * (1.0 / s); }
  friend Taylor operator/(double s, const Taylor& b) {
    return Taylor(s, b.order()) / b;
  }

 private:
  void match(const Taylor& o) const {
    detail::require(c_.size() == o.c_.size(), "Taylor: order mismatch");
  }
  std::vector<double> c_;
};

inline Taylor sqrt(const Taylor& a) {
  if (a[0] <= 0.0)
    throw singular_point_error("Taylor sqrt of non-positive leading coefficient");
  Taylor s(a.order());
  s[0] = std::sqrt(a[0]);
  for (int k = 1; k <= a.order(); ++k) {
    double acc = a[k];
    for (int j = 1; j < k; ++j) acc -= s[j] * s[k - j];
    s[k] = acc / (2.0 * s[0]);
  }
  return s;
}

/// Coefficients of the time derivative, one order lower: d_j = (j+1) c_{j+1}.
inline Taylor derivative(const Taylor& a) {
  detail::require(a.order() >= 2, "derivative: need order >= 2");
  Taylor d(a.order() - 1);
  for (int j = 0; j < a.order(); ++j) d[j] = (j + 1) * a[j + 1];
  return d;
}

inline Taylor truncate(const Taylor& a, int order) {
  detail::require(order >= 1 && order <= a.order(), "truncate: bad order");
  Taylor r(order);
  for (int j = 0; j <= order; ++j) r[j] = a[j];
  return r;
}

/** Dense matrix of Taylor values, stored as per-order coefficient slices:
    coeff(j) is the real matrix of j-th Taylor coefficients. All entries share
    the same order by construction. */
class TaylorMatrix {
 public:
  TaylorMatrix() : TaylorMatrix(0, 0, 1) {}
  TaylorMatrix(int rows, int cols, int order) {
    detail::require(order >= 1, "TaylorMatrix: order must be >= 1");
    detail::require(rows >= 0 && cols >= 0, "TaylorMatrix: bad shape");
    c_.assign(static_cast<size_t>(order) + 1, Eigen::MatrixXd::Zero(rows, cols));
  }
  /// Constant matrix: given value slice, zero derivative coefficients.
  TaylorMatrix(const Eigen::MatrixXd& value, int order)
      : TaylorMatrix(static_cast<int>(value.rows()),
                     static_cast<int>(value.cols()), order) {
    c_[0] = value;
  }

  static TaylorMatrix identity(int n, int order) {
    return TaylorMatrix(Eigen::MatrixXd::Identity(n, n), order);
  }

  int rows() const { return static_cast<int>(c_[0].rows()); }
  int cols() const { return static_cast<int>(c_[0].cols()); }
  int order() const { return static_cast<int>(c_.size()) - 1; }

  const Eigen::MatrixXd& coeff(int j) const { return c_[static_cast<size_t>(j)]; }
  Eigen::MatrixXd& coeff(int j) { return c_[static_cast<size_t>(j)]; }
  const Eigen::MatrixXd& value() const { return c_[0]; }

  Taylor entry(int i, int j) const {
    Taylor t(order());
    for (int k = 0; k <= order(); ++k) t[k] = c_[static_cast<size_t>(k)](i, j);
    return t;
  }
  void set_entry(int i, int j, const Taylor& t) {
    detail::require(t.order() == order(), "set_entry: order mismatch");
    for (int k = 0; k <= order(); ++k) c_[static_cast<size_t>(k)](i, j) = t[k];
  }

  TaylorMatrix block(int i0, int j0, int r, int c) const {
    TaylorMatrix b(r, c, order());
    for (int k = 0; k <= order(); ++k)
      b.coeff(k) = coeff(k).block(i0, j0, r, c);
    return b;
  }
  void set_block(int i0, int j0, const TaylorMatrix& b) {
    detail::require(b.order() == order(), "set_block: order mismatch");
    for (int k = 0; k <= order(); ++k)
      coeff(k).block(i0, j0, b.rows(), b.cols()) = b.coeff(k);
  }
  TaylorMatrix col(int j) const { return block(0, j, rows(), 1); }
  TaylorMatrix row(int i) const { return block(i, 0, 1, cols()); }

  TaylorMatrix& operator+=(const TaylorMatrix& o) {
    match(o, true);
    for (size_t k = 0; k < c_.size(); ++k) c_[k] += o.c_[k];
    return *this;
  }
  TaylorMatrix& operator-=(const TaylorMatrix& o) {
    match(o, true);
    for (size_t k = 0; k < c_.size(); ++k) c_[k] -= o.c_[k];
    return *this;
  }
  TaylorMatrix& operator*=(double s) {
    for (auto& m : c_) m *= s;
    return *this;
  }

  friend TaylorMatrix operator+(TaylorMatrix a, const TaylorMatrix& b) {
    return a += b;
  }
  friend TaylorMatrix operator-(TaylorMatrix a, const TaylorMatrix& b) {
    return a -= b;
  }
  friend TaylorMatrix operator-(TaylorMatrix a) { return a *= -1.0; }
  friend TaylorMatrix operator*(TaylorMatrix a, double s) { return a *= s; }
  friend TaylorMatrix operator*(double s, TaylorMatrix a) { return a *= s; }

  /// Matrix product via slice convolution: C_k = sum_j A_j B_{k-j}.
  friend TaylorMatrix operator*(const TaylorMatrix& a, const TaylorMatrix& b) {
    a.match(b, false);
    detail::require(a.cols() == b.rows(), "TaylorMatrix: shape mismatch in product");
    TaylorMatrix r(a.rows(), b.cols(), a.order());
    for (int k = 0; k <= a.order(); ++k)
      for (int j = 0; j <= k; ++j) r.coeff(k) += a.coeff(j) * b.coeff(k - j);
    return r;
  }
  friend TaylorMatrix operator*(const TaylorMatrix& a, const Taylor& s) {
    detail::require(a.order() == s.order(), "TaylorMatrix: order mismatch");
    TaylorMatrix r(a.rows(), a.cols(), a.order());
    for (int k = 0; k <= a.order(); ++k)
      for (int j = 0; j <= k; ++j) r.coeff(k) += a.coeff(j) * s[k - j];
    return r;
  }
  friend TaylorMatrix operator*(const Taylor& s, const TaylorMatrix& a) {
    return a * s;
  }

 private:
  void match(const TaylorMatrix& o, bool shapes) const {
    detail::require(order() == o.order(), "TaylorMatrix: order mismatch");
    if (shapes)
      detail::require(rows() == o.rows() && cols() == o.cols(),
                      "TaylorMatrix: shape mismatch");
  }
  std::vector<Eigen::MatrixXd> c_;
};

/// Column vectors are 1-column Taylor matrices.
using TaylorVector = TaylorMatrix;

inline TaylorMatrix transpose(const TaylorMatrix& a) {
  TaylorMatrix r(a.cols(), a.rows(), a.order());
  for (int k = 0; k <= a.order(); ++k) r.coeff(k) = a.coeff(k).transpose();
  return r;
}

inline TaylorMatrix derivative(const TaylorMatrix& a) {
  detail::require(a.order() >= 2, "derivative: need order >= 2");
  TaylorMatrix d(a.rows(), a.cols(), a.order() - 1);
  for (int j = 0; j < a.order(); ++j) d.coeff(j) = (j + 1) * a.coeff(j + 1);
  return d;
}

inline TaylorMatrix truncate(const TaylorMatrix& a, int order) {
  detail::require(order >= 1 && order <= a.order(), "truncate: bad order");
  TaylorMatrix r(a.rows(), a.cols(), order);
  for (int j = 0; j <= order; ++j) r.coeff(j) = a.coeff(j);
  return r;
}

inline TaylorMatrix hcat(const TaylorMatrix& a, const TaylorMatrix& b) {
  detail::require(a.rows() == b.rows() && a.order() == b.order(),
                  "hcat: mismatch");
  TaylorMatrix r(a.rows(), a.cols() + b.cols(), a.order());
  r.set_block(0, 0, a);
  r.set_block(0, a.cols(), b);
  return r;
}

inline TaylorMatrix vcat(const TaylorMatrix& a, const TaylorMatrix& b) {
  detail::require(a.cols() == b.cols() && a.order() == b.order(),
                  "vcat: mismatch");
  TaylorMatrix r(a.rows() + b.rows(), a.cols(), a.order());
  r.set_block(0, 0, a);
  r.set_block(a.rows(), 0, b);
  return r;
}

/// Max-abs entry over all coefficient slices; convergence/test metric.
inline double max_abs(const TaylorMatrix& a) {
  double m = 0.0;
  for (int k = 0; k <= a.order(); ++k)
    if (a.coeff(k).size() > 0)
      m = std::max(m, a.coeff(k).cwiseAbs().maxCoeff());
  return m;
}

// -- finite-difference lift -------------------------------------------------

namespace detail {
// Fornberg weights for the m-th derivative at x0 from nodes xs.
inline Eigen::MatrixXd fd_weights(double x0, const std::vector<double>& xs,
                                  int m) {
  const int nn = static_cast<int>(xs.size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(nn, m + 1);
  double c1 = 1.0, c4 = xs[0] - x0;
  w(0, 0) = 1.0;
  for (int i = 1; i < nn; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = xs[static_cast<size_t>(i)] - x0;
    for (int j = 0; j < i; ++j) {
      const double c3 = xs[static_cast<size_t>(i)] - xs[static_cast<size_t>(j)];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          w(i, k) = c1 * (k * w(i - 1, k - 1) - c5 * w(i - 1, k)) / c2;
        w(i, 0) = -c1 * c5 * w(i - 1, 0) / c2;
      }
      for (int k = mn; k >= 1; --k)
        w(j, k) = (c4 * w(j, k) - k * w(j, k - 1)) / c3;
      w(j, 0) = c4 * w(j, 0) / c3;
    }
    c1 = c2;
  }
  return w;
}
}  // namespace detail

/** Central finite-difference estimate of the Taylor coefficients of f at t0.
    Test oracle for providers; accuracy degrades gracefully with K and h. */
inline Taylor taylor_lift(const std::function<double(double)>& f, double t0,
                          int order, double h) {
  detail::require(order >= 1 && h > 0.0, "taylor_lift: bad arguments");
  const int half = (order + 2) / 2;
  std::vector<double> xs;
  std::vector<double> fs;
  for (int m = -half; m <= half; ++m) {
    xs.push_back(t0 + m * h);
    fs.push_back(f(t0 + m * h));
  }
  const Eigen::MatrixXd w = detail::fd_weights(t0, xs, order);
  Taylor r(order);
  double fact = 1.0;
  for (int j = 0; j <= order; ++j) {
    if (j > 0) fact *= j;
    double s = 0.0;
    for (size_t i = 0; i < xs.size(); ++i)
      s += w(static_cast<int>(i), j) * fs[i];
    r[j] = s / fact;
  }
  return r;
}

}  // namespace geodae
