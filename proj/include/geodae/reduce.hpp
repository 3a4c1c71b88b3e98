#pragma once

// Rank analysis of the derivative array and assembly of the reduced DAE:
// Z2 spans the left null space of M_mu, A2hat = Z2^T N_mu [I 0 ...]^T with
// T2 spanning its kernel, Z1 picks the differential rows. All factors carry
// derivatives through frozen QR decompositions.

#include <functional>
#include <stdexcept>
#include <vector>

#include "geodae/darray.hpp"
#include "geodae/smoothfact.hpp"

namespace geodae {

/// Hypothesis violations: no valid characteristic values, rank drops.
class hypothesis_error : public std::runtime_error {
 public:
  explicit hypothesis_error(const std::string& what)
      : std::runtime_error(what) {}
};

struct CharValues {
  int mu = 0;
  int a = 0;
  int d = 0;
};

struct ReduceOptions {
  double rank_tol = 1e-8;
  int mu_max = -1;         // default: problem dimension
  int samples = 7;         // rank certification grid
  bool constant_z1 = false;  // freeze Z1 at the reference point
};

namespace detail {

struct RankProbe {
  int a = 0, d = 0;
  bool ok = false;
};

inline RankProbe probe_level(const LinearDae& dae, int mu, double t,
                             double rank_tol) {
  const int n = dae.n;
  RankProbe r;
  const DerivativeArrayLinear arr = build_linear_array(dae, mu, t, 1);
  FrozenQr qm = smooth_qr(arr.M, nullptr, rank_tol);
  r.a = (mu + 1) * n - qm.rank;
  r.d = n - r.a;
  if (r.d < 0) return r;
  const TaylorMatrix Z2 = qm.null_complement();
  const TaylorMatrix A2 =
      transpose(Z2) * arr.N.block(0, 0, (mu + 1) * n, n);
  FrozenQr qa = smooth_qr(transpose(A2), nullptr, rank_tol);
  if (qa.rank != r.a) return r;
  const TaylorMatrix T2 = qa.null_complement();
  const TaylorMatrix E = dae.E(t, 1);
  FrozenQr qe = smooth_qr(E * T2, nullptr, rank_tol);
  if (qe.rank != r.d) return r;
  r.ok = true;
  return r;
}

}  // namespace detail

/** Smallest mu with constant (a, d) across the sample grid such that all
    three rank conditions hold. */
inline CharValues characteristic_values(const LinearDae& dae, double t0,
                                        double t1,
                                        const ReduceOptions& opts = {}) {
  const int mu_max = opts.mu_max >= 0 ? opts.mu_max : dae.n;
  std::vector<double> ts;
  for (int i = 0; i < opts.samples; ++i)
    ts.push_back(t0 + (t1 - t0) * (i + 0.5) / opts.samples);

  for (int mu = 0; mu <= mu_max; ++mu) {
    detail::RankProbe first = detail::probe_level(dae, mu, ts.front(), opts.rank_tol);
    bool all_ok = first.ok;
    for (size_t i = 1; i < ts.size() && all_ok; ++i) {
      detail::RankProbe p = detail::probe_level(dae, mu, ts[i], opts.rank_tol);
      if (!p.ok) all_ok = false;
      if (p.a != first.a || p.d != first.d)
        throw hypothesis_error(
            "characteristic_values: rank not constant across samples");
    }
    if (all_ok) return CharValues{mu, first.a, first.d};
  }
  throw hypothesis_error("characteristic_values: no mu <= mu_max satisfies the hypothesis");
}

struct ProjectorEval {
  TaylorMatrix Z2;  // (mu+1)n x a
  TaylorMatrix T2;  // n x d
  TaylorMatrix Z1;  // n x d
};

struct ReducedEval {
  TaylorMatrix E1, A1;  // d x n
  TaylorVector f1;      // d
  TaylorMatrix A2;      // a x n
  TaylorVector f2;      // a
  ProjectorEval proj;
};

/** Reduction recipe with decisions frozen at a reference time; eval()
    re-runs the construction smoothly at nearby times. */
class ReducedDae {
 public:
  ReducedDae(LinearDae dae, CharValues cv, double t_ref,
             ReduceOptions opts = {})
      : dae_(std::move(dae)), cv_(cv), opts_(opts) {
    const DerivativeArrayLinear arr = build_linear_array(dae_, cv_.mu, t_ref, 1);
    qr_m_ = smooth_qr(arr.M, nullptr, opts_.rank_tol);
    if ((cv_.mu + 1) * dae_.n - qr_m_.rank != cv_.a)
      throw hypothesis_error("ReducedDae: rank of M_mu contradicts a");
    const TaylorMatrix Z2 = qr_m_.null_complement();
    const TaylorMatrix A2 = transpose(Z2) * arr.N.block(0, 0, (cv_.mu + 1) * dae_.n, dae_.n);
    qr_a2t_ = smooth_qr(transpose(A2), nullptr, opts_.rank_tol);
    if (qr_a2t_.rank != cv_.a)
      throw hypothesis_error("ReducedDae: A2hat is rank deficient");
    const TaylorMatrix T2 = qr_a2t_.null_complement();
    qr_et2_ = smooth_qr(dae_.E(t_ref, 1) * T2, nullptr, opts_.rank_tol);
    if (qr_et2_.rank != cv_.d)
      throw hypothesis_error("ReducedDae: E1hat T2 is rank deficient");
    if (opts_.constant_z1) z1_const_ = qr_et2_.Q.value().leftCols(cv_.d);
  }

  ReducedEval eval(double t, int order = 1) const {
    const int n = dae_.n;
    const DerivativeArrayLinear arr = build_linear_array(dae_, cv_.mu, t, order);
    ReducedEval r;
    FrozenQr qm = smooth_qr(arr.M, &qr_m_);
    r.proj.Z2 = qm.null_complement();
    r.A2 = transpose(r.proj.Z2) * arr.N.block(0, 0, (cv_.mu + 1) * n, n);
    r.f2 = transpose(r.proj.Z2) * arr.g;
    FrozenQr qa = smooth_qr(transpose(r.A2), &qr_a2t_);
    r.proj.T2 = qa.null_complement();

    const TaylorMatrix E = dae_.E(t, order);
    const TaylorMatrix A = dae_.A(t, order);
    const TaylorVector f = dae_.rhs(t, order);
    if (opts_.constant_z1) {
      r.proj.Z1 = TaylorMatrix(z1_const_, order);
    } else {
      FrozenQr qe = smooth_qr(E * r.proj.T2, &qr_et2_);
      r.proj.Z1 = qe.range();
    }
    const TaylorMatrix Z1t = transpose(r.proj.Z1);
    r.E1 = Z1t * E;
    r.A1 = Z1t * A;
    r.f1 = Z1t * f;
    return r;
  }

  const CharValues& cv() const { return cv_; }
  const LinearDae& dae() const { return dae_; }

 private:
  LinearDae dae_;
  CharValues cv_;
  ReduceOptions opts_;
  FrozenQr qr_m_, qr_a2t_, qr_et2_;
  Eigen::MatrixXd z1_const_;
};

/** Reduced blocks assembled with caller-supplied projector evaluations; the
    covariance route of the construction. */
inline ReducedEval assemble_reduced(const LinearDae& dae, int mu,
                                    const ProjectorEval& proj, double t,
                                    int order = 1) {
  const int n = dae.n;
  const DerivativeArrayLinear arr = build_linear_array(dae, mu, t, order);
  ReducedEval r;
  r.proj = proj;
  r.A2 = transpose(proj.Z2) * arr.N.block(0, 0, (mu + 1) * n, n);
  r.f2 = transpose(proj.Z2) * arr.g;
  const TaylorMatrix Z1t = transpose(proj.Z1);
  r.E1 = Z1t * dae.E(t, order);
  r.A1 = Z1t * dae.A(t, order);
  r.f1 = Z1t * dae.rhs(t, order);
  return r;
}

/** Global equivalence (P, Q): Etil = P E Q, Atil = P A Q - P E Qdot,
    ftil = P f. Used by problem constructors and the covariance checks. */
inline LinearDae transform_dae(const LinearDae& dae,
                               std::function<TaylorMatrix(double, int)> P,
                               std::function<TaylorMatrix(double, int)> Q) {
  LinearDae out;
  out.n = dae.n;
  out.symmetry = Symmetry::none;
  auto base = dae;
  out.E = [base, P, Q](double t, int K) {
    return TaylorMatrix(P(t, K) * base.E(t, K) * Q(t, K));
  };
  out.A = [base, P, Q](double t, int K) {
    const TaylorMatrix q2 = Q(t, K + 1);
    const TaylorMatrix qdot = derivative(q2);
    return TaylorMatrix(P(t, K) * base.A(t, K) * truncate(q2, K) -
                        P(t, K) * base.E(t, K) * qdot);
  };
  if (base.f) {
    out.f = [base, P](double t, int K) {
      return TaylorVector(P(t, K) * base.f(t, K));
    };
  }
  return out;
}

/// Congruence transform with P = Q^T preserves the symmetry class.
inline LinearDae congruence_transform_dae(
    const LinearDae& dae, std::function<TaylorMatrix(double, int)> Q) {
  auto Pt = [Q](double t, int K) { return transpose(Q(t, K)); };
  LinearDae out = transform_dae(dae, Pt, Q);
  out.symmetry = dae.symmetry;
  out.p = dae.p;
  out.q = dae.q;
  return out;
}

/// Block lower-triangular derivative stack of a transformation, as in the
/// equivalence relation for derivative arrays: block (i, j) = binom(i, j) P^(i-j).
inline Eigen::MatrixXd equivalence_pi(std::function<TaylorMatrix(double, int)> P,
                                      int mu, double t) {
  const TaylorMatrix Pt = P(t, mu + 1);
  const int n = Pt.rows();
  Eigen::MatrixXd Pi = Eigen::MatrixXd::Zero((mu + 1) * n, (mu + 1) * n);
  for (int i = 0; i <= mu; ++i)
    for (int j = 0; j <= i; ++j)
      Pi.block(i * n, j * n, n, n) =
          detail::binom(i, j) * nth_derivative(Pt, i - j, 1).value() *
          1.0;
  return Pi;
}

}  // namespace geodae
