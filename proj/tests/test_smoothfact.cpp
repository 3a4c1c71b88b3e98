#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "geodae/smoothfact.hpp"

using namespace geodae;

namespace {

std::mt19937 rng(42);

Eigen::MatrixXd random_matrix(int r, int c, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

// Affine matrix pencil as a K=1 Taylor value at time t.
TaylorMatrix affine_at(const Eigen::MatrixXd& m0, const Eigen::MatrixXd& m1,
                       double t) {
  TaylorMatrix a(m0 + t * m1, 1);
  a.coeff(1) = m1;
  return a;
}

double frozen_fd_defect(const std::function<TaylorMatrix(double)>& value_at,
                        const std::function<TaylorMatrix(const TaylorMatrix&)>& factor,
                        const std::function<TaylorMatrix(const TaylorMatrix&)>& refactor,
                        double t0, double h) {
  (void)factor;
  TaylorMatrix Fp = refactor(value_at(t0 + h));
  TaylorMatrix Fm = refactor(value_at(t0 - h));
  TaylorMatrix F0 = refactor(value_at(t0));
  Eigen::MatrixXd fd = (Fp.value() - Fm.value()) / (2.0 * h);
  return (F0.coeff(1) - fd).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("QR of the constant identity is trivial") {
  TaylorMatrix I = TaylorMatrix::identity(3, 1);
  FrozenQr f = smooth_qr(I);
  CHECK(f.rank == 3);
  CHECK(max_abs(f.Q - I) < 1e-14);
  CHECK(max_abs(f.R - I) < 1e-14);
}

TEST_CASE("QR of a rotation tracks the rotation") {
  // A(t) = [[cos t, -sin t],[sin t, cos t]] at t = 0.
  TaylorMatrix A = TaylorMatrix::identity(2, 1);
  A.coeff(1) << 0, -1, 1, 0;
  FrozenQr f = smooth_qr(A);
  Eigen::MatrixXd expect(2, 2);
  expect << 0, -1, 1, 0;
  CHECK((f.Q.coeff(1) - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((f.R.value() - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK(f.R.coeff(1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("QR reconstructs and preserves orthonormality differentially") {
  for (int trial = 0; trial < 25; ++trial) {
    TaylorMatrix A(3, 2, 1);
    A.coeff(0) = random_matrix(3, 2);
    A.coeff(1) = random_matrix(3, 2);
    FrozenQr f = smooth_qr(A);
    REQUIRE(f.rank == 2);

    TaylorMatrix AP(3, 2, 1);
    for (int j = 0; j < 2; ++j) AP.set_block(0, j, A.col(f.perm[j]));
    CHECK(max_abs(f.Q * f.R - AP) < 1e-10);

    TaylorMatrix QtQ = transpose(f.Q) * f.Q;
    CHECK((QtQ.value() - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <
          1e-12);
    CHECK(QtQ.coeff(1).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("frozen QR derivatives agree with finite differences") {
  const Eigen::MatrixXd m0 =
      random_matrix(4, 3) + 3.0 * Eigen::MatrixXd::Identity(4, 3);
  const Eigen::MatrixXd m1 = random_matrix(4, 3);
  FrozenQr ref = smooth_qr(affine_at(m0, m1, 0.5));
  auto value_at = [&](double t) { return affine_at(m0, m1, t); };
  auto refactor_q = [&](const TaylorMatrix& a) { return smooth_qr(a, &ref).Q; };
  auto refactor_r = [&](const TaylorMatrix& a) { return smooth_qr(a, &ref).R; };
  const double h = 1e-5;
  CHECK(frozen_fd_defect(value_at, nullptr, refactor_q, 0.5, h) < 1e-7);
  CHECK(frozen_fd_defect(value_at, nullptr, refactor_r, 0.5, h) < 1e-7);
}

TEST_CASE("QR detects rank deficiency at the reference point") {
  TaylorMatrix A(3, 3, 1);
  A.coeff(0) << 1, 2, 3, 2, 4, 6, 0, 0, 1;  // rank 2
  A.coeff(1) = random_matrix(3, 3, 0.1);
  FrozenQr f = smooth_qr(A);
  CHECK(f.rank == 2);
  // Trailing column of Q spans the left null space of the value slice.
  Eigen::VectorXd z = f.Q.value().col(2);
  CHECK((z.transpose() * A.value()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("Cholesky matches hand-differentiated diagonal case") {
  TaylorMatrix A(2, 2, 1);
  A.coeff(0) << 4, 0, 0, 9;
  A.coeff(1) << 2, 0, 0, 0;
  TaylorMatrix L = smooth_cholesky(A);
  CHECK(L.value()(0, 0) == Catch::Approx(2.0));
  CHECK(L.value()(1, 1) == Catch::Approx(3.0));
  CHECK(L.coeff(1)(0, 0) == Catch::Approx(0.5));
  CHECK(L.coeff(1)(1, 1) == Catch::Approx(0.0));

  TaylorMatrix I = TaylorMatrix::identity(4, 1);
  CHECK(max_abs(smooth_cholesky(I) - I) < 1e-14);

  TaylorMatrix N(1, 1, 1);
  N.coeff(0)(0, 0) = -1.0;
  CHECK_THROWS_AS(smooth_cholesky(N), singular_point_error);
}

TEST_CASE("Cholesky derivative satisfies the product rule") {
  for (int trial = 0; trial < 25; ++trial) {
    Eigen::MatrixXd G = random_matrix(4, 4);
    Eigen::MatrixXd Adot = random_matrix(4, 4);
    TaylorMatrix A(4, 4, 1);
    A.coeff(0) = G * G.transpose() + 4.0 * Eigen::MatrixXd::Identity(4, 4);
    A.coeff(1) = Adot + Adot.transpose();
    TaylorMatrix L = smooth_cholesky(A);
    Eigen::MatrixXd lhs = L.coeff(1) * L.value().transpose() +
                          L.value() * L.coeff(1).transpose();
    CHECK((lhs - A.coeff(1)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(max_abs(L * transpose(L) - A) < 1e-10);
  }
}

TEST_CASE("frozen LU solves match Eigen and track derivatives") {
  const Eigen::MatrixXd m0 =
      random_matrix(4, 4) + 4.0 * Eigen::MatrixXd::Identity(4, 4);
  const Eigen::MatrixXd m1 = random_matrix(4, 4);
  TaylorMatrix A = affine_at(m0, m1, 0.0);
  TaylorMatrix B(random_matrix(4, 2), 1);
  TaylorMatrix X = smooth_solve(A, B);
  Eigen::MatrixXd Xe = m0.lu().solve(B.value());
  CHECK((X.value() - Xe).cwiseAbs().maxCoeff() < 1e-12);
  // d/dt(A^{-1}B) = -A^{-1} Adot A^{-1} B for constant B.
  Eigen::MatrixXd expect = -m0.lu().solve(m1 * Xe);
  CHECK((X.coeff(1) - expect).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("congruence to J: canonical and scaled inputs") {
  Eigen::MatrixXd J = symplectic_unit(1);
  TaylorMatrix Jt(J, 1);
  CongruenceResult r = congruence_to_j(Jt);
  CHECK(max_abs(transpose(r.W) * Jt * r.W - TaylorMatrix(J, 1)) < 1e-12);

  TaylorMatrix J4(4.0 * J, 1);
  CongruenceResult r4 = congruence_to_j(J4);
  CHECK(max_abs(transpose(r4.W) * J4 * r4.W - TaylorMatrix(J, 1)) < 1e-12);
}

TEST_CASE("congruence to J on constructed smooth inputs") {
  for (int p : {1, 2, 3}) {
    const int d = 2 * p;
    const Eigen::MatrixXd J = symplectic_unit(p);
    for (int trial = 0; trial < 30; ++trial) {
      Eigen::MatrixXd g0 =
          Eigen::MatrixXd::Identity(d, d) + 0.3 * random_matrix(d, d);
      Eigen::MatrixXd g1 = random_matrix(d, d);
      TaylorMatrix G = affine_at(g0, g1, 0.0);
      TaylorMatrix E = transpose(G) * TaylorMatrix(J, 1) * G;
      CongruenceResult r = congruence_to_j(E);
      CHECK(max_abs(transpose(r.W) * E * r.W - TaylorMatrix(J, 1)) < 1e-9);
    }
  }
}

TEST_CASE("congruence to J rejects non-skew input") {
  TaylorMatrix A(Eigen::MatrixXd::Identity(2, 2), 1);
  CHECK_THROWS_AS(congruence_to_j(A), std::invalid_argument);
}

TEST_CASE("congruence to S: canonical, diagonal, constructed") {
  Eigen::MatrixXd S = signature_matrix(1, 1);
  TaylorMatrix St(S, 1);
  CongruenceResult r = congruence_to_s(St, 1, 1);
  CHECK(max_abs(transpose(r.W) * St * r.W - TaylorMatrix(S, 1)) < 1e-12);

  TaylorMatrix D(2, 2, 1);
  D.coeff(0) << 4, 0, 0, -9;
  CongruenceResult rd = congruence_to_s(D, 1, 1);
  CHECK(max_abs(transpose(rd.W) * D * rd.W - TaylorMatrix(S, 1)) < 1e-12);

  const Eigen::MatrixXd S21 = signature_matrix(2, 1);
  for (int trial = 0; trial < 30; ++trial) {
    Eigen::MatrixXd g0 =
        Eigen::MatrixXd::Identity(3, 3) + 0.3 * random_matrix(3, 3);
    Eigen::MatrixXd g1 = random_matrix(3, 3);
    TaylorMatrix G = affine_at(g0, g1, 0.0);
    TaylorMatrix E = transpose(G) * TaylorMatrix(S21, 1) * G;
    CongruenceResult rc = congruence_to_s(E, 2, 1);
    CHECK(max_abs(transpose(rc.W) * E * rc.W - TaylorMatrix(S21, 1)) < 1e-9);
  }

  CHECK_THROWS_AS(congruence_to_s(D, 2, 0), std::invalid_argument);
}

TEST_CASE("congruence derivatives agree with frozen finite differences") {
  // Skew case.
  {
    const int p = 2, d = 4;
    const Eigen::MatrixXd J = symplectic_unit(p);
    Eigen::MatrixXd g0 = Eigen::MatrixXd::Identity(d, d) + 0.2 * random_matrix(d, d);
    Eigen::MatrixXd g1 = random_matrix(d, d);
    auto e_at = [&](double t) {
      TaylorMatrix G = affine_at(g0, g1, t);
      return transpose(G) * TaylorMatrix(J, 1) * G;
    };
    CongruenceResult ref = congruence_to_j(e_at(0.0));
    auto refactor = [&](const TaylorMatrix& e) {
      return congruence_to_j(e, &ref).W;
    };
    CHECK(frozen_fd_defect(e_at, nullptr, refactor, 0.0, 1e-5) < 1e-7);
  }
  // Symmetric case.
  {
    const Eigen::MatrixXd S = signature_matrix(2, 1);
    Eigen::MatrixXd g0 = Eigen::MatrixXd::Identity(3, 3) + 0.2 * random_matrix(3, 3);
    Eigen::MatrixXd g1 = random_matrix(3, 3);
    auto e_at = [&](double t) {
      TaylorMatrix G = affine_at(g0, g1, t);
      return transpose(G) * TaylorMatrix(S, 1) * G;
    };
    CongruenceResult ref = congruence_to_s(e_at(0.0), 2, 1);
    auto refactor = [&](const TaylorMatrix& e) {
      return congruence_to_s(e, 2, 1, &ref).W;
    };
    CHECK(frozen_fd_defect(e_at, nullptr, refactor, 0.0, 1e-5) < 1e-7);
  }
}

TEST_CASE("congruence identity holds at both coefficient slices") {
  // The flow-relevant differential identity: d/dt(W^T E W) = 0 as well.
  int count = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int p = 1 + trial % 2, q = trial % 3 == 0 ? 1 : 0;
    const int d = p + q;
    Eigen::MatrixXd g0 = Eigen::MatrixXd::Identity(d, d) + 0.25 * random_matrix(d, d);
    Eigen::MatrixXd g1 = random_matrix(d, d);
    const Eigen::MatrixXd S = signature_matrix(p, q);
    TaylorMatrix G = affine_at(g0, g1, 0.0);
    TaylorMatrix E = transpose(G) * TaylorMatrix(S, 1) * G;
    CongruenceResult r = congruence_to_s(E, p, q);
    TaylorMatrix defect = transpose(r.W) * E * r.W - TaylorMatrix(S, 1);
    CHECK(defect.value().cwiseAbs().maxCoeff() < 1e-9);
    CHECK(defect.coeff(1).cwiseAbs().maxCoeff() < 1e-8);
    ++count;
  }
  CHECK(count == 100);
}

TEST_CASE("complete_to_basis produces a nonsingular square matrix") {
  // Identity columns complete to the remaining identity columns.
  TaylorMatrix T2(Eigen::MatrixXd::Identity(4, 2), 1);
  TaylorMatrix T2p = complete_to_basis(T2);
  Eigen::MatrixXd Q(4, 4);
  Q.leftCols(2) = T2.value();
  Q.rightCols(2) = T2p.value();
  CHECK(std::abs(std::abs(Q.determinant()) - 1.0) < 1e-12);

  // 2D column with derivative.
  TaylorMatrix v(2, 1, 1);
  v.coeff(0) << 1, 0;
  v.coeff(1) << 0, 1;
  TaylorMatrix vp = complete_to_basis(v);
  Eigen::MatrixXd Q2(2, 2);
  Q2.col(0) = v.value();
  Q2.col(1) = vp.value();
  CHECK(std::abs(Q2.determinant()) > 0.5);

  // Random orthonormal T2: completion stays orthonormal.
  Eigen::MatrixXd M = random_matrix(5, 3);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
  Eigen::MatrixXd T = qr.householderQ() * Eigen::MatrixXd::Identity(5, 3);
  TaylorMatrix T2r(T, 1);
  TaylorMatrix T2rp = complete_to_basis(T2r);
  Eigen::MatrixXd full(5, 5);
  full.leftCols(3) = T;
  full.rightCols(2) = T2rp.value();
  CHECK((full.transpose() * full - Eigen::MatrixXd::Identity(5, 5))
            .cwiseAbs()
            .maxCoeff() < 1e-10);
}

TEST_CASE("factor-reconstruction property over random well-conditioned inputs") {
  int count = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 4;
    const int K = 1 + trial % 2;
    TaylorMatrix A(n, n, K);
    A.coeff(0) = random_matrix(n, n) + 3.0 * Eigen::MatrixXd::Identity(n, n);
    for (int k = 1; k <= K; ++k) A.coeff(k) = random_matrix(n, n);
    FrozenQr f = smooth_qr(A);
    TaylorMatrix AP(n, n, K);
    for (int j = 0; j < n; ++j) AP.set_block(0, j, A.col(f.perm[j]));
    CHECK(max_abs(f.Q * f.R - AP) < 1e-9);

    TaylorMatrix spd = A * transpose(A);
    TaylorMatrix L = smooth_cholesky(spd);
    CHECK(max_abs(L * transpose(L) - spd) < 1e-9 * max_abs(spd));
    ++count;
  }
  CHECK(count == 100);
}
