#include <doctest.h>

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "freeent/errors.hpp"
#include "freeent/matrix.hpp"
#include "freeent/ncpoly.hpp"
#include "freeent/stats.hpp"

using namespace freeent;

namespace {

Matrix diag(std::initializer_list<double> d) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(d.size()));
  Eigen::Index i = 0;
  for (double x : d) v(i++) = x;
  return v.cast<cdouble>().asDiagonal();
}

Matrix random_hermitian(int N, double radius, CounterRng& rng) {
  Matrix g = gaussian_hermitian(N, rng);
  return g * (radius / operator_norm(g));
}

}  // namespace

TEST_CASE("MatrixTuple enforces Hermitian and norm invariants") {
  CHECK_NOTHROW(MatrixTuple({diag({1.0, -2.0})}, 2.0));
  CHECK_THROWS_AS(MatrixTuple({diag({1.0, -2.5})}, 2.0), InvalidArgument);
  Matrix nh = Matrix::Zero(2, 2);
  nh(0, 1) = 1.0;
  CHECK_THROWS_AS(MatrixTuple({nh}, 2.0), InvalidArgument);
  CHECK_THROWS_AS(MatrixTuple({diag({1.0}), diag({1.0, 1.0})}, 2.0), InvalidArgument);
  CHECK_THROWS_AS(MatrixTuple({diag({1.0})}, 0.0), InvalidArgument);
}

TEST_CASE("BlockMap") {
  const BlockMap m = BlockMap::from_groups({1, 2, 2});
  CHECK(m.groups() == 2);
  CHECK(m.group_of(2) == 1);
  CHECK(m.max_group_size() == 2);
  CHECK(BlockMap::global(3).groups() == 1);
  CHECK(BlockMap::full(3).groups() == 3);
  CHECK_THROWS_AS(BlockMap::from_groups({1, 3}), InvalidArgument);
}

TEST_CASE("haar_unitary is unitary") {
  CounterRng rng(1);
  const Matrix u1 = haar_unitary(1, rng);
  CHECK(std::abs(std::abs(u1(0, 0)) - 1.0) < 1e-12);
  for (int N : {2, 5, 16}) {
    const Matrix u = haar_unitary(N, rng);
    CHECK((u * u.adjoint() - Matrix::Identity(N, N)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("haar_unitary first-column moments") {
  // First column is uniform on the complex sphere: E|U11|^2 = 1/N and
  // E|U11|^4 = 2/(N(N+1)).
  CounterRng rng(2);
  const int N = 4, S = 10000;
  std::vector<double> a2, a4;
  for (int s = 0; s < S; ++s) {
    const double p = std::norm(haar_unitary(N, rng)(0, 0));
    a2.push_back(p);
    a4.push_back(p * p);
  }
  const ScalarEstimate e2 = mean_estimate_iid(a2), e4 = mean_estimate_iid(a4);
  CHECK(std::abs(e2.value - 1.0 / N) < 3 * e2.std_error);
  CHECK(std::abs(e4.value - 2.0 / (N * (N + 1))) < 3 * e4.std_error);
}

TEST_CASE("haar_unitary left invariance and Weingarten rank-one check") {
  CounterRng rng(3);
  const int N = 3, S = 8000;
  const Matrix A = diag({1.0, 0.0, -0.5});
  const Matrix B = diag({2.0, 1.0, 0.0});
  const Matrix V = haar_unitary(N, rng);  // fixed rotation
  std::vector<double> x, y;
  for (int s = 0; s < S; ++s) {
    const Matrix U = haar_unitary(N, rng);
    x.push_back((U * A * U.adjoint() * B).trace().real() / N);
    y.push_back(std::norm((V * U)(0, 0)));
  }
  const ScalarEstimate ex = mean_estimate_iid(x);
  const double expected = (A.trace().real() / N) * (B.trace().real() / N);
  CHECK(std::abs(ex.value - expected) < 3 * ex.std_error);
  const ScalarEstimate ey = mean_estimate_iid(y);
  CHECK(std::abs(ey.value - 1.0 / N) < 3 * ey.std_error);
}

TEST_CASE("conjugate_tuple") {
  CounterRng rng(4);
  const int N = 3;
  const MatrixTuple t({random_hermitian(N, 1.0, rng), random_hermitian(N, 0.8, rng)}, 1.0);
  const std::vector<Matrix> ids{Matrix::Identity(N, N), Matrix::Identity(N, N)};
  const MatrixTuple same = conjugate_tuple(t, ids, BlockMap::full(2));
  CHECK((same[0] - t[0]).norm() < 1e-14);

  const std::vector<Matrix> one{haar_unitary(N, rng)};
  const MatrixTuple g = conjugate_tuple(t, one, BlockMap::global(2));
  CHECK(std::abs(trace_moment(g, Word{1, 2}) - trace_moment(t, Word{1, 2})) < 1e-12);

  const std::vector<Matrix> two{haar_unitary(N, rng), haar_unitary(N, rng)};
  const MatrixTuple f = conjugate_tuple(t, two, BlockMap::full(2));
  for (int b = 0; b < 2; ++b) {
    CHECK(std::abs(operator_norm(f[b]) - operator_norm(t[b])) < 1e-9);
    for (int k = 1; k <= 4; ++k) {
      const Word w(std::vector<int>(static_cast<std::size_t>(k), b + 1));
      CHECK(std::abs(trace_moment(f, w) - trace_moment(t, w)) < 1e-9);
    }
  }
  CHECK_THROWS_AS(conjugate_tuple(t, one, BlockMap::full(2)), InvalidArgument);
}

TEST_CASE("full conjugation changes a mixed moment of a correlated pair") {
  // A = diag(1,-1), B = A. tau(AB) = 1 before. Conjugating B alone by the
  // Hadamard rotation gives B' = [[0,1],[1,0]] and tau(AB') = 0.
  const Matrix A = diag({1.0, -1.0});
  const MatrixTuple t({A, A}, 1.0);
  Matrix H(2, 2);
  H << 1.0, 1.0, 1.0, -1.0;
  H /= std::sqrt(2.0);
  const std::vector<Matrix> us{Matrix::Identity(2, 2), H};
  const MatrixTuple c = conjugate_tuple(t, us, BlockMap::full(2));
  CHECK(std::abs(trace_moment(t, Word{1, 2}) - 1.0) < 1e-14);
  CHECK(std::abs(trace_moment(c, Word{1, 2})) < 1e-14);
  CHECK(std::abs(c[1](0, 1) - 1.0) < 1e-14);
}

TEST_CASE("operator_norm") {
  CHECK(operator_norm(diag({1.0, -3.0})) == doctest::Approx(3.0));
  CHECK(operator_norm(Matrix::Zero(3, 3)) == 0.0);
  Matrix m = Matrix::Zero(2, 2);
  m(0, 1) = m(1, 0) = 2.0;
  CHECK(operator_norm(m) == doctest::Approx(2.0));
}

TEST_CASE("apply_scalar_function") {
  const Matrix m = diag({1.0, 2.0});
  CHECK((apply_scalar_function(m, [](double x) { return x; }) - m).norm() < 1e-12);
  CHECK((apply_scalar_function(m, [](double x) { return x * x; }) - diag({1.0, 4.0})).norm() < 1e-12);
  const CompressionFn g = build_compression(3.0, 2.0, 1.0);
  CHECK((apply_scalar_function(diag({3.0, 0.5}), g) - diag({2.0, 0.5})).norm() < 1e-12);

  CounterRng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = random_hermitian(4, 3.0, rng);
    const Matrix u = haar_unitary(4, rng);
    const Matrix lhs = apply_scalar_function(u * a * u.adjoint(), g);
    const Matrix rhs = u * apply_scalar_function(a, g) * u.adjoint();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
    // Monotone g maps the T-ball into the R-ball.
    CHECK(operator_norm(apply_scalar_function(a, g)) <= std::max(std::abs(g(-3.0)), std::abs(g(3.0))) + 1e-12);
  }
}

TEST_CASE("compression map invariants") {
  const CompressionFn g = build_compression(3.0, 2.0, 1.0);
  CHECK(g.alpha() == doctest::Approx(1.0 / 3.0));
  CHECK(g(-3.0) == doctest::Approx(-2.0));
  CHECK(g(3.0) == doctest::Approx(2.0));
  CHECK(g(0.0) == 0.0);
  CHECK(g(0.7) == 0.7);
  CHECK(g(-1.0) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(build_compression(2.0, 2.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(build_compression(3.0, 1.0, 2.0), InvalidArgument);

  // g' equals h, g is continuous and nondecreasing; checked by finite differences.
  double prev = g(-3.0);
  for (int i = 1; i <= 6000; ++i) {
    const double t = -3.0 + i * 1e-3;
    const double v = g(t);
    CHECK(v >= prev - 1e-15);
    CHECK(v - prev <= 1e-3 + 1e-12);
    const double fd = (g(t + 1e-6) - g(t - 1e-6)) / 2e-6;
    CHECK(std::abs(fd - g.derivative(t)) < 1e-5);
    CHECK(g.derivative(t) >= g.alpha() - 1e-15);
    CHECK(g.derivative(t) <= 1.0);
    prev = v;
  }
  for (double y : {-1.9, -1.2, 0.3, 1.5}) CHECK(g(g.inverse(y)) == doctest::Approx(y).epsilon(1e-12));
}

TEST_CASE("log_jacobian_functional_calculus") {
  const CompressionFn g = build_compression(3.0, 2.0, 1.0);
  CHECK(log_jacobian_functional_calculus(diag({0.5, -0.9, 0.1}), g) == doctest::Approx(0.0));
  CHECK(log_jacobian_functional_calculus(diag({3.0}), g) == doctest::Approx(std::log(g.alpha())));

  CounterRng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_hermitian(4, 3.0, rng);
    const double lj = log_jacobian_functional_calculus(a, g);
    CHECK(std::abs(lj) <= 16 * std::abs(std::log(g.alpha())) + 1e-12);
    const Matrix u = haar_unitary(4, rng);
    const Matrix b = u * a * u.adjoint();
    CHECK(std::abs(log_jacobian_functional_calculus(0.5 * (b + b.adjoint()), g) - lj) < 1e-9);
  }
  // Degenerate eigenvalues use the derivative.
  CHECK(log_jacobian_functional_calculus(diag({2.5, 2.5}), g) == doctest::Approx(4.0 * std::log(g.alpha())));
}

TEST_CASE("MatrixTuple JSON round trip") {
  CounterRng rng(9);
  const MatrixTuple t({random_hermitian(3, 1.0, rng), random_hermitian(3, 0.5, rng)}, 1.0);
  nlohmann::json j;
  to_json(j, t);
  const MatrixTuple u = matrix_tuple_from_json(j);
  CHECK(u.n() == 2);
  CHECK(u.N() == 3);
  CHECK((u[1] - t[1]).norm() == 0.0);
  j["blocks"][0] = std::vector<double>(4, 0.0);
  CHECK_THROWS_AS(matrix_tuple_from_json(j), InvalidArgument);
}
