#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "freeent/entropy.hpp"
#include "freeent/errors.hpp"
#include "freeent/reference.hpp"

using namespace freeent;

namespace {

MomentSpec scalar_spec(double R, std::vector<double> moments) {
  MomentSpec s(1, static_cast<int>(moments.size()), R);
  s.set(Word{}, 1.0);
  for (std::size_t k = 0; k < moments.size(); ++k) s.set(Word(std::vector<int>(k + 1, 1)), moments[k]);
  return s;
}

FitOptions small_fit() {
  FitOptions o;
  o.max_iterations = 10;
  o.chain_steps = 4000;
  o.chain_burnin = 500;
  o.max_chain_steps = 12000;
  o.final_steps = 30000;
  o.final_burnin = 500;
  o.ti_steps = 6000;
  o.ti_burnin = 500;
  o.ti_nodes = 11;
  return o;
}

EstimatorBudget small_budget() {
  EstimatorBudget b;
  b.chain.steps = 6000;
  b.chain.burnin = 500;
  b.ti_nodes = 11;
  return b;
}

// Mean a of the density proportional to exp(c x) on [-1, 1].
double tilt_mean(double c) { return 1.0 / std::tanh(c) - 1.0 / c; }

double tilt_for_mean(double a) {
  double lo = 1e-8, hi = 200.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (tilt_mean(mid) < a ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double tilt_entropy(double c, double a) { return std::log(2.0 * std::sinh(c) / c) - c * a; }

}  // namespace

TEST_CASE("dual basis sizes and coordinates") {
  CHECK(DualBasis(1, 2).size() == 2);
  CHECK(DualBasis(2, 1).size() == 2);
  CHECK(DualBasis(2, 2).size() == 5);
  CHECK_THROWS_AS(DualBasis(0, 2), InvalidArgument);

  const DualBasis b(2, 3);
  Eigen::VectorXd lam(b.size());
  for (int j = 0; j < b.size(); ++j) lam(j) = 0.1 * (j + 1) * (j % 2 ? -1.0 : 1.0);
  const NcPoly P = b.potential(lam);
  CHECK(is_self_adjoint(P));
  CHECK((b.coordinates(P) - lam).norm() < 1e-12);

  // tau(P_lambda) = values(tau) . lambda for a state with complex entries.
  const MomentSpec tau = free_product_moments({semicircle_moments(1.0, 3), semicircle_moments(0.5, 3)}, 3);
  CHECK(std::abs(tau.value(P).real() - b.values(tau).dot(lam)) < 1e-12);

  CHECK_THROWS_AS((void)b.coordinates(NcPoly::parse(2, "X1^4")), InvalidArgument);
  // Trace-equivalent monomials share a coordinate.
  const Eigen::VectorXd c = b.coordinates(NcPoly::parse(2, "X1*X2 + X2*X1"));
  CHECK(c.lpNorm<1>() == doctest::Approx(2.0));
}

TEST_CASE("dual objective at the uniform and linear potentials") {
  CounterRng rng(11);
  const DualBasis b(1, 1);
  const MomentSpec tau = scalar_spec(1.0, {0.2});
  const ScalarEstimate f0 = dual_objective(Eigen::VectorXd::Zero(1), b, tau, 0.0, 1, 1.0, small_budget(), rng);
  CHECK(f0.value == doctest::Approx(std::log(2.0)));

  Eigen::VectorXd lam(1);
  lam << 1.0;
  const ScalarEstimate f1 = dual_objective(lam, b, tau, 0.1, 1, 1.0, small_budget(), rng);
  const double expected = std::log(2.0 * std::sinh(1.0)) + 0.2 + 0.1;
  CHECK(std::abs(f1.value - expected) < 3.0 * f1.std_error + 5e-3);
}

TEST_CASE("maxent oracle: uniform, tilt, duality") {
  const MaxentResult none = scalar_maxent_oracle({}, 1.5);
  CHECK(none.entropy == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  const MaxentResult uni = scalar_maxent_oracle({{1, 0.0}, {2, 4.0 / 3.0}}, 2.0);
  CHECK(std::abs(uni.entropy - std::log(4.0)) < 1e-3);
  CHECK(uni.gap <= 1e-6);

  for (double a : {0.1, 0.4, -0.7}) {
    const MaxentResult r = scalar_maxent_oracle({{1, a}}, 1.0);
    const double c = std::copysign(tilt_for_mean(std::abs(a)), a);
    CHECK(r.converged);
    CHECK(std::abs(r.entropy - tilt_entropy(std::abs(c), std::abs(a))) < 1e-3);
    CHECK(r.lambda(0) == doctest::Approx(-c).epsilon(1e-3));
    CHECK(r.gap <= 1e-6);
    double mass = 0.0;
    for (Eigen::Index i = 0; i < r.density.size(); ++i) mass += r.density(i) * 2.0 / static_cast<double>(r.density.size());
    CHECK(mass == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(scalar_maxent_oracle({{2, 1.5}}, 1.0), InfeasibleTarget);
  CHECK_THROWS_AS(scalar_maxent_oracle({{1, 0.5}, {2, 0.2}}, 1.0), InfeasibleTarget);
  CHECK_THROWS_AS(scalar_maxent_oracle({{1, 0.0}}, 1.0, 100), InvalidArgument);
}

TEST_CASE("fit recovers the scalar exponential tilt") {
  CounterRng rng(12);
  const double a = 0.3;
  const FitResult f = fit_projection(scalar_spec(1.0, {a}), 1, 1, 1.0, 0.0, small_fit(), rng);
  const double c = tilt_for_mean(a);
  CHECK(f.status == FitStatus::Converged);
  CHECK(std::abs(f.lambda(0) + c) < 0.1);
  CHECK(std::abs(f.rho.value - tilt_entropy(c, a)) < 3.0 * f.rho.std_error + 0.02);
  CHECK(std::abs(f.gap) < 3.0 * f.gap_stderr + 0.02);
}

TEST_CASE("rho matches the grid maxent oracle at N = 1") {
  CounterRng rng(13);
  const RhoEstimate r = rho(scalar_spec(1.0, {0.0, 1.0 / 3.0}), 1, 2, 1.0, 0.0, small_fit(), rng);
  const MaxentResult o = scalar_maxent_oracle({{1, 0.0}, {2, 1.0 / 3.0}}, 1.0);
  CHECK(r.feasible());
  CHECK(std::abs(r.primal.value - o.entropy) < 1e-2);

  CounterRng rng2(14);
  const RhoEstimate t = rho(scalar_spec(1.0, {0.2, 0.25}), 1, 2, 1.0, 0.0, small_fit(), rng2);
  const MaxentResult ot = scalar_maxent_oracle({{1, 0.2}, {2, 0.25}}, 1.0);
  CHECK(std::abs(t.primal.value - ot.entropy) < 3.0 * t.primal.std_error + 1e-2);
}

TEST_CASE("rho is monotone in eps and vacuous for a wide box") {
  const MomentSpec tau = scalar_spec(1.0, {0.4, 0.3});
  std::vector<RhoEstimate> r;
  for (double eps : {0.0, 0.05, 0.2}) {
    CounterRng rng(15);
    r.push_back(rho(tau, 1, 2, 1.0, eps, small_fit(), rng));
  }
  for (std::size_t i = 1; i < r.size(); ++i)
    CHECK(r[i - 1].primal.value <= r[i].primal.value + 3.0 * combine_stderr(r[i - 1].primal.std_error, r[i].primal.std_error));
  CounterRng rng(16);
  const RhoEstimate wide = rho(tau, 1, 2, 1.0, 1.0, small_fit(), rng);
  CHECK(std::abs(wide.primal.value - std::log(2.0)) < 3.0 * wide.primal.std_error + 1e-2);
}

TEST_CASE("infeasible target is reported, not a number") {
  // At N = 1 the letters commute, so X1X2X1X2 and X1^2X2^2 coincide; the
  // free pair separates them.
  const MomentSpec tau = free_product_moments({semicircle_moments(0.25, 4, 1.0), semicircle_moments(0.25, 4, 1.0)}, 4);
  FitOptions o = small_fit();
  o.skip_entropy = true;
  CounterRng rng(17);
  const FitResult f = fit_projection(tau, 1, 4, 1.0, 0.0, o, rng);
  CHECK(f.status == FitStatus::Infeasible);
  CHECK_FALSE(f.message.empty());
  CounterRng rng2(17);
  CHECK_THROWS_AS(rho(tau, 1, 4, 1.0, 0.0, small_fit(), rng2), InfeasibleTarget);
}

TEST_CASE("fit of the uniform-ball barycenter gives the zero potential") {
  const int N = 4;
  const double R = 1.0;
  ChainOptions co;
  co.steps = 60000;
  co.burnin = 2000;
  co.tracked = {NcPoly::parse(1, "X1"), NcPoly::parse(1, "X1^2")};
  CounterRng chain_rng(18);
  const ChainResult bary = mcmc_chain(GibbsModel::uniform(1, N, R), co, chain_rng);
  const MomentSpec tau =
      scalar_spec(R, {mean_estimate(tracked_series(bary, 0)).value, mean_estimate(tracked_series(bary, 1)).value});
  FitOptions o = small_fit();
  o.skip_entropy = true;
  CounterRng rng(19);
  const FitResult f = fit_projection(tau, N, 2, R, 0.0, o, rng);
  CHECK(f.status == FitStatus::Converged);
  for (Eigen::Index j = 0; j < f.lambda.size(); ++j) CHECK(std::abs(f.lambda(j)) < 0.05);
}

TEST_CASE("free pressure") {
  CounterRng rng(20);
  const ScalarEstimate zero = free_pressure(NcPoly(1), 3, 1.0, small_budget(), rng);
  CHECK(zero.value == doctest::Approx(log_ball_volume(3, 1.0) / 9.0 + 0.5 * std::log(3.0)));
  const ScalarEstimate lin = free_pressure(NcPoly::parse(1, "X1"), 1, 1.0, small_budget(), rng);
  CHECK(std::abs(lin.value - std::log(2.0 * std::sinh(1.0))) < 3.0 * lin.std_error + 5e-3);
}

TEST_CASE("free-pressure bound on rho") {
  const double R = 1.0;
  const MomentSpec tau = scalar_spec(R, {0.1, 0.3});
  CounterRng rng(21);
  FitOptions o = small_fit();
  const FitResult f = fit_projection(tau, 2, 2, R, 0.0, o, rng);
  REQUIRE(f.status != FitStatus::Infeasible);

  const EtaBoundReport uniform = eta_bound_check(tau, NcPoly(1), f.rho, 2, 2, R, 0.0, small_budget(), rng);
  CHECK(uniform.holds);
  CHECK(uniform.rhs == doctest::Approx(log_ball_volume(2, R) / 4.0 + 0.5 * std::log(2.0)));

  // At the fitted potential both sides agree.
  const EtaBoundReport tight = eta_bound_check(tau, f.potential, f.rho, 2, 2, R, 0.0, small_budget(), rng);
  CHECK(tight.holds);
  CHECK(std::abs(tight.lhs - tight.rhs) < 3.0 * tight.combined_stderr + 0.02);

  CounterRng prng(22);
  for (int trial = 0; trial < 5; ++trial) {
    const NcPoly P = NcPoly::parse(1, "X1") * cdouble(prng.uniform(-2.0, 2.0)) +
                     NcPoly::parse(1, "X1^2") * cdouble(prng.uniform(-2.0, 2.0));
    CHECK(eta_bound_check(tau, P, f.rho, 2, 2, R, 0.0, small_budget(), rng).holds);
  }
  CHECK_THROWS_AS(eta_bound_check(tau, NcPoly::parse(1, "X1^3"), f.rho, 2, 2, R, 0.0, small_budget(), rng),
                  InvalidArgument);
}

TEST_CASE("chi-tilde curve bookkeeping") {
  CounterRng rng(23);
  const MomentSpec tau = scalar_spec(1.0, {0.0, 1.0 / 3.0});
  CHECK_THROWS_AS(chi_tilde_curve(tau, {2, 1}, 2, 1.0, 0.0, small_fit(), rng), InvalidArgument);
  const std::vector<CurvePoint> c = chi_tilde_curve(tau, {1}, 2, 1.0, 0.0, small_fit(), rng);
  REQUIRE(c.size() == 1);
  CHECK(std::abs(c[0].value - std::log(2.0)) < 3.0 * c[0].std_error + 1e-2);
}

TEST_CASE("log-energy reference values") {
  CHECK(log_energy(ScalarDensity::semicircle(1.0)) == doctest::Approx(-0.25).epsilon(1e-4));
  for (double R : {1.0, 2.0, 3.0}) CHECK(log_energy(ScalarDensity::arcsine(R)) == doctest::Approx(std::log(R / 2.0)).epsilon(1e-4));
  // Uniform on [-1, 1]: log 2 - 3/2.
  const ScalarDensity u = ScalarDensity::from_pdf([](double) { return 0.5; }, -1.0, 1.0, 400);
  CHECK(log_energy(u) == doctest::Approx(std::log(2.0) - 1.5).epsilon(1e-9));

  const ScalarDensity s = ScalarDensity::semicircle(0.7);
  for (double k : {0.5, 2.0, 3.0})
    CHECK(one_variable_chi_reference(s.dilated(k)) == doctest::Approx(one_variable_chi_reference(s) + std::log(k)).epsilon(1e-9));
  CHECK(log_energy(ScalarDensity::arcsine(2.0)) > log_energy(ScalarDensity::semicircle(1.0)));
  CHECK(ScalarDensity::semicircle(1.0).moment(2) == doctest::Approx(1.0).epsilon(1e-5));

  double prev = std::numeric_limits<double>::infinity();
  for (double v : {1.0, 1e-2, 1e-4, 1e-6}) {
    const double x = one_variable_chi_reference(ScalarDensity::semicircle(v));
    CHECK(x < prev - 1.0);
    prev = x;
  }
  ScalarDensity bad = u;
  bad.masses[0] += 0.1;
  CHECK_THROWS_AS((void)one_variable_chi_reference(bad), InvalidArgument);
}

TEST_CASE("calibrated reference constant") {
  CHECK(std::abs(chi_reference_constant() - (0.75 + 0.5 * std::log(std::numbers::pi))) < 1e-5);
  // Semicircle value is the Gaussian constant 1/2 + log(pi)/2.
  CHECK(std::abs(one_variable_chi_reference(ScalarDensity::semicircle(1.0)) - (0.5 + 0.5 * std::log(std::numbers::pi))) <
        1e-4);
}

TEST_CASE("scalar entropy quadrature") {
  CHECK(scalar_entropy_quadrature([](double) { return 0.0; }, -1.0, 1.0, 1000) == doctest::Approx(std::log(2.0)));
  CHECK(scalar_entropy_quadrature([](double x) { return x; }, -1.0, 1.0) ==
        doctest::Approx(tilt_entropy(1.0, tilt_mean(1.0))).epsilon(1e-8));
}

TEST_CASE("data processing under coordinate projection") {
  CounterRng rng(24);
  for (int trial = 0; trial < 10; ++trial) {
    double c[2][5];
    for (auto& row : c)
      for (double& x : row) x = rng.uniform(-1.5, 1.5);
    auto quad = [](const double* k) {
      return [k](double x, double y) { return k[0] * x + k[1] * y + k[2] * x * x + k[3] * y * y + k[4] * x * y; };
    };
    const DataProcessingReport r = data_processing_check(quad(c[0]), quad(c[1]), 1.0, 200);
    CHECK(r.joint <= 0.0);
    CHECK(r.holds());
  }
  const auto f = [](double x, double y) { return x * y; };
  CHECK(data_processing_check(f, f, 1.0, 50).joint == doctest::Approx(0.0));
}

TEST_CASE("partition bounds hold exactly on the grid") {
  CounterRng rng(25);
  const int M = 500;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd mu(M), nu(M);
    for (int i = 0; i < M; ++i) {
      mu(i) = std::exp(rng.uniform(-3.0, 3.0));
      nu(i) = std::exp(rng.uniform(-3.0, 3.0));
    }
    mu /= mu.sum();
    nu /= nu.sum();
    std::vector<bool> F(M);
    for (int i = 0; i < M; ++i) F[static_cast<std::size_t>(i)] = rng.uniform() < 0.4;
    const PartitionBound b = partition_bound(mu, F, 2.0);
    CHECK(b.lhs <= b.rhs + 1e-12);
    const PartitionBound rb = relative_partition_bound(mu, nu, F);
    CHECK(rb.lhs <= rb.rhs + 1e-12);
  }
  // Uniform density with F = left half is tight.
  const Eigen::VectorXd flat = Eigen::VectorXd::Constant(M, 1.0 / M);
  std::vector<bool> half(M, false);
  for (int i = 0; i < M / 2; ++i) half[static_cast<std::size_t>(i)] = true;
  const PartitionBound t = partition_bound(flat, half, 1.0);
  CHECK(t.lhs == doctest::Approx(t.rhs));
}

TEST_CASE("compression entropy change") {
  const CompressionFn g = build_compression(3.0, 2.0, 1.0);
  SUBCASE("one dimension by quadrature") {
    for (auto logd : std::vector<std::function<double(double)>>{[](double) { return 0.0; },
                                                                 [](double x) { return -x * x / 2.0; },
                                                                 [](double x) { return 0.7 * x - 0.1 * x * x * x * x; }}) {
      const ScalarCompressionReport r = scalar_compression_check(g, logd);
      CHECK(std::abs(r.discrepancy()) < 1e-6);
      CHECK(r.mean_log_derivative < 0.0);
      CHECK(r.mean_log_derivative >= std::log(g.alpha()));
    }
  }
  SUBCASE("matrix version against importance sampling") {
    ChainOptions co;
    co.burnin = 1000;
    co.steps = 9000;
    for (int N : {2, 4}) {
      CounterRng rng(900 + N);
      const CompressionReport r = compression_check(g, N, co, rng);
      CAPTURE(N);
      CHECK(r.bound_holds);
      CHECK(r.max_abs_log_jacobian <= r.jacobian_bound * (1.0 + 1e-12));
      CHECK(r.matches());
      CHECK(r.formula.value < 0.0);
    }
  }
  SUBCASE("spectral and matrix jacobians agree") {
    CounterRng rng(77);
    const Matrix m = uniform_ball_matrix(3, 2.9, rng);
    CHECK(log_jacobian_from_spectrum(hermitian_eigenvalues(m), g) ==
          doctest::Approx(log_jacobian_functional_calculus(m, g)).epsilon(1e-12));
  }
}
