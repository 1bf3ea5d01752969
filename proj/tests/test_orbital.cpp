#include <doctest.h>

#include <cmath>

#include "freeent/errors.hpp"
#include "freeent/orbital.hpp"
#include "freeent/reference.hpp"

using namespace freeent;

namespace {

GibbsModel coupled(int N, double c, double R = 2.0) {
  return {2, N, R, NcPoly::parse(2, "(X1 - X2)^2") * cdouble(c)};
}

GibbsModel decoupled(int N, double R = 2.0) { return {2, N, R, NcPoly::parse(2, "X1^2 + X2^4 - X2")}; }

ChainOptions outer_chain(long thin = 5) {
  ChainOptions co;
  co.burnin = 500;
  co.thin = thin;
  return co;
}

OrbitalRequest request(const GibbsModel& m, const BlockMap& pi, int S_out, int S_in, InnerMethod inner) {
  OrbitalRequest r{m, pi, S_out, S_in, outer_chain(), {}, 1, inner};
  return r;
}

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace

TEST_CASE("log_hciz against direct Haar averages") {
  CHECK(log_hciz(vec({0.5}), vec({-2.0}), 3.0) == doctest::Approx(-3.0));
  CHECK(log_hciz(vec({0.1, 0.4}), vec({-1.0, 1.0}), 0.0) == 0.0);
  CounterRng rng(31);
  for (int N : {2, 3}) {
    const Matrix A = gaussian_hermitian(N, rng), B = gaussian_hermitian(N, rng);
    const Eigen::VectorXd a = hermitian_eigenvalues(A), b = hermitian_eigenvalues(B);
    for (double t : {-2.0, 0.7}) {
      std::vector<double> w;
      for (int s = 0; s < 100000; ++s) {
        const Matrix U = haar_unitary(N, rng);
        w.push_back(std::exp(t * (A * U * B * U.adjoint()).trace().real()));
      }
      const ScalarEstimate m = mean_estimate_iid(w);
      CHECK(std::abs(std::exp(log_hciz(a, b, t)) - m.value) < 4.0 * m.std_error);
      CHECK(log_hciz(b, a, t) == doctest::Approx(log_hciz(a, b, t)).epsilon(1e-9));
    }
  }
}

TEST_CASE("log_hciz series and determinant forms agree") {
  CounterRng rng(32);
  for (int N : {4, 8}) {
    Matrix A = gaussian_hermitian(N, rng), B = gaussian_hermitian(N, rng);
    A *= 2.0 / operator_norm(A);
    B *= 2.0 / operator_norm(B);
    const Eigen::VectorXd a = hermitian_eigenvalues(A), b = hermitian_eigenvalues(B);
    const double saved = kHcizSeriesLimit;
    for (double t : {-1.5, -0.8, 1.2}) {
      kHcizSeriesLimit = 1e9;
      const double series = log_hciz(a, b, t);
      kHcizSeriesLimit = 0.0;
      const double direct = log_hciz(a, b, t);
      CHECK(series == doctest::Approx(direct).epsilon(1e-8));
    }
    kHcizSeriesLimit = saved;
    // First order in t: t Tr A Tr B / N.
    const double t = 1e-5;
    CHECK(log_hciz(a, b, t) == doctest::Approx(t * a.sum() * b.sum() / N).epsilon(1e-3));
  }
  kHcizSeriesLimit = 0.0;
  CHECK_THROWS_AS(log_hciz(vec({0.5, 0.5}), vec({-1.0, 1.0}), 4.0), InvalidArgument);
  kHcizSeriesLimit = 6.0;
}

TEST_CASE("exact inner availability") {
  CHECK(exact_inner_available(coupled(4, 1.0), BlockMap::full(2)));
  CHECK_FALSE(exact_inner_available(coupled(4, 1.0), BlockMap::global(2)));
  CHECK_FALSE(exact_inner_available(GibbsModel(2, 4, 1.0, NcPoly::parse(2, "X1*X2*X1*X2 + X2*X1*X2*X1")),
                                    BlockMap::full(2)));
  CHECK_THROWS_AS(orbital_entropy(request(coupled(4, 1.0), BlockMap::global(2), 32, 32, InnerMethod::Exact),
                                  *std::make_unique<CounterRng>(1)),
                  InvalidArgument);
}

TEST_CASE("orbital entropy vanishes for decoupled models") {
  for (InnerMethod m : {InnerMethod::MonteCarlo, InnerMethod::Exact}) {
    CounterRng rng(33);
    const OrbitalEstimate e = orbital_entropy(request(decoupled(6), BlockMap::full(2), 200, 64, m), rng);
    CHECK(std::abs(e.value) <= 3.0 * e.std_error + 1e-9);
  }
  // Global conjugation leaves every model invariant.
  CounterRng rng(34);
  const OrbitalEstimate g = orbital_entropy(request(coupled(4, 1.0), BlockMap::global(2), 100, 32, InnerMethod::Auto), rng);
  CHECK(std::abs(g.value) < 1e-8);
}

TEST_CASE("orbital entropy is negative for a coupled model and ordered in the coupling") {
  std::vector<OrbitalEstimate> est;
  for (double c : {0.25, 0.5, 1.0}) {
    CounterRng rng(35);
    est.push_back(orbital_entropy(request(coupled(6, c), BlockMap::full(2), 300, 64, InnerMethod::Auto), rng));
  }
  for (const auto& e : est) {
    CHECK(e.exact_inner);
    CHECK(e.value < -3.0 * e.std_error);
  }
  CHECK(est[0].value >= est[2].value - 3.0 * combine_stderr(est[0].std_error, est[2].std_error));
}

TEST_CASE("nested Monte Carlo inner average converges to the exact one at small N") {
  const GibbsModel m = coupled(2, 0.5, 1.0);
  CounterRng r1(36), r2(36);
  const OrbitalEstimate mc = orbital_entropy(request(m, BlockMap::full(2), 300, 512, InnerMethod::MonteCarlo), r1);
  const OrbitalEstimate ex = orbital_entropy(request(m, BlockMap::full(2), 300, 512, InnerMethod::Exact), r2);
  // Same outer samples; the difference is the inner error alone.
  CHECK(std::abs(mc.value - ex.value) <= mc.bias_bound + 0.02);
  CHECK(mc.doubling_consistent);
  CHECK(mc.bias_bound > 0.0);
  CHECK(mc.value <= 3.0 * mc.std_error);
}

TEST_CASE("stderr shrinks with the outer sample count") {
  CounterRng r1(37), r2(38);
  const GibbsModel m = coupled(4, 0.5);
  const OrbitalEstimate a = orbital_entropy(request(m, BlockMap::full(2), 1000, 16, InnerMethod::Exact), r1);
  const OrbitalEstimate b = orbital_entropy(request(m, BlockMap::full(2), 2000, 16, InnerMethod::Exact), r2);
  const double ratio = b.std_error / a.std_error;
  CHECK(ratio > 0.7071 * 0.8);
  CHECK(ratio < 0.7071 * 1.2);
}

TEST_CASE("dropping a matrix from each block does not decrease orbital entropy") {
  // Blocks {X1, X2} and {X3, X4}; the marginal keeps X1 and X3.
  const GibbsModel m(4, 2, 1.0, NcPoly::parse(4, "(X1 - X3)^2 + (X2 - X4)^2 + X1*X2 + X2*X1"));
  const BlockMap pi = BlockMap::from_groups({1, 1, 2, 2});
  CounterRng r1(39), r2(40);
  OrbitalRequest full = request(m, pi, 300, 128, InnerMethod::Auto);
  const OrbitalEstimate f = orbital_entropy(full, r1);
  OrbitalRequest marg = full;
  marg.keep = {true, false, true, false};
  const OrbitalEstimate g = orbital_entropy(marg, r2);
  CHECK(f.value < 0.0);
  CHECK(g.value >= f.value - 3.0 * combine_stderr(f.std_error, g.std_error) - g.bias_bound);
  marg.keep = {false, false, false, false};
  CHECK_THROWS_AS(orbital_entropy(marg, r2), InvalidArgument);
}

TEST_CASE("orbital subadditivity over block groupings") {
  const GibbsModel m(3, 2, 1.0, NcPoly::parse(3, "(X1 - X2)^2 + (X2 - X3)^2"));
  CounterRng r1(41), r2(42), r3(43);
  const OrbitalEstimate all = orbital_entropy(request(m, BlockMap::full(3), 300, 128, InnerMethod::Auto), r1);
  const OrbitalEstimate split =
      orbital_entropy(request(m, BlockMap::from_groups({1, 2, 2}), 300, 128, InnerMethod::Auto), r2);
  OrbitalRequest pair = request(m, BlockMap::full(3), 300, 128, InnerMethod::Auto);
  pair.keep = {false, true, true};
  const OrbitalEstimate inner = orbital_entropy(pair, r3);
  const double se = std::sqrt(all.std_error * all.std_error + split.std_error * split.std_error +
                              inner.std_error * inner.std_error);
  CHECK(all.value <= split.value + inner.value + 3.0 * se + inner.bias_bound);
}

TEST_CASE("chain rule and entropy split") {
  ChainRuleBudget b;
  b.S_out = 300;
  b.S_in = 64;
  b.chain = outer_chain();
  b.ti_chain.steps = 3000;
  b.ti_chain.burnin = 300;
  b.ti_nodes = 11;

  CounterRng r0(44);
  const ChainRuleReport zero = chain_rule_check(GibbsModel::uniform(2, 3, 1.0), BlockMap::full(2), b, r0);
  CHECK(zero.joint.value == doctest::Approx(0.0));
  CHECK(zero.orbital.value == doctest::Approx(0.0));
  CHECK(zero.averaged.value == doctest::Approx(0.0));

  CounterRng r1(45);
  const ChainRuleReport c = chain_rule_check(coupled(4, 0.5), BlockMap::full(2), b, r1);
  CHECK(c.exact_inner);
  CHECK(c.holds());
  CHECK(c.averaged.value <= 3.0 * c.averaged.std_error);

  CounterRng r2(46);
  const ChainRuleReport d = chain_rule_check(decoupled(4), BlockMap::full(2), b, r2);
  CHECK(std::abs(d.orbital.value) <= 3.0 * d.orbital.std_error + 1e-9);
  CHECK(std::abs(d.joint.value - d.averaged.value) <= 3.0 * d.residual_stderr + 1e-9);

  ChainRuleBudget mc = b;
  mc.inner = InnerMethod::MonteCarlo;
  CounterRng r3(47);
  const ChainRuleReport cm = chain_rule_check(coupled(3, 0.5), BlockMap::full(2), mc, r3);
  CHECK_FALSE(cm.exact_inner);
  CHECK(cm.holds());

  CounterRng r4(48);
  const EntropySplitReport s = entropy_split_check(coupled(4, 0.5), b, r4);
  CHECK(s.holds());
  CHECK(s.averaged_entropy.value >=
        s.entropy.value - 3.0 * combine_stderr(s.averaged_entropy.std_error, s.entropy.std_error));
}

TEST_CASE("entropy is subadditive over the two coordinates at N = 1") {
  CounterRng rng(49);
  for (int trial = 0; trial < 5; ++trial) {
    const double k = rng.uniform(-2.0, 2.0), a = rng.uniform(0.0, 2.0);
    const double R = 1.0;
    const int M = 300;
    const Eigen::MatrixXd p = gibbs_grid_2d([&](double x, double y) { return a * (x - y) * (x - y) + k * x * y; }, R, M);
    const double h = 2.0 * R / M;
    auto ent = [](const Eigen::ArrayXXd& q, double cell) {
      double e = 0.0;
      for (Eigen::Index i = 0; i < q.size(); ++i)
        if (q(i) > 0.0) e -= q(i) * std::log(q(i) / cell);
      return e;
    };
    const double joint = ent(p.array(), h * h);
    const double m1 = ent(p.rowwise().sum().array(), h);
    const double m2 = ent(p.colwise().sum().transpose().array(), h);
    CHECK(joint <= m1 + m2 + 1e-12);
  }
}

TEST_CASE("Wasserstein bounds") {
  CounterRng rng(50);
  const GibbsModel m = coupled(4, 1.0);
  ChainOptions co = outer_chain();
  co.steps = co.burnin + 200 * co.thin;
  co.store_matrices = true;
  const ChainResult chain = mcmc_chain(m, co, rng);

  std::vector<std::pair<MatrixTuple, MatrixTuple>> same, conj, single;
  std::vector<MatrixTuple> mu, umu;
  for (const auto& s : chain.samples) {
    const MatrixTuple& t = *s.tuple;
    same.emplace_back(t, t);
    const std::vector<Matrix> us{haar_unitary(4, rng), haar_unitary(4, rng)};
    const MatrixTuple c = conjugate_tuple(t, us, BlockMap::full(2));
    conj.emplace_back(t, c);
    mu.push_back(t);
    umu.push_back(c);
    const MatrixTuple one = MatrixTuple::unchecked({t[0]}, t.R());
    const std::vector<Matrix> u1{us[0]};
    single.emplace_back(one, conjugate_tuple(one, u1, BlockMap::full(1)));
  }
  CHECK(dW_upper_bound(same).value == 0.0);
  const ScalarEstimate ub = dW_upper_bound(conj);
  CHECK(ub.value <= 2.0 * m.R() * std::sqrt(2.0));
  // One block: the laws agree, the coupling bound does not see it.
  CHECK(dW_upper_bound(single).value > 0.1);

  const MomentEstimate a = average_moments(mu, 4), b = average_moments(umu, 4);
  CHECK(dW_moment_lower_bound(a.mean, a.mean, 4, m.R()) == 0.0);
  const double lb = dW_moment_lower_bound(a.mean, b.mean, 4, m.R());
  CHECK(lb > 0.0);
  CHECK(lb <= ub.value + 3.0 * ub.std_error);

  MomentSpec x(1, 1, 1.0), y(1, 1, 1.0);
  x.set(Word{}, 1.0);
  y.set(Word{}, 1.0);
  x.set(Word{1}, 0.3);
  y.set(Word{1}, -0.1);
  CHECK(dW_moment_lower_bound(x, y, 1, 1.0) == doctest::Approx(0.4));
  CHECK_THROWS_AS(dW_moment_lower_bound(x, y, 2, 1.0), InvalidArgument);
}

TEST_CASE("Talagrand report") {
  TalagrandBudget b;
  b.S_out = 300;
  b.S_in = 64;
  b.chain = outer_chain();
  CounterRng r1(51);
  const TalagrandReport d = talagrand_report(decoupled(6), BlockMap::full(2), b, r1);
  CHECK(d.holds());
  CHECK(d.lhs_randomized < 0.05);
  CounterRng r2(52);
  const TalagrandReport c = talagrand_report(coupled(6, 1.0), BlockMap::full(2), b, r2);
  CHECK(c.holds());
  CHECK(c.lhs_free_product > 0.05);
  CHECK(c.slack > 0.0);
  b.K = 7;
  CHECK_THROWS_AS(talagrand_report(coupled(6, 1.0), BlockMap::full(2), b, r2), InvalidArgument);
}

TEST_CASE("randomized samples approach the free product as N grows") {
  std::vector<double> gaps;
  for (int N : {8, 16, 32}) {
    CounterRng rng(53);
    gaps.push_back(freeness_gap(coupled(N, 1.0), BlockMap::full(2), 4, 400, outer_chain(), rng));
  }
  CHECK(gaps[1] < gaps[0]);
  CHECK(gaps[2] < gaps[1]);
}
