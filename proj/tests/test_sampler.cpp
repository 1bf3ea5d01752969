#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "freeent/errors.hpp"
#include "freeent/sampler.hpp"

using namespace freeent;

namespace {

double simpson(const std::function<double(double)>& f, double a, double b, int m = 4000) {
  const double h = (b - a) / (2 * m);
  double s = f(a) + f(b);
  for (int i = 1; i < 2 * m; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

std::vector<double> block_moment_series(const ChainResult& r, int block, int power) {
  std::vector<double> out;
  for (const auto& s : r.samples) out.push_back(s.spectra[static_cast<std::size_t>(block)].array().pow(power).mean());
  return out;
}

ChainOptions quick(long steps, long burnin) {
  ChainOptions o;
  o.steps = steps;
  o.burnin = burnin;
  return o;
}

}  // namespace

TEST_CASE("GibbsModel validation") {
  CHECK_THROWS_AS(GibbsModel(1, 2, 1.0, NcPoly::parse(1, "i*X1")), InvalidArgument);
  CHECK_THROWS_AS(GibbsModel(2, 2, 1.0, NcPoly::parse(2, "X1*X2")), InvalidArgument);
  CHECK_THROWS_AS(GibbsModel(1, 2, 1.0, NcPoly::parse(1, "X1"), 1.5), InvalidArgument);
  CHECK_THROWS_AS(GibbsModel(1, 2, -1.0, NcPoly(1)), InvalidArgument);
  CHECK(GibbsModel(2, 2, 1.0, NcPoly::parse(2, "X1^2 + X2^4")).separable());
  CHECK_FALSE(GibbsModel(2, 2, 1.0, NcPoly::parse(2, "(X1 - X2)^2")).separable());
}

TEST_CASE("uniform scalar chain: second moment and histogram") {
  CounterRng rng(101);
  const double R = 1.5;
  ChainOptions o = quick(200000, 2000);
  o.thin = 2;
  const ChainResult r = mcmc_chain(GibbsModel::uniform(1, 1, R), o, rng);
  const ScalarEstimate m2 = mean_estimate(block_moment_series(r, 0, 2));
  CHECK(std::abs(m2.value - R * R / 3.0) < 3.0 * m2.std_error);
  CHECK(r.diagnostics.acceptance > 0.2);
  CHECK(r.diagnostics.acceptance < 0.6);
  CHECK(r.diagnostics.effective_samples <= static_cast<double>(r.diagnostics.samples));

  // Chi-square on 20 bins from a thinned, nearly independent subsequence.
  const int bins = 20;
  std::vector<double> counts(bins, 0.0);
  const std::size_t stride = static_cast<std::size_t>(std::ceil(2.0 * r.diagnostics.autocorr_time));
  double total = 0.0;
  for (std::size_t i = 0; i < r.samples.size(); i += stride) {
    const double x = r.samples[i].spectra[0](0);
    const int b = std::min(bins - 1, static_cast<int>((x + R) / (2 * R) * bins));
    counts[static_cast<std::size_t>(b)] += 1.0;
    total += 1.0;
  }
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - total / bins) * (c - total / bins) / (total / bins);
  // 0.999 quantile of chi-square with 19 degrees of freedom.
  CHECK(chi2 < 43.82);
}

TEST_CASE("scalar Gaussian potential gives variance 1/2") {
  CounterRng rng(102);
  const GibbsModel m(1, 1, 6.0, NcPoly::parse(1, "X1^2"));
  const ChainResult r = mcmc_chain(m, quick(100000, 2000), rng);
  const ScalarEstimate m2 = mean_estimate(block_moment_series(r, 0, 2));
  CHECK(std::abs(m2.value - 0.5) < 3.0 * m2.std_error);
}

TEST_CASE("full-matrix kernel agrees with exact uniform-ball draws at N = 2") {
  CounterRng rng(103);
  const int N = 2;
  const double R = 1.0;
  std::vector<double> exact;
  for (int s = 0; s < 40000; ++s) {
    const Matrix m = uniform_ball_matrix(N, R, rng);
    exact.push_back((m * m).trace().real() / N);
  }
  const ScalarEstimate ex = mean_estimate_iid(exact);
  for (Kernel k : {Kernel::Spectral, Kernel::FullMatrix}) {
    ChainOptions o = quick(60000, 2000);
    o.kernel = k;
    const ChainResult r = mcmc_chain(GibbsModel::uniform(1, N, R), o, rng);
    const ScalarEstimate est = mean_estimate(block_moment_series(r, 0, 2));
    CHECK(std::abs(est.value - ex.value) < 3.0 * combine_stderr(est.std_error, ex.std_error));
  }
}

TEST_CASE("spectral and full-matrix kernels agree on a coupled model") {
  CounterRng rng(104);
  const GibbsModel m(2, 3, 1.0, NcPoly::parse(2, "2*(X1 - X2)^2"));
  std::vector<ScalarEstimate> est;
  for (Kernel k : {Kernel::Spectral, Kernel::FullMatrix}) {
    ChainOptions o = quick(k == Kernel::Spectral ? 20000 : 60000, 2000);
    o.kernel = k;
    o.tracked = {NcPoly::parse(2, "0.5*(X1*X2 + X2*X1)")};
    CounterRng r = rng.fork(static_cast<std::uint64_t>(k));
    const ChainResult c = mcmc_chain(m, o, r);
    est.push_back(mean_estimate(tracked_series(c, 0)));
    CHECK(est.back().value > 0.02);  // coupling pulls the blocks together
  }
  CHECK(std::abs(est[0].value - est[1].value) < 3.0 * combine_stderr(est[0].std_error, est[1].std_error));
}

TEST_CASE("emitted samples respect the ball and the tracked values") {
  CounterRng rng(105);
  const GibbsModel m(2, 4, 1.0, NcPoly::parse(2, "X1*X2 + X2*X1"));
  ChainOptions o = quick(300, 100);
  o.store_matrices = true;
  o.tracked = {NcPoly::parse(2, "X1*X2*X1*X2")};
  const ChainResult r = mcmc_chain(m, o, rng);
  REQUIRE(r.samples.size() == 200);
  for (const auto& s : r.samples) {
    REQUIRE(s.tuple);
    for (int b = 0; b < 2; ++b) {
      const Matrix& M = (*s.tuple)[b];
      CHECK((M - M.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(operator_norm(M) <= 1.0 + 1e-9);
    }
    CHECK(std::abs(s.tracked[0] - trace_moment(*s.tuple, Word{1, 2, 1, 2}).real()) < 1e-10);
    CHECK(std::abs(s.trace_potential - m.trace_potential(*s.tuple)) < 1e-8);
  }
}

TEST_CASE("chains are deterministic and warm starts resume") {
  const GibbsModel m(1, 8, 2.0, NcPoly::parse(1, "X1^2"));
  CounterRng a(7), b(7);
  const ChainResult ra = mcmc_chain(m, quick(400, 100), a);
  const ChainResult rb = mcmc_chain(m, quick(400, 100), b);
  CHECK(potential_series(ra) == potential_series(rb));
  CounterRng c(8);
  ChainOptions warm = quick(200, 1);
  warm.tune = false;
  const ChainResult rc = mcmc_chain(m, warm, c, &ra.final_state);
  CHECK(rc.samples.size() == 199);

  std::ostringstream os;
  write_chain_records(os, rc);
  std::istringstream is(os.str());
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  CHECK(lines == 200);
  CHECK_THROWS_AS(mcmc_chain(m, quick(100, 100), c), InvalidArgument);
}

TEST_CASE("log_ball_volume closed form") {
  CHECK(log_ball_volume(1, 2.5) == doctest::Approx(std::log(5.0)).epsilon(1e-15));
  for (int N : {2, 3, 7})
    CHECK(log_ball_volume(N, 2.0) - log_ball_volume(N, 1.0) == doctest::Approx(N * N * std::log(2.0)));
  // N = 2 by hand: M = [[a, b+ic], [b-ic, d]], ||M|| <= 1 is
  // |t| + sqrt(s^2 + b^2 + c^2) <= 1 with t = (a+d)/2, s = (a-d)/2; the
  // volume is 2 * int_{-1}^{1} (4/3) pi (1-|t|)^3 dt = 4 pi / 3.
  CHECK(log_ball_volume(2, 1.0) == doctest::Approx(std::log(4.0 * std::numbers::pi / 3.0)));
}

TEST_CASE("log_ball_volume matches hit-or-miss") {
  for (int N : {1, 2, 3}) {
    CounterRng rng(106 + N);
    const ScalarEstimate e = ball_volume_hit_or_miss(N, 1.5, 200000, rng);
    CAPTURE(N);
    CHECK(std::abs(e.value - log_ball_volume(N, 1.5)) <= 3.0 * e.std_error + 1e-12);
  }
  CounterRng rng(1);
  CHECK_THROWS_AS(ball_volume_hit_or_miss(2, -1.0, 10, rng), InvalidArgument);
}

TEST_CASE("estimate_log_I against scalar closed forms") {
  const ChainOptions o = quick(20000, 1000);
  {
    CounterRng rng(107);
    const GibbsModel m = GibbsModel::uniform(2, 3, 1.5);
    const LogIEstimate e = estimate_log_I(m, uniform_beta_grid(1.0), o, rng);
    CHECK(e.value == doctest::Approx(2 * log_ball_volume(3, 1.5)));
    CHECK(e.std_error == 0.0);
  }
  {
    CounterRng rng(108);
    const GibbsModel m(1, 1, 1.0, NcPoly::parse(1, "X1"));
    const LogIEstimate e = estimate_log_I(m, uniform_beta_grid(1.0), o, rng);
    const double exact = std::log(2.0 * std::sinh(1.0));
    CHECK(std::abs(e.value - exact) < 3.0 * e.std_error + e.discretization_bound);
    CHECK(e.std_error > 0.0);
  }
  {
    CounterRng rng(109);
    const GibbsModel m(1, 1, 1.0, NcPoly::parse(1, "X1^2"));
    const LogIEstimate e = estimate_log_I(m, uniform_beta_grid(1.0), o, rng);
    const double exact = std::log(simpson([](double x) { return std::exp(-x * x); }, -1.0, 1.0));
    CHECK(std::abs(e.value - exact) < 3.0 * e.std_error + e.discretization_bound);
  }
  CounterRng rng(110);
  const GibbsModel m(1, 1, 1.0, NcPoly::parse(1, "X1"));
  CHECK_THROWS_AS(estimate_log_I(m, {0.0, 0.5}, o, rng), InvalidArgument);
}

TEST_CASE("estimate_log_I is nonincreasing in beta for a nonnegative potential") {
  CounterRng rng(111);
  const GibbsModel m(1, 4, 1.0, NcPoly::parse(1, "X1^2"));
  const ChainOptions o = quick(4000, 500);
  double prev = 1e300;
  for (double beta : {0.25, 0.5, 1.0}) {
    CounterRng r = rng.fork(static_cast<std::uint64_t>(beta * 100));
    const LogIEstimate e = estimate_log_I(m.with_beta(beta), uniform_beta_grid(beta, 11), o, r);
    CHECK(e.value <= prev + 3.0 * e.std_error);
    prev = e.value;
  }
}

TEST_CASE("gibbs_entropy") {
  const ChainOptions o = quick(30000, 1000);
  {
    CounterRng rng(112);
    const GibbsModel m = GibbsModel::uniform(1, 3, 2.0);
    const ChainResult c = mcmc_chain(m, o, rng);
    const LogIEstimate li = estimate_log_I(m, uniform_beta_grid(1.0), o, rng);
    CHECK(gibbs_entropy(m, li.estimate(), c).value == doctest::Approx(log_ball_volume(3, 2.0)));
  }
  {
    CounterRng rng(113);
    const GibbsModel m(1, 1, 1.0, NcPoly::parse(1, "X1"));
    const ChainResult c = mcmc_chain(m, o, rng);
    const LogIEstimate li = estimate_log_I(m, uniform_beta_grid(1.0), o, rng);
    const ScalarEstimate ent = gibbs_entropy(m, li.estimate(), c);
    const double Z = 2.0 * std::sinh(1.0);
    const double exact = -simpson([Z](double x) {
      const double f = std::exp(-x) / Z;
      return f * std::log(f);
    }, -1.0, 1.0);
    CHECK(std::abs(ent.value - exact) < 3.0 * ent.std_error + li.discretization_bound);
    CHECK(ent.value <= std::log(2.0) + 3.0 * ent.std_error);
  }
}

TEST_CASE("microstate_hit_rate") {
  {
    CounterRng rng(114);
    const MomentSpec tau = arcsine_moments(1.0, 2);
    const HitRateEstimate h = microstate_hit_rate(tau, 3.0, 2, 2, 2000, rng);
    REQUIRE(h.log_volume);
    CHECK(h.hits == h.samples);
    CHECK(h.log_volume->value == doctest::Approx(log_ball_volume(2, 1.0)));
  }
  {
    CounterRng rng(115);
    MomentSpec tau(1, 1, 1.0);
    tau.set(Word{}, 1.0);
    tau.set(Word{1}, 0.0);
    const HitRateEstimate h = microstate_hit_rate(tau, 0.1, 1, 1, 100000, rng);
    REQUIRE(h.log_volume);
    CHECK(std::abs(h.log_volume->value - (std::log(2.0) + std::log(0.1))) < 3.0 * h.log_volume->std_error);
    CounterRng rng2(116);
    const HitRateEstimate wider = microstate_hit_rate(tau, 0.2, 1, 1, 100000, rng2);
    CHECK(wider.log_volume->value >=
          h.log_volume->value - 3.0 * combine_stderr(h.log_volume->std_error, wider.log_volume->std_error));
  }
  {
    CounterRng rng(117);
    MomentSpec tau(1, 1, 1.0);
    tau.set(Word{}, 1.0);
    tau.set(Word{1}, 0.999);
    const HitRateEstimate h = microstate_hit_rate(tau, 1e-6, 1, 4, 200, rng);
    CHECK(h.hits == 0);
    CHECK_FALSE(h.log_volume);
  }
}

TEST_CASE("uniform_ball_matrix stays in the ball") {
  CounterRng rng(118);
  for (int N = 1; N <= 3; ++N)
    for (int s = 0; s < 200; ++s) CHECK(operator_norm(uniform_ball_matrix(N, 0.7, rng)) <= 0.7 + 1e-12);
  CHECK_THROWS_AS(uniform_ball_matrix(4, 1.0, rng), InvalidArgument);
}
