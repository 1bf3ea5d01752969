#include "freeent/orbital.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "freeent/errors.hpp"
#include "freeent/parallel.hpp"

namespace freeent {

namespace {

double energy(const GibbsModel& m, const MatrixTuple& t) { return -m.beta() * m.N() * m.trace_potential(t); }

std::vector<Matrix> haar_set(int groups, int N, CounterRng& rng) {
  std::vector<Matrix> us;
  us.reserve(static_cast<std::size_t>(groups));
  for (int g = 0; g < groups; ++g) us.push_back(haar_unitary(N, rng));
  return us;
}

struct OuterDraw {
  std::vector<MatrixTuple> tuples;
  ChainDiagnostics diagnostics;
};

OuterDraw draw_outer(const GibbsModel& model, ChainOptions opts, int count, CounterRng& rng) {
  opts.thin = std::max(1L, opts.thin);
  opts.steps = opts.burnin + static_cast<long>(count) * opts.thin;
  opts.store_matrices = true;
  opts.tracked.clear();
  ChainResult r = mcmc_chain(model, opts, rng);
  OuterDraw d;
  d.diagnostics = r.diagnostics;
  for (auto& s : r.samples) d.tuples.push_back(std::move(*s.tuple));
  if (static_cast<int>(d.tuples.size()) > count) d.tuples.erase(d.tuples.begin() + count, d.tuples.end());
  return d;
}

void check_lme(const JackknifeLme& j) {
  if (!std::isfinite(j.raw))
    throw EstimatorFailure("orbital: every inner weight underflowed; increase S_in or reduce the coupling");
}

struct InnerResult {
  double log_ratio = 0.0;
  double half_log_ratio = 0.0;
  double bias = 0.0;
  double half_bias = 0.0;
};

// Sum of the X1X2 and X2X1 coefficients; Tr of the mixed part is this
// times Tr(X1 X2).
double bilinear_coupling(const NcPoly& V) {
  cdouble k = 0.0;
  for (const auto& [w, c] : V.terms()) {
    bool has1 = false, has2 = false;
    for (int l : w.letters) (l == 1 ? has1 : has2) = true;
    if (has1 && has2) k += c;
  }
  return k.real();
}

bool use_exact(InnerMethod m, const GibbsModel& model, const BlockMap& pi) {
  const bool avail = exact_inner_available(model, pi);
  if (m == InnerMethod::Exact && !avail)
    throw InvalidArgument("orbital: exact inner integral needs two separately conjugated blocks coupled only through X1X2");
  return m != InnerMethod::MonteCarlo && avail;
}

// log E_U exp(-beta N Tr V(U^pi M)) - (separable part), via HCIZ.
double exact_log_inner(const GibbsModel& model, const MatrixTuple& M, double kappa) {
  const double t = -model.beta() * model.N() * kappa;
  return log_hciz(hermitian_eigenvalues(M[0]), hermitian_eigenvalues(M[1]), t);
}

double cross_energy(const GibbsModel& model, const MatrixTuple& M, double kappa) {
  return -model.beta() * model.N() * kappa * (M[0] * M[1]).trace().real();
}

}  // namespace

namespace {

using LD = long double;
using LDMatrix = Eigen::Matrix<LD, Eigen::Dynamic, Eigen::Dynamic>;

// Small |t|: with Newton divided differences on both sides the determinant
// loses its t^{N(N-1)/2} factor analytically. Entry (k, l) is
// sum_m t^{m-k}/m! h_{m-k}(a_0..a_k) h_{m-l}(b_0..b_l).
double log_hciz_series(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double t) {
  const Eigen::Index N = a.size();
  const int M = 80 + static_cast<int>(N);
  auto complete_h = [&](const Eigen::VectorXd& x) {
    LDMatrix h = LDMatrix::Zero(N, M + 1);
    for (Eigen::Index k = 0; k < N; ++k) {
      h(k, 0) = 1.0L;
      for (int j = 1; j <= M; ++j) h(k, j) = (k > 0 ? h(k - 1, j) : 0.0L) + static_cast<LD>(x(k)) * h(k, j - 1);
    }
    return h;
  };
  const LDMatrix ha = complete_h(a), hb = complete_h(b);
  LDMatrix D = LDMatrix::Zero(N, N);
  for (Eigen::Index k = 0; k < N; ++k)
    for (Eigen::Index l = 0; l < N; ++l) {
      LD acc = 0.0L;
      const Eigen::Index m0 = std::max(k, l);
      // t^{m-k}/m!, built incrementally from m = m0.
      LD c = std::pow(static_cast<LD>(t), static_cast<LD>(m0 - k)) / std::tgamma(static_cast<LD>(m0 + 1));
      for (Eigen::Index m = m0; m <= M; ++m) {
        acc += c * ha(k, m - k) * hb(l, m - l);
        c *= static_cast<LD>(t) / static_cast<LD>(m + 1);
      }
      D(k, l) = acc;
    }
  const LD det = D.fullPivLu().determinant();
  if (!(det > 0.0L)) throw EstimatorFailure("log_hciz: series determinant is not positive");
  LD logc = 0.0L;
  for (Eigen::Index p = 1; p < N; ++p) logc += std::lgamma(static_cast<LD>(p + 1));
  return static_cast<double>(logc + std::log(det));
}

}  // namespace

double log_hciz(const Eigen::VectorXd& a_in, const Eigen::VectorXd& b_in, double t) {
  const Eigen::Index N = a_in.size();
  if (b_in.size() != N || N == 0) throw InvalidArgument("log_hciz: spectra must have the same positive length");
  if (t == 0.0) return 0.0;
  if (N == 1) return t * a_in(0) * b_in(0);
  Eigen::VectorXd a = a_in, b = b_in;
  std::sort(a.data(), a.data() + N);
  std::sort(b.data(), b.data() + N);
  if (std::abs(t) * a.cwiseAbs().maxCoeff() * b.cwiseAbs().maxCoeff() <= kHcizSeriesLimit) return log_hciz_series(a, b, t);
  for (Eigen::Index i = 0; i + 1 < N; ++i)
    if (a(i + 1) == a(i) || b(i + 1) == b(i)) throw InvalidArgument("log_hciz: repeated eigenvalues");
  LDMatrix E(N, N);
  LD shift = 0.0L;
  for (Eigen::Index i = 0; i < N; ++i) {
    LD mx = -std::numeric_limits<LD>::infinity();
    for (Eigen::Index j = 0; j < N; ++j) mx = std::max(mx, static_cast<LD>(t) * a(i) * b(j));
    for (Eigen::Index j = 0; j < N; ++j) E(i, j) = std::exp(static_cast<LD>(t) * a(i) * b(j) - mx);
    shift += mx;
  }
  const Eigen::FullPivLU<LDMatrix> lu(E);
  const auto& U = lu.matrixLU();
  LD logdet = shift;
  int sign = (lu.permutationP().determinant() * lu.permutationQ().determinant() > 0) ? 1 : -1;
  for (Eigen::Index k = 0; k < N; ++k) {
    const LD u = U(k, k);
    if (u == 0.0L) throw EstimatorFailure("log_hciz: singular determinant");
    if (u < 0) sign = -sign;
    logdet += std::log(std::abs(u));
  }
  LD logden = 0.0L;
  int dsign = 1;
  const long m = static_cast<long>(N) * (N - 1) / 2;
  logden += static_cast<LD>(m) * std::log(std::abs(static_cast<LD>(t)));
  if (t < 0 && m % 2) dsign = -dsign;
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = i + 1; j < N; ++j) {
      const LD da = static_cast<LD>(a(j)) - a(i), db = static_cast<LD>(b(j)) - b(i);
      if (da < 0) dsign = -dsign;
      if (db < 0) dsign = -dsign;
      logden += std::log(std::abs(da)) + std::log(std::abs(db));
    }
  if (sign != dsign) throw EstimatorFailure("log_hciz: determinant sign lost to rounding");
  LD logc = 0.0L;
  for (long p = 1; p < N; ++p) logc += std::lgamma(static_cast<LD>(p + 1));
  return static_cast<double>(logc + logdet - logden);
}

bool exact_inner_available(const GibbsModel& model, const BlockMap& pi) {
  if (model.n() != 2 || pi.blocks() != 2 || pi.groups() != 2) return false;
  for (const auto& [w, c] : model.V().terms()) {
    bool has1 = false, has2 = false;
    for (int l : w.letters) (l == 1 ? has1 : has2) = true;
    if (has1 && has2 && w.degree() != 2) return false;
  }
  return true;
}

OrbitalEstimate orbital_entropy(const OrbitalRequest& req, CounterRng& rng) {
  const GibbsModel& model = req.model;
  const int n = model.n(), N = model.N();
  if (req.S_out < 16 || req.S_in < 16) throw InvalidArgument("orbital_entropy: S_out and S_in must be >= 16");
  if (req.pi.blocks() != n) throw InvalidArgument("orbital_entropy: block map does not match the model");
  const bool marginal = !req.keep.empty() && std::find(req.keep.begin(), req.keep.end(), false) != req.keep.end();
  if (!req.keep.empty()) {
    if (static_cast<int>(req.keep.size()) != n) throw InvalidArgument("orbital_entropy: keep mask size");
    if (std::find(req.keep.begin(), req.keep.end(), true) == req.keep.end())
      throw InvalidArgument("orbital_entropy: keep mask drops every generator");
    if (marginal && N > 3) throw InvalidArgument("orbital_entropy: marginal estimates need N <= 3");
  }

  if (marginal && req.inner == InnerMethod::Exact)
    throw InvalidArgument("orbital_entropy: marginal estimates use the Monte Carlo inner average");
  const bool exact = !marginal && use_exact(req.inner, model, req.pi);

  CounterRng chain_rng = rng.fork(0);
  const OuterDraw outer = draw_outer(model, req.chain, req.S_out, chain_rng);
  const auto S = static_cast<long>(outer.tuples.size());
  const int half = req.S_in / 2;

  if (exact) {
    const double kappa = bilinear_coupling(model.V());
    std::vector<double> l(static_cast<std::size_t>(S));
    parallel_for(S, req.threads, [&](long i) {
      const MatrixTuple& M = outer.tuples[static_cast<std::size_t>(i)];
      l[static_cast<std::size_t>(i)] = exact_log_inner(model, M, kappa) - cross_energy(model, M, kappa);
    });
    const ScalarEstimate full = mean_estimate(l);
    OrbitalEstimate est;
    est.value = full.value;
    est.std_error = full.std_error;
    est.half_inner_value = full.value;
    est.S_out = static_cast<int>(S);
    est.S_in = 0;
    est.exact_inner = true;
    est.diagnostics = outer.diagnostics;
    return est;
  }
  std::vector<InnerResult> inner(static_cast<std::size_t>(S));

  parallel_for(S, req.threads, [&](long i) {
    CounterRng r = rng.fork(1000 + static_cast<std::uint64_t>(i));
    const MatrixTuple& M = outer.tuples[static_cast<std::size_t>(i)];
    std::vector<double> num, den;
    den.reserve(static_cast<std::size_t>(req.S_in));
    for (int s = 0; s < req.S_in; ++s) {
      const std::vector<Matrix> us = haar_set(req.pi.groups(), N, r);
      if (!marginal) {
        den.push_back(energy(model, conjugate_tuple(M, us, req.pi)));
        continue;
      }
      // Dropped generators are replaced by fresh uniform-ball draws, once
      // next to the original kept blocks and once next to conjugated ones.
      const MatrixTuple C = conjugate_tuple(M, us, req.pi);
      std::vector<Matrix> a, b;
      for (int j = 0; j < n; ++j) {
        if (req.keep[static_cast<std::size_t>(j)]) {
          a.push_back(M[j]);
          b.push_back(C[j]);
        } else {
          a.push_back(uniform_ball_matrix(N, model.R(), r));
          b.push_back(uniform_ball_matrix(N, model.R(), r));
        }
      }
      num.push_back(energy(model, MatrixTuple::unchecked(std::move(a), model.R())));
      den.push_back(energy(model, MatrixTuple::unchecked(std::move(b), model.R())));
    }
    const std::span<const double> dall(den), dhalf(den.data(), static_cast<std::size_t>(half));
    const JackknifeLme jd = jackknife_log_mean_exp(dall), jdh = jackknife_log_mean_exp(dhalf);
    check_lme(jd);
    check_lme(jdh);
    InnerResult& out = inner[static_cast<std::size_t>(i)];
    if (!marginal) {
      const double e0 = energy(model, M);
      out.log_ratio = e0 - jd.corrected;
      out.half_log_ratio = e0 - jdh.corrected;
      out.bias = std::abs(jd.bias);
      out.half_bias = std::abs(jdh.bias);
    } else {
      const std::span<const double> nall(num), nhalf(num.data(), static_cast<std::size_t>(half));
      const JackknifeLme jn = jackknife_log_mean_exp(nall), jnh = jackknife_log_mean_exp(nhalf);
      check_lme(jn);
      check_lme(jnh);
      out.log_ratio = jn.corrected - jd.corrected;
      out.half_log_ratio = jnh.corrected - jdh.corrected;
      out.bias = std::abs(jn.bias) + std::abs(jd.bias);
      out.half_bias = std::abs(jnh.bias) + std::abs(jdh.bias);
    }
  });

  std::vector<double> l, lh, diff;
  double bias = 0.0, half_bias = 0.0;
  for (const auto& x : inner) {
    l.push_back(-x.log_ratio);
    lh.push_back(-x.half_log_ratio);
    diff.push_back(x.half_log_ratio - x.log_ratio);
    bias += x.bias;
    half_bias += x.half_bias;
  }
  const ScalarEstimate full = mean_estimate(l);
  const ScalarEstimate halfe = mean_estimate(lh);
  const ScalarEstimate d = mean_estimate(diff);

  OrbitalEstimate est;
  est.value = full.value;
  est.std_error = full.std_error;
  est.bias_bound = bias / static_cast<double>(S);
  est.half_inner_value = halfe.value;
  est.doubling_consistent =
      std::abs(est.value - est.half_inner_value) <= half_bias / static_cast<double>(S) + 3.0 * d.std_error;
  est.S_out = static_cast<int>(S);
  est.S_in = req.S_in;
  est.diagnostics = outer.diagnostics;
  return est;
}

ChainRuleReport chain_rule_check(const GibbsModel& model, const BlockMap& pi, const ChainRuleBudget& budget,
                                 CounterRng& rng) {
  const int N = model.N();
  ChainRuleReport rep;
  rep.log_volume = model.n() * log_ball_volume(N, model.R());

  CounterRng ti_rng = rng.fork(1);
  rep.logI = estimate_log_I(model, uniform_beta_grid(model.beta(), budget.ti_nodes), budget.ti_chain, ti_rng,
                            budget.threads)
                 .estimate();

  CounterRng a_rng = rng.fork(2);
  ChainOptions co = budget.chain;
  co.tracked.clear();
  co.steps = co.burnin + static_cast<long>(budget.S_out) * std::max(1L, co.thin);
  const ChainResult a_chain = mcmc_chain(model, co, a_rng);
  const ScalarEstimate trv = mean_estimate(potential_series(a_chain));
  const double bn = model.beta() * N;
  rep.joint = make_estimate(rep.logI.value + bn * trv.value - rep.log_volume,
                            combine_stderr(rep.logI.std_error, bn * trv.std_error), trv.count);

  CounterRng b_rng = rng.fork(3);
  OrbitalRequest req{model, pi, budget.S_out, budget.S_in, budget.chain, {}, budget.threads, budget.inner};
  const OrbitalEstimate b = orbital_entropy(req, b_rng);
  rep.orbital = b.estimate();
  rep.exact_inner = b.exact_inner;
  const double kappa = rep.exact_inner ? bilinear_coupling(model.V()) : 0.0;

  // Ent(U^pi mu | nu) = log I - n log Vol - E_{U^pi mu}[log E_U exp(-beta N Tr V(U M))].
  CounterRng c_rng = rng.fork(4);
  const OuterDraw outer = draw_outer(model, budget.chain, budget.S_out, c_rng);
  const auto S = static_cast<long>(outer.tuples.size());
  std::vector<double> lme(static_cast<std::size_t>(S)), cbias(static_cast<std::size_t>(S));
  parallel_for(S, budget.threads, [&](long i) {
    CounterRng r = rng.fork(100000 + static_cast<std::uint64_t>(i));
    const MatrixTuple Mp = conjugate_tuple(outer.tuples[static_cast<std::size_t>(i)], haar_set(pi.groups(), N, r), pi);
    if (rep.exact_inner) {
      // The separable part of the energy is conjugation invariant.
      const double sep = energy(model, Mp) - cross_energy(model, Mp, kappa);
      lme[static_cast<std::size_t>(i)] = sep + exact_log_inner(model, Mp, kappa);
      return;
    }
    std::vector<double> e;
    e.reserve(static_cast<std::size_t>(budget.S_in));
    for (int s = 0; s < budget.S_in; ++s) e.push_back(energy(model, conjugate_tuple(Mp, haar_set(pi.groups(), N, r), pi)));
    const JackknifeLme j = jackknife_log_mean_exp(e);
    check_lme(j);
    lme[static_cast<std::size_t>(i)] = j.corrected;
    cbias[static_cast<std::size_t>(i)] = std::abs(j.bias);
  });
  const ScalarEstimate c = mean_estimate(lme);
  rep.averaged = make_estimate(rep.logI.value - rep.log_volume - c.value, combine_stderr(rep.logI.std_error, c.std_error),
                               c.count);

  rep.residual = rep.joint.value - rep.orbital.value - rep.averaged.value;
  rep.residual_stderr = std::sqrt(std::pow(bn * trv.std_error, 2) + std::pow(b.std_error, 2) + std::pow(c.std_error, 2));
  double cb = 0.0;
  for (double x : cbias) cb += x;
  rep.bias_bound = b.bias_bound + cb / static_cast<double>(S);
  return rep;
}

EntropySplitReport entropy_split_check(const GibbsModel& model, const ChainRuleBudget& budget, CounterRng& rng) {
  EntropySplitReport rep;
  rep.terms = chain_rule_check(model, BlockMap::full(model.n()), budget, rng);
  const double lv = rep.terms.log_volume;
  rep.entropy = make_estimate(rep.terms.joint.value + lv, rep.terms.joint.std_error, rep.terms.joint.count);
  rep.averaged_entropy =
      make_estimate(rep.terms.averaged.value + lv, rep.terms.averaged.std_error, rep.terms.averaged.count);
  return rep;
}

ScalarEstimate dW_upper_bound(const std::vector<std::pair<MatrixTuple, MatrixTuple>>& pairs) {
  if (pairs.empty()) throw InvalidArgument("dW_upper_bound: no pairs");
  std::vector<double> d;
  d.reserve(pairs.size());
  for (const auto& [a, b] : pairs) {
    if (a.n() != b.n() || a.N() != b.N()) throw InvalidArgument("dW_upper_bound: tuple shapes differ");
    double acc = 0.0;
    for (int i = 0; i < a.n(); ++i) acc += (a[i] - b[i]).squaredNorm() / a.N();
    d.push_back(acc);
  }
  const ScalarEstimate m = mean_estimate_iid(d);
  const double v = std::sqrt(std::max(0.0, m.value));
  return make_estimate(v, v > 0.0 ? m.std_error / (2.0 * v) : 0.0, m.count);
}

double dW_moment_lower_bound(const MomentSpec& a, const MomentSpec& b, int K, double R, int max_group_size) {
  if (a.n() != b.n()) throw InvalidArgument("dW_moment_lower_bound: generator counts differ");
  if (a.K() < K || b.K() < K) throw InvalidArgument("dW_moment_lower_bound: spec truncated below K");
  if (!(R > 0.0) || max_group_size < 1) throw InvalidArgument("dW_moment_lower_bound: bad R or group size");
  const double agg = std::sqrt(static_cast<double>(a.n()) * max_group_size);
  double best = 0.0;
  for (const Word& w : canonical_classes(a.n(), K, 1)) {
    const int d = w.degree();
    best = std::max(best, std::abs(a.value(w) - b.value(w)) / (d * std::pow(R, d - 1) * agg));
  }
  return best;
}

MomentEstimate average_moments(const std::vector<MatrixTuple>& tuples, int K) {
  if (tuples.empty()) throw InvalidArgument("average_moments: no tuples");
  const int n = tuples.front().n();
  std::map<Word, std::vector<cdouble>> vals;
  double R = 0.0;
  for (const auto& t : tuples) {
    R = std::max(R, t.R());
    const MomentSpec m = empirical_moments(t, K);
    for (const auto& [w, v] : m.entries()) vals[w].push_back(v);
  }
  MomentEstimate out{MomentSpec(n, K, R), {}};
  const auto S = static_cast<double>(tuples.size());
  for (const auto& [w, xs] : vals) {
    cdouble m = 0.0;
    for (cdouble x : xs) m += x;
    m /= S;
    double var = 0.0;
    for (cdouble x : xs) var += std::norm(x - m);
    out.mean.set(w, m);
    out.std_error[w] = S > 1 ? std::sqrt(var / (S - 1) / S) : 0.0;
  }
  return out;
}

namespace {

MomentSpec marginal_free_product(const MomentSpec& tau, const BlockMap& pi, int K) {
  std::vector<MomentSpec> blocks;
  std::vector<std::vector<int>> groups;
  for (int g = 0; g < pi.groups(); ++g) {
    std::vector<int> gens;
    for (int b : pi.members(g)) gens.push_back(b + 1);
    blocks.push_back(tau.restrict_to(gens));
    groups.push_back(gens);
  }
  return free_product_moments(blocks, groups, K);
}

std::vector<MatrixTuple> randomize(const std::vector<MatrixTuple>& ts, const BlockMap& pi, CounterRng& rng) {
  std::vector<MatrixTuple> out;
  out.reserve(ts.size());
  for (const auto& t : ts) out.push_back(conjugate_tuple(t, haar_set(pi.groups(), t.N(), rng), pi));
  return out;
}

}  // namespace

TalagrandReport talagrand_report(const GibbsModel& model, const BlockMap& pi, const TalagrandBudget& budget,
                                 CounterRng& rng) {
  if (budget.K < 1 || budget.K > 6) throw InvalidArgument("talagrand_report: K must be in [1, 6]");
  TalagrandReport rep;
  rep.max_group_size = pi.max_group_size();

  CounterRng o_rng = rng.fork(1);
  OrbitalRequest req{model, pi, budget.S_out, budget.S_in, budget.chain, {}, budget.threads, budget.inner};
  rep.orbital = orbital_entropy(req, o_rng);

  CounterRng s_rng = rng.fork(2);
  const OuterDraw outer = draw_outer(model, budget.chain, budget.S_out, s_rng);
  const MomentEstimate mu = average_moments(outer.tuples, budget.K);
  CounterRng u_rng = rng.fork(3);
  const MomentEstimate rand = average_moments(randomize(outer.tuples, pi, u_rng), budget.K);
  const MomentSpec free = marginal_free_product(mu.mean, pi, budget.K);

  const double R = model.R();
  const int P = rep.max_group_size;
  rep.lhs_free_product = dW_moment_lower_bound(mu.mean, free, budget.K, R, P);
  rep.lhs_randomized = dW_moment_lower_bound(mu.mean, rand.mean, budget.K, R, P);
  const double agg = std::sqrt(static_cast<double>(model.n()) * P);
  for (const auto& [w, se] : mu.std_error) {
    if (w.is_unit()) continue;
    const int d = w.degree();
    const double combined = std::hypot(se, rand.std_error.at(w));
    rep.lhs_stderr = std::max(rep.lhs_stderr, combined / (d * std::pow(R, d - 1) * agg));
  }
  const double N2 = static_cast<double>(model.N()) * model.N();
  const double deficit = std::max(0.0, -(rep.orbital.value - 3.0 * rep.orbital.std_error));
  rep.rhs = 4.0 * R * std::sqrt(P * deficit / N2);
  rep.slack = rep.rhs - std::max(rep.lhs_free_product, rep.lhs_randomized);
  rep.freeness_gap = moment_distance(rand.mean, free, budget.K);
  return rep;
}

double freeness_gap(const GibbsModel& model, const BlockMap& pi, int K, int samples, const ChainOptions& chain,
                    CounterRng& rng, int randomizations) {
  if (randomizations < 1) throw InvalidArgument("freeness_gap: randomizations must be >= 1");
  CounterRng s_rng = rng.fork(1);
  const OuterDraw outer = draw_outer(model, chain, samples, s_rng);
  CounterRng u_rng = rng.fork(2);
  const MomentEstimate mu = average_moments(outer.tuples, K);
  std::vector<MatrixTuple> conj;
  for (int r = 0; r < randomizations; ++r)
    for (auto& t : randomize(outer.tuples, pi, u_rng)) conj.push_back(std::move(t));
  const MomentEstimate rand = average_moments(conj, K);
  return moment_distance(rand.mean, marginal_free_product(mu.mean, pi, K), K);
}

}  // namespace freeent
