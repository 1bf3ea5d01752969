#include "freeent/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>

#include "freeent/errors.hpp"

namespace freeent {

DualBasis::DualBasis(int n, int K) : n_(n), K_(K) {
  if (n < 1) throw InvalidArgument("DualBasis: n must be >= 1");
  if (K < 1) throw InvalidArgument("DualBasis: K must be >= 1");
  for (const Word& w : canonical_classes(n, K, 1)) {
    const NcPoly m = NcPoly::monomial(n, w);
    const NcPoly ms = star(m);
    elements_.push_back({w, false, (m + ms) * cdouble(0.5)});
    if (!is_reversal_symmetric(w)) elements_.push_back({w, true, (m - ms) * cdouble(0.0, -0.5)});
  }
}

DualBasis build_dual_basis(int n, int K) { return {n, K}; }

std::vector<NcPoly> DualBasis::polys() const {
  std::vector<NcPoly> out;
  out.reserve(elements_.size());
  for (const auto& e : elements_) out.push_back(e.poly);
  return out;
}

Eigen::VectorXd DualBasis::values(const MomentSpec& tau) const {
  if (tau.n() != n_) throw InvalidArgument("DualBasis: target has the wrong generator count");
  Eigen::VectorXd v(size());
  for (int j = 0; j < size(); ++j) {
    const cdouble t = tau.value(elements_[static_cast<std::size_t>(j)].word);
    v(j) = elements_[static_cast<std::size_t>(j)].imaginary ? t.imag() : t.real();
  }
  return v;
}

NcPoly DualBasis::potential(const Eigen::VectorXd& lambda) const {
  if (lambda.size() != size()) throw InvalidArgument("DualBasis: coefficient vector has the wrong length");
  NcPoly p(n_);
  for (int j = 0; j < size(); ++j)
    if (lambda(j) != 0.0) p += elements_[static_cast<std::size_t>(j)].poly * cdouble(lambda(j));
  return p;
}

Eigen::VectorXd DualBasis::coordinates(const NcPoly& P) const {
  if (P.n() != n_) throw InvalidArgument("DualBasis: polynomial has the wrong generator count");
  if (P.degree() > K_) throw InvalidArgument("DualBasis: polynomial degree exceeds K");
  if (!is_self_adjoint(P)) throw InvalidArgument("DualBasis: polynomial is not self-adjoint");
  // Per class, tau(P) = A tau(w) + B conj(tau(w)) with A summing the words
  // reached without reversal; self-adjointness forces B = conj(A).
  std::map<Word, std::pair<cdouble, cdouble>> acc;
  for (const auto& [w, c] : P.terms()) {
    if (w.is_unit()) continue;
    const CanonicalForm cf = canonical_form(w);
    auto& [a, b] = acc[cf.rep];
    (cf.reversed ? b : a) += c;
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(size());
  for (int j = 0; j < size(); ++j) {
    const auto& e = elements_[static_cast<std::size_t>(j)];
    auto it = acc.find(e.word);
    if (it == acc.end()) continue;
    const auto [a, b] = it->second;
    if (is_reversal_symmetric(e.word)) x(j) = (a + b).real();
    else x(j) = e.imaginary ? -2.0 * a.imag() : 2.0 * a.real();
  }
  return x;
}

Eigen::VectorXd DualBasis::scales(double R) const {
  Eigen::VectorXd s(size());
  for (int j = 0; j < size(); ++j) s(j) = std::pow(R, elements_[static_cast<std::size_t>(j)].word.degree());
  return s;
}

ScalarEstimate dual_objective(const Eigen::VectorXd& lambda, const DualBasis& basis, const MomentSpec& tau, double eps,
                              int N, double R, const EstimatorBudget& budget, CounterRng& rng) {
  const GibbsModel model(basis.n(), N, R, basis.potential(lambda));
  const LogIEstimate li = estimate_log_I(model, uniform_beta_grid(1.0, budget.ti_nodes), budget.chain, rng, budget.threads);
  const double N2 = static_cast<double>(N) * N;
  const double linear = basis.values(tau).dot(lambda) + eps * lambda.lpNorm<1>();
  return make_estimate(li.value + N2 * linear, li.std_error, 0);
}

std::string to_string(FitStatus s) {
  switch (s) {
    case FitStatus::Converged:
      return "converged";
    case FitStatus::BudgetExhausted:
      return "budget_exhausted";
    case FitStatus::Infeasible:
      return "infeasible";
  }
  return "unknown";
}

namespace {

double soft_threshold(double u, double t) {
  if (u > t) return u - t;
  if (u < -t) return u + t;
  return 0.0;
}

/// argmin_z  r.(z - lam) + 1/2 (z - lam)^T H (z - lam) + eps ||z||_1.
Eigen::VectorXd prox_newton_point(const Eigen::VectorXd& lam, const Eigen::VectorXd& r, const Eigen::MatrixXd& H,
                                  double eps) {
  if (eps == 0.0) return lam - H.ldlt().solve(r);
  Eigen::VectorXd z = lam;
  Eigen::VectorXd Hd = Eigen::VectorXd::Zero(lam.size());
  for (int sweep = 0; sweep < 5000; ++sweep) {
    double change = 0.0;
    for (Eigen::Index j = 0; j < lam.size(); ++j) {
      const double hjj = H(j, j);
      const double g = r(j) + Hd(j);
      const double zj = soft_threshold(z(j) - g / hjj, eps / hjj);
      const double dz = zj - z(j);
      if (dz != 0.0) {
        Hd += dz * H.col(j);
        z(j) = zj;
        change = std::max(change, std::abs(dz) * std::sqrt(hjj));
      }
    }
    if (change < 1e-13) break;
  }
  return z;
}

struct MomentStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stderr_;
  Eigen::MatrixXd cov;
};

MomentStats moment_stats(const ChainResult& c, int m) {
  const auto S = static_cast<Eigen::Index>(c.samples.size());
  Eigen::MatrixXd X(S, m);
  for (Eigen::Index i = 0; i < S; ++i)
    for (int j = 0; j < m; ++j) X(i, j) = c.samples[static_cast<std::size_t>(i)].tracked[static_cast<std::size_t>(j)];
  MomentStats st;
  st.mean.resize(m);
  st.stderr_.resize(m);
  for (int j = 0; j < m; ++j) {
    const ScalarEstimate e = mean_estimate(tracked_series(c, static_cast<std::size_t>(j)));
    st.mean(j) = e.value;
    st.stderr_(j) = e.std_error;
  }
  st.cov = sample_covariance(X);
  return st;
}

// A combination with zero variance under the model is a polynomial identity
// at this N; a target that violates it cannot be matched by any measure.
std::optional<std::string> null_direction_violation(const Eigen::MatrixXd& cov, const Eigen::VectorXd& r,
                                                    const Eigen::VectorXd& scale, double eps, double tol) {
  const Eigen::VectorXd inv = scale.cwiseInverse();
  const Eigen::MatrixXd C = inv.asDiagonal() * cov * inv.asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  const double top = es.eigenvalues().maxCoeff();
  if (!(top > 0.0)) return std::nullopt;
  const Eigen::VectorXd rn = inv.asDiagonal() * r;
  for (Eigen::Index i = 0; i < C.rows(); ++i) {
    if (es.eigenvalues()(i) > 1e-12 * top) break;
    const Eigen::VectorXd v = es.eigenvectors().col(i);
    const double slack = tol + eps * v.cwiseAbs().dot(inv);
    if (std::abs(v.dot(rn)) > slack)
      return "target violates a trace identity that holds at this N (residual " + std::to_string(v.dot(rn)) +
             " along a zero-variance direction)";
  }
  return std::nullopt;
}

double max_excess(const Eigen::VectorXd& r, double eps, const Eigen::VectorXd& scale) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < r.size(); ++j) worst = std::max(worst, std::max(std::abs(r(j)) - eps, 0.0) / scale(j));
  return worst;
}

}  // namespace

FitResult fit_projection(const MomentSpec& tau, int N, int K, double R, double eps, const FitOptions& opts,
                         CounterRng& rng) {
  if (N < 1) throw InvalidArgument("fit_projection: N must be >= 1");
  if (K < 1) throw InvalidArgument("fit_projection: K must be >= 1");
  if (tau.K() < K) throw InvalidArgument("fit_projection: target truncated below K");
  if (!(eps >= 0.0)) throw InvalidArgument("fit_projection: eps must be nonnegative");
  if (const auto v = validate(tau); !v.empty()) throw InvalidArgument("fit_projection: invalid target: " + v.front());

  const int n = tau.n();
  const DualBasis basis(n, K);
  const int m = basis.size();
  const double N2 = static_cast<double>(N) * N;
  const Eigen::VectorXd t = basis.values(tau);
  const Eigen::VectorXd sc = basis.scales(R);

  FitResult res;
  res.n = n;
  res.N = N;
  res.K = K;
  res.R = R;
  res.eps = eps;
  res.targets = t;

  Eigen::VectorXd lam = opts.initial_lambda.value_or(Eigen::VectorXd::Zero(m));
  if (lam.size() != m) throw InvalidArgument("fit_projection: initial coefficients have the wrong length");

  const std::vector<NcPoly> polys = basis.polys();
  ChainState state;
  bool warm = false;
  double trust = opts.trust_radius;
  double prev_decrement = std::numeric_limits<double>::infinity();
  std::vector<Eigen::VectorXd> tail;

  for (int it = 0; it < opts.max_iterations; ++it) {
    const GibbsModel model(n, N, R, basis.potential(lam));
    ChainOptions co;
    co.burnin = warm ? opts.warm_burnin : opts.chain_burnin;
    co.steps = co.burnin + std::min<long>(opts.max_chain_steps,
                                          static_cast<long>(opts.chain_steps * std::pow(opts.growth, it)));
    co.tracked = polys;
    co.kernel = opts.kernel;
    CounterRng r = rng.fork(static_cast<std::uint64_t>(it));
    const ChainResult chain = mcmc_chain(model, co, r, warm ? &state : nullptr);
    state = chain.final_state;
    warm = true;

    const MomentStats st = moment_stats(chain, m);
    const Eigen::VectorXd resid = t - st.mean;
    if (const auto why = null_direction_violation(st.cov, resid, sc, eps, opts.tol_scale)) {
      res.status = FitStatus::Infeasible;
      res.message = *why;
      res.lambda = lam;
      res.potential = basis.potential(lam);
      res.residuals = resid;
      res.model_moments = st.mean;
      res.moment_stderr = st.stderr_;
      return res;
    }
    Eigen::MatrixXd H = N2 * st.cov;
    const double h_scale = std::max(H.diagonal().maxCoeff(), 1e-300);
    H.diagonal().array() += opts.ridge * h_scale + 1e-300;

    const Eigen::VectorXd z = prox_newton_point(lam, resid, H, eps);
    Eigen::VectorXd d = z - lam;
    const double decrement = std::sqrt(std::max(0.0, d.dot(H * d)));

    // Shrink the trust region when the Newton decrement grows, widen it
    // back while it keeps falling.
    if (decrement > prev_decrement) trust = std::max(0.05 * opts.trust_radius, 0.5 * trust);
    else trust = std::min(opts.trust_radius, 1.5 * trust);
    prev_decrement = decrement;

    double scale = 1.0;
    if (decrement > trust) scale = trust / decrement;
    const double cap = (d.cwiseAbs().cwiseProduct(sc)).maxCoeff();
    if (cap * scale > opts.step_cap) scale = opts.step_cap / cap;
    const bool truncated = scale < 1.0;
    lam += scale * d;

    FitIteration rec;
    rec.iteration = it;
    rec.max_excess_residual = max_excess(resid, eps, sc);
    rec.newton_decrement = decrement;
    rec.trust_radius = trust;
    rec.acceptance = chain.diagnostics.acceptance;
    rec.truncated = truncated;
    res.trajectory.push_back(rec);

    if ((lam.cwiseAbs().cwiseProduct(sc)).maxCoeff() > opts.divergence_bound) {
      res.status = FitStatus::Infeasible;
      res.message = "target not approximable at this (N, K, eps): dual coefficients diverge";
      res.lambda = lam;
      res.potential = basis.potential(lam);
      res.residuals = resid;
      res.model_moments = st.mean;
      res.moment_stderr = st.stderr_;
      return res;
    }
    if (2 * (it + 1) > opts.max_iterations && !truncated) tail.push_back(lam);
  }

  // Polyak average over the untruncated second half.
  if (!tail.empty()) {
    Eigen::VectorXd avg = Eigen::VectorXd::Zero(m);
    for (const auto& l : tail) avg += l;
    lam = avg / static_cast<double>(tail.size());
  }
  res.lambda = lam;
  res.potential = basis.potential(lam);

  const GibbsModel model(n, N, R, res.potential);
  ChainOptions fo;
  fo.burnin = opts.final_burnin;
  fo.steps = opts.final_burnin + opts.final_steps;
  fo.tracked = polys;
  fo.kernel = opts.kernel;
  CounterRng fr = rng.fork(10000);
  const ChainResult final_chain = mcmc_chain(model, fo, fr, warm ? &state : nullptr);
  const MomentStats st = moment_stats(final_chain, m);
  res.model_moments = st.mean;
  res.moment_stderr = st.stderr_;
  res.residuals = t - st.mean;
  res.final_diagnostics = final_chain.diagnostics;
  res.status = max_excess(res.residuals, eps, sc) <= opts.tol_scale ? FitStatus::Converged : FitStatus::BudgetExhausted;
  if (res.status == FitStatus::BudgetExhausted) res.message = "iteration budget exhausted before moment matching";

  if (opts.skip_entropy) return res;

  ChainOptions ti;
  ti.burnin = opts.ti_burnin;
  ti.steps = opts.ti_burnin + opts.ti_steps;
  ti.kernel = opts.kernel;
  CounterRng tr = rng.fork(20000);
  const LogIEstimate li = estimate_log_I(model, uniform_beta_grid(1.0, opts.ti_nodes), ti, tr, opts.threads);
  res.logI = li.estimate();
  res.discretization_bound = li.discretization_bound;
  res.rho = gibbs_entropy(model, res.logI, final_chain);
  res.dual_value = make_estimate(li.value + N2 * (t.dot(lam) + eps * lam.lpNorm<1>()), li.std_error, 0);
  res.gap = res.dual_value.value - res.rho.value;
  res.gap_stderr = combine_stderr(res.rho.std_error, res.dual_value.std_error);
  return res;
}

RhoEstimate rho(const MomentSpec& tau, int N, int K, double R, double eps, const FitOptions& opts, CounterRng& rng) {
  FitOptions o = opts;
  o.skip_entropy = false;
  const FitResult f = fit_projection(tau, N, K, R, eps, o, rng);
  if (f.status == FitStatus::Infeasible) throw InfeasibleTarget(f.message);
  RhoEstimate out;
  out.status = f.status;
  out.primal = f.rho;
  out.dual = f.dual_value;
  out.gap = f.gap;
  out.gap_stderr = f.gap_stderr;
  return out;
}

std::vector<CurvePoint> chi_tilde_curve(const MomentSpec& tau, const std::vector<int>& N_list, int K, double R,
                                        double eps, const FitOptions& opts, CounterRng& rng) {
  for (std::size_t i = 1; i < N_list.size(); ++i)
    if (N_list[i] <= N_list[i - 1]) throw InvalidArgument("chi_tilde_curve: N list must increase");
  std::vector<CurvePoint> out;
  for (int N : N_list) {
    CounterRng r = rng.fork(static_cast<std::uint64_t>(N));
    FitOptions o = opts;
    o.skip_entropy = false;
    const FitResult f = fit_projection(tau, N, K, R, eps, o, r);
    CurvePoint p;
    p.N = N;
    p.status = f.status;
    if (f.status == FitStatus::Infeasible) {
      p.value = std::numeric_limits<double>::quiet_NaN();
      p.std_error = std::numeric_limits<double>::quiet_NaN();
    } else {
      const double N2 = static_cast<double>(N) * N;
      p.value = f.rho.value / N2 + 0.5 * tau.n() * std::log(static_cast<double>(N));
      p.std_error = f.rho.std_error / N2;
    }
    out.push_back(p);
  }
  return out;
}

ScalarEstimate free_pressure(const NcPoly& P, int N, double R, const EstimatorBudget& budget, CounterRng& rng) {
  const GibbsModel model(P.n(), N, R, P);
  const LogIEstimate li = estimate_log_I(model, uniform_beta_grid(1.0, budget.ti_nodes), budget.chain, rng, budget.threads);
  const double N2 = static_cast<double>(N) * N;
  return make_estimate(li.value / N2 + 0.5 * P.n() * std::log(static_cast<double>(N)), li.std_error / N2, 0);
}

EtaBoundReport eta_bound_check(const MomentSpec& tau, const NcPoly& P, const ScalarEstimate& rho_value, int N, int K,
                               double R, double eps, const EstimatorBudget& budget, CounterRng& rng) {
  if (P.degree() > K) throw InvalidArgument("eta_bound_check: potential degree exceeds K");
  const DualBasis basis(tau.n(), K);
  const Eigen::VectorXd x = basis.coordinates(P);
  const ScalarEstimate fp = free_pressure(P, N, R, budget, rng);
  const double N2 = static_cast<double>(N) * N;
  EtaBoundReport rep;
  rep.lhs = rho_value.value / N2 + 0.5 * tau.n() * std::log(static_cast<double>(N));
  rep.rhs = tau.value(P).real() + eps * x.lpNorm<1>() + fp.value;
  rep.combined_stderr = combine_stderr(rho_value.std_error / N2, fp.std_error);
  rep.holds = rep.lhs <= rep.rhs + 3.0 * rep.combined_stderr;
  return rep;
}

}  // namespace freeent
