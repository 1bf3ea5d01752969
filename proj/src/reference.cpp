#include "freeent/reference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>

#include "freeent/errors.hpp"
#include "freeent/sampler.hpp"

namespace freeent {

namespace {

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

}  // namespace

MaxentResult scalar_maxent_oracle(const std::vector<MomentConstraint>& constraints, double R, int grid_size) {
  if (!(R > 0.0)) throw InvalidArgument("scalar_maxent_oracle: R must be positive");
  if (grid_size < 1000) throw InvalidArgument("scalar_maxent_oracle: grid_size must be >= 1000");
  const auto m = static_cast<Eigen::Index>(constraints.size());
  Eigen::VectorXd a(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const MomentConstraint& c = constraints[static_cast<std::size_t>(k)];
    if (c.power < 1) throw InvalidArgument("scalar_maxent_oracle: powers must be >= 1");
    a(k) = c.target / std::pow(R, c.power);
    if (std::abs(a(k)) > 1.0 || (c.power % 2 == 0 && a(k) < 0.0))
      throw InfeasibleTarget("scalar_maxent_oracle: moment outside [-R, R] range");
  }

  const double h = 2.0 * R / grid_size;
  MaxentResult res;
  res.grid.resize(grid_size);
  Eigen::MatrixXd phi(grid_size, m);
  for (int i = 0; i < grid_size; ++i) {
    const double x = -R + (i + 0.5) * h;
    res.grid(i) = x;
    for (Eigen::Index k = 0; k < m; ++k) phi(i, k) = std::pow(x / R, constraints[static_cast<std::size_t>(k)].power);
  }

  // Dual D(l) = log sum_i h exp(-phi_i . l) + l . a, convex in l.
  struct Eval {
    double value;
    Eigen::VectorXd q;
  };
  auto evaluate = [&](const Eigen::VectorXd& l) {
    Eigen::VectorXd e = -(phi * l);
    const double mx = e.maxCoeff();
    Eigen::VectorXd q = (e.array() - mx).exp();
    const double z = q.sum();
    q /= z;
    return Eval{mx + std::log(z) + std::log(h) + l.dot(a), q};
  };

  Eigen::VectorXd l = Eigen::VectorXd::Zero(m);
  Eval cur = evaluate(l);
  for (res.iterations = 0; res.iterations < 200; ++res.iterations) {
    const Eigen::VectorXd mean = phi.transpose() * cur.q;
    const Eigen::VectorXd grad = a - mean;
    if (m == 0 || grad.lpNorm<Eigen::Infinity>() < 1e-12) {
      res.converged = true;
      break;
    }
    const Eigen::MatrixXd centered = phi.rowwise() - mean.transpose();
    Eigen::MatrixXd H = centered.transpose() * cur.q.asDiagonal() * centered;
    H.diagonal().array() += 1e-14;
    const Eigen::VectorXd d = -H.ldlt().solve(grad);
    // Squared Newton decrement at rounding level: no further progress possible.
    if (-grad.dot(d) < 1e-24) {
      res.converged = true;
      break;
    }
    double t = 1.0;
    Eval next = evaluate(l + d);
    while (next.value > cur.value + 1e-4 * t * grad.dot(d) && t > 1e-12) {
      t *= 0.5;
      next = evaluate(l + t * d);
    }
    l += t * d;
    cur = std::move(next);
    // Line search stalled on rounding of the dual value.
    if (t < 1e-6 && grad.lpNorm<Eigen::Infinity>() < 1e-8) {
      res.converged = true;
      break;
    }
    if (l.lpNorm<Eigen::Infinity>() > 1e4) break;
  }
  if (!res.converged) throw InfeasibleTarget("scalar_maxent_oracle: dual diverges, constraints not attainable");

  res.lambda.resize(m);
  for (Eigen::Index k = 0; k < m; ++k) res.lambda(k) = l(k) / std::pow(R, constraints[static_cast<std::size_t>(k)].power);
  res.density = cur.q / h;
  double discrete = 0.0;
  for (int i = 0; i < grid_size; ++i) discrete -= xlogx(cur.q(i));
  res.entropy = discrete + std::log(h);
  res.dual = cur.value;
  res.gap = std::abs(res.dual - res.entropy);
  return res;
}

ScalarDensity ScalarDensity::from_cdf(const std::function<double(double)>& cdf, std::vector<double> edges) {
  if (edges.size() < 2) throw InvalidArgument("ScalarDensity: need at least one cell");
  ScalarDensity d;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    if (!(edges[i + 1] > edges[i])) throw InvalidArgument("ScalarDensity: edges must increase");
    d.masses.push_back(std::max(0.0, cdf(edges[i + 1]) - cdf(edges[i])));
  }
  d.edges = std::move(edges);
  return d;
}

ScalarDensity ScalarDensity::from_pdf(const std::function<double(double)>& pdf, double lo, double hi, int cells) {
  if (cells < 1 || !(hi > lo)) throw InvalidArgument("ScalarDensity: bad grid");
  ScalarDensity d;
  const double w = (hi - lo) / cells;
  for (int i = 0; i <= cells; ++i) d.edges.push_back(lo + i * w);
  for (int i = 0; i < cells; ++i) {
    const double f = pdf(lo + (i + 0.5) * w);
    if (f < 0.0) throw InvalidArgument("ScalarDensity: negative density");
    d.masses.push_back(f * w);
  }
  return d;
}

std::vector<double> sine_edges(double R, int cells) {
  std::vector<double> e(static_cast<std::size_t>(cells) + 1);
  for (int i = 0; i <= cells; ++i) e[static_cast<std::size_t>(i)] = R * std::sin(std::numbers::pi * (static_cast<double>(i) / cells - 0.5));
  e.front() = -R;
  e.back() = R;
  return e;
}

ScalarDensity ScalarDensity::semicircle(double variance, int cells) {
  if (!(variance > 0.0)) throw InvalidArgument("ScalarDensity: variance must be positive");
  const double r = 2.0 * std::sqrt(variance);
  auto cdf = [r](double x) {
    const double u = std::clamp(x / r, -1.0, 1.0);
    return 0.5 + (u * std::sqrt(1.0 - u * u) + std::asin(u)) / std::numbers::pi;
  };
  return from_cdf(cdf, sine_edges(r, cells));
}

ScalarDensity ScalarDensity::arcsine(double R, int cells) {
  if (!(R > 0.0)) throw InvalidArgument("ScalarDensity: R must be positive");
  auto cdf = [R](double x) { return 0.5 + std::asin(std::clamp(x / R, -1.0, 1.0)) / std::numbers::pi; };
  return from_cdf(cdf, sine_edges(R, cells));
}

double ScalarDensity::total_mass() const { return std::accumulate(masses.begin(), masses.end(), 0.0); }

ScalarDensity ScalarDensity::dilated(double s) const {
  if (!(s > 0.0)) throw InvalidArgument("ScalarDensity: dilation must be positive");
  ScalarDensity d = *this;
  for (double& e : d.edges) e *= s;
  return d;
}

double ScalarDensity::moment(int k) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    const double a = edges[i], b = edges[i + 1];
    acc += masses[i] * (std::pow(b, k + 1) - std::pow(a, k + 1)) / ((k + 1) * (b - a));
  }
  return acc;
}

double log_energy(const ScalarDensity& d) {
  // F'' = log|u|, so the cell integral is a second difference of F.
  auto F = [](double u) { return u == 0.0 ? 0.0 : 0.5 * u * u * std::log(std::abs(u)) - 0.75 * u * u; };
  const std::size_t M = d.masses.size();
  double acc = 0.0;
  for (std::size_t a = 0; a < M; ++a) {
    if (d.masses[a] == 0.0) continue;
    const double a0 = d.edges[a], a1 = d.edges[a + 1];
    const double wa = a1 - a0;
    double row = 0.0;
    for (std::size_t b = 0; b < M; ++b) {
      if (d.masses[b] == 0.0) continue;
      const double b0 = d.edges[b], b1 = d.edges[b + 1];
      const double cell = -F(a1 - b1) + F(a0 - b1) + F(a1 - b0) - F(a0 - b0);
      row += d.masses[b] / (b1 - b0) * cell;
    }
    acc += d.masses[a] / wa * row;
  }
  return acc;
}

double chi_reference_constant() {
  static const double value = [] {
    auto curve = [](int N) { return log_ball_volume(N, 2.0) / (static_cast<double>(N) * N) + 0.5 * std::log(N); };
    constexpr int N = 1 << 16;
    return 2.0 * curve(2 * N) - curve(N);
  }();
  return value;
}

double one_variable_chi_reference(const ScalarDensity& d) {
  if (std::abs(d.total_mass() - 1.0) > 1e-6)
    throw InvalidArgument("one_variable_chi_reference: density must integrate to 1");
  return log_energy(d) + chi_reference_constant();
}

double scalar_entropy_quadrature(const std::function<double(double)>& log_density, double lo, double hi, int cells) {
  if (cells < 1 || !(hi > lo)) throw InvalidArgument("scalar_entropy_quadrature: bad grid");
  const double h = (hi - lo) / cells;
  std::vector<double> lf(static_cast<std::size_t>(cells));
  for (int i = 0; i < cells; ++i) lf[static_cast<std::size_t>(i)] = log_density(lo + (i + 0.5) * h);
  const double mx = *std::max_element(lf.begin(), lf.end());
  double z = 0.0, e = 0.0;
  for (double v : lf) {
    const double w = std::exp(v - mx);
    z += w;
    e += w * (v - mx);
  }
  // f = exp(v - mx) / (z h); -int f log f = log(z h) - E[v - mx].
  return std::log(z * h) - e / z;
}

Eigen::MatrixXd gibbs_grid_2d(const std::function<double(double, double)>& V, double R, int M) {
  if (M < 2 || !(R > 0.0)) throw InvalidArgument("gibbs_grid_2d: bad grid");
  const double h = 2.0 * R / M;
  Eigen::MatrixXd e(M, M);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j) e(i, j) = -V(-R + (i + 0.5) * h, -R + (j + 0.5) * h);
  Eigen::MatrixXd p = (e.array() - e.maxCoeff()).exp().matrix();
  return p / p.sum();
}

double relative_entropy(const Eigen::ArrayXXd& p, const Eigen::ArrayXXd& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw InvalidArgument("relative_entropy: shape mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pi = p(i), qi = q(i);
    if (pi <= 0.0) continue;
    if (qi <= 0.0) return -std::numeric_limits<double>::infinity();
    acc -= pi * std::log(pi / qi);
  }
  return acc;
}

DataProcessingReport data_processing_check(const std::function<double(double, double)>& V_mu,
                                           const std::function<double(double, double)>& V_nu, double R, int M) {
  const Eigen::MatrixXd p = gibbs_grid_2d(V_mu, R, M);
  const Eigen::MatrixXd q = gibbs_grid_2d(V_nu, R, M);
  DataProcessingReport r;
  r.joint = relative_entropy(p.array(), q.array());
  const Eigen::ArrayXXd pm = p.rowwise().sum().array();
  const Eigen::ArrayXXd qm = q.rowwise().sum().array();
  r.projected = relative_entropy(pm, qm);
  return r;
}

namespace {

double binary_entropy(double p) { return -xlogx(p) - xlogx(1.0 - p); }

}  // namespace

PartitionBound partition_bound(const Eigen::VectorXd& masses, const std::vector<bool>& in_F, double R) {
  if (static_cast<std::size_t>(masses.size()) != in_F.size()) throw InvalidArgument("partition_bound: mask size");
  const double h = 2.0 * R / static_cast<double>(masses.size());
  double mF = 0.0, ent = 0.0;
  long cF = 0;
  for (Eigen::Index i = 0; i < masses.size(); ++i) {
    ent -= xlogx(masses(i));
    if (in_F[static_cast<std::size_t>(i)]) {
      mF += masses(i);
      ++cF;
    }
  }
  const long cG = static_cast<long>(masses.size()) - cF;
  PartitionBound b;
  b.lhs = ent + std::log(h);
  b.rhs = binary_entropy(mF);
  if (mF > 0.0) b.rhs += mF * std::log(h * static_cast<double>(cF));
  if (1.0 - mF > 0.0) b.rhs += (1.0 - mF) * std::log(h * static_cast<double>(cG));
  return b;
}

PartitionBound relative_partition_bound(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu,
                                        const std::vector<bool>& in_F) {
  if (mu.size() != nu.size() || static_cast<std::size_t>(mu.size()) != in_F.size())
    throw InvalidArgument("relative_partition_bound: size mismatch");
  double mF = 0.0, nF = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    if (in_F[static_cast<std::size_t>(i)]) {
      mF += mu(i);
      nF += nu(i);
    }
  PartitionBound b;
  b.lhs = relative_entropy(mu.array(), nu.array());
  b.rhs = binary_entropy(mF);
  if (mF > 0.0) b.rhs += mF * std::log(nF);
  if (1.0 - mF > 0.0) b.rhs += (1.0 - mF) * std::log(1.0 - nF);
  return b;
}

ScalarCompressionReport scalar_compression_check(const CompressionFn& g,
                                                 const std::function<double(double)>& log_density, int cells) {
  const double T = g.T(), R = g.R();
  ScalarCompressionReport r;
  r.entropy = scalar_entropy_quadrature(log_density, -T, T, cells);
  const double h = 2.0 * T / cells;
  double shift = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < cells; ++i) shift = std::max(shift, log_density(-T + (i + 0.5) * h));
  double z = 0.0, acc = 0.0;
  for (int i = 0; i < cells; ++i) {
    const double x = -T + (i + 0.5) * h;
    const double w = std::exp(log_density(x) - shift);
    z += w;
    acc += w * std::log(g.derivative(x));
  }
  r.mean_log_derivative = acc / z;
  r.pushed_entropy = scalar_entropy_quadrature(
      [&](double y) {
        const double x = g.inverse(y);
        return log_density(x) - std::log(g.derivative(x));
      },
      -R, R, cells);
  return r;
}

double log_jacobian_from_spectrum(const Eigen::VectorXd& spectrum, const CompressionFn& g) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < spectrum.size(); ++i) {
    total += std::log(g.derivative(spectrum(i)));
    for (Eigen::Index j = i + 1; j < spectrum.size(); ++j)
      total += 2.0 * std::log(g.divided_difference(spectrum(i), spectrum(j)));
  }
  return total;
}

CompressionReport compression_check(const CompressionFn& g, int N, const ChainOptions& chain, CounterRng& rng) {
  if (N < 1) throw InvalidArgument("compression_check: N must be >= 1");
  CompressionReport r;
  r.jacobian_bound = static_cast<double>(N) * N * std::abs(std::log(g.alpha()));

  CounterRng src = rng.fork(1);
  const ChainResult mu = mcmc_chain(GibbsModel::uniform(1, N, g.T()), chain, src);
  std::vector<double> lj;
  lj.reserve(mu.samples.size());
  for (const ChainSample& s : mu.samples) {
    lj.push_back(log_jacobian_from_spectrum(s.spectra[0], g));
    r.max_abs_log_jacobian = std::max(r.max_abs_log_jacobian, std::abs(lj.back()));
  }
  r.bound_holds = r.max_abs_log_jacobian <= r.jacobian_bound * (1.0 + 1e-12);
  r.formula = mean_estimate(lj);

  CounterRng dst = rng.fork(2);
  const ChainResult ball = mcmc_chain(GibbsModel::uniform(1, N, g.R()), chain, dst);
  const std::size_t S = ball.samples.size();
  std::vector<double> logw(S), jac(S);
  for (std::size_t i = 0; i < S; ++i) {
    Eigen::VectorXd x = ball.samples[i].spectra[0];
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = g.inverse(x(k));
    jac[i] = log_jacobian_from_spectrum(x, g);
    logw[i] = -jac[i];
  }
  const double shift = *std::max_element(logw.begin(), logw.end());
  std::vector<double> w(S);
  double sw = 0.0, sw2 = 0.0, swj = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    w[i] = std::exp(logw[i] - shift);
    sw += w[i];
    sw2 += w[i] * w[i];
    swj += w[i] * jac[i];
  }
  const double est = swj / sw;
  std::vector<double> z(S);
  for (std::size_t i = 0; i < S; ++i) z[i] = w[i] * (jac[i] - est);
  const double wbar = sw / static_cast<double>(S);
  r.direct = make_estimate(est, mean_estimate(z).std_error / wbar, static_cast<long>(S));
  r.importance_ess = sw * sw / sw2;
  return r;
}

}  // namespace freeent
