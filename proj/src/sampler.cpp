#include "freeent/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <nlohmann/json.hpp>

#include "freeent/errors.hpp"
#include "freeent/parallel.hpp"

namespace freeent {

GibbsModel::GibbsModel(int n, int N, double R, NcPoly V, double beta)
    : n_(n), N_(N), R_(R), V_(std::move(V)), beta_(beta) {
  if (n < 1 || N < 1) throw InvalidArgument("GibbsModel: n and N must be >= 1");
  if (!(R > 0.0)) throw InvalidArgument("GibbsModel: R must be positive");
  if (V_.n() != n) throw InvalidArgument("GibbsModel: potential has the wrong generator count");
  if (!is_self_adjoint(V_)) throw InvalidArgument("GibbsModel: potential is not self-adjoint: " + to_string(V_));
  if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidArgument("GibbsModel: beta must lie in [0, 1]");
  separable_ = is_block_separable(V_);
}

GibbsModel GibbsModel::uniform(int n, int N, double R) { return {n, N, R, NcPoly(n), 1.0}; }

GibbsModel GibbsModel::with_beta(double beta) const { return {n_, N_, R_, V_, beta}; }

double GibbsModel::trace_potential(const MatrixTuple& t) const {
  return trace_moment(t, V_).real() * static_cast<double>(t.N());
}

namespace {

constexpr long kTuneWindow = 50;
constexpr long kResyncEvery = 50;

/// Tr p evaluated from per-block spectra; p must be block-separable.
double separable_trace(const NcPoly& p, const std::vector<Eigen::VectorXd>& spectra) {
  const double N = static_cast<double>(spectra.front().size());
  double total = 0.0;
  for (const auto& [w, c] : p.terms()) {
    if (w.is_unit()) {
      total += c.real() * N;
      continue;
    }
    const Eigen::VectorXd& ev = spectra[static_cast<std::size_t>(w.letters.front() - 1)];
    total += c.real() * ev.array().pow(w.degree()).sum();
  }
  return total;
}

/// Tr V bookkeeping for the sampler: power sums when V is separable,
/// per-word cached traces otherwise.
class Energy {
 public:
  Energy(const NcPoly& V, int n) : n_(n), separable_(is_block_separable(V)) {
    coef_.assign(static_cast<std::size_t>(n), {});
    for (const auto& [w, c] : V.terms()) {
      if (w.is_unit()) {
        constant_ += c.real();
        continue;
      }
      if (separable_) {
        auto& a = coef_[static_cast<std::size_t>(w.letters.front() - 1)];
        if (static_cast<int>(a.size()) <= w.degree()) a.resize(static_cast<std::size_t>(w.degree()) + 1, 0.0);
        a[static_cast<std::size_t>(w.degree())] += c.real();
      } else {
        Term t{w, c, std::vector<bool>(static_cast<std::size_t>(n), false)};
        for (int l : w.letters) t.uses[static_cast<std::size_t>(l - 1)] = true;
        terms_.push_back(std::move(t));
      }
    }
  }

  [[nodiscard]] bool separable() const { return separable_; }

  /// sum_k a_{b,k} (y^k - x^k) for separable V.
  [[nodiscard]] double scalar_delta(int b, double x, double y) const {
    const auto& a = coef_[static_cast<std::size_t>(b)];
    double px = 1.0, py = 1.0, d = 0.0;
    for (std::size_t k = 1; k < a.size(); ++k) {
      px *= x;
      py *= y;
      d += a[k] * (py - px);
    }
    return d;
  }

  [[nodiscard]] double separable_total(const std::vector<Eigen::VectorXd>& lam) const {
    const double N = static_cast<double>(lam.front().size());
    double total = constant_ * N;
    for (int b = 0; b < n_; ++b)
      for (Eigen::Index i = 0; i < lam[static_cast<std::size_t>(b)].size(); ++i)
        total += scalar_delta(b, 0.0, lam[static_cast<std::size_t>(b)](i));
    return total;
  }

  /// Recomputes all cached word traces.
  void reset(const std::vector<const Matrix*>& blocks) {
    cache_.resize(terms_.size());
    for (std::size_t k = 0; k < terms_.size(); ++k) cache_[k] = trace_word(terms_[k].w, blocks);
  }

  /// Tr V with block b replaced; fills `scratch` with the new per-word traces.
  double total_with(int b, const std::vector<const Matrix*>& blocks, std::vector<cdouble>& scratch) const {
    scratch = cache_;
    cdouble s{};
    for (std::size_t k = 0; k < terms_.size(); ++k) {
      if (terms_[k].uses[static_cast<std::size_t>(b)]) scratch[k] = trace_word(terms_[k].w, blocks);
      s += terms_[k].c * scratch[k];
    }
    const double N = static_cast<double>(blocks.front()->rows());
    return s.real() + constant_ * N;
  }

  [[nodiscard]] double cached_total(double N) const {
    cdouble s{};
    for (std::size_t k = 0; k < terms_.size(); ++k) s += terms_[k].c * cache_[k];
    return s.real() + constant_ * N;
  }

  void commit(std::vector<cdouble>& scratch) { cache_.swap(scratch); }

 private:
  struct Term {
    Word w;
    cdouble c;
    std::vector<bool> uses;
  };
  int n_;
  bool separable_;
  double constant_ = 0.0;
  std::vector<std::vector<double>> coef_;
  std::vector<Term> terms_;
  std::vector<cdouble> cache_;
};

Eigen::VectorXd initial_spectrum(int N, double R) {
  Eigen::VectorXd ev(N);
  for (int i = 0; i < N; ++i) ev(i) = 0.9 * R * std::cos(std::numbers::pi * (i + 0.5) / N);
  return ev;
}

Matrix reassemble(const Matrix& U, const Eigen::VectorXd& lam) {
  Matrix m = U * lam.cast<cdouble>().asDiagonal() * U.adjoint();
  return 0.5 * (m + m.adjoint());
}

Matrix reorthonormalize(const Matrix& U) {
  Eigen::HouseholderQR<Matrix> qr(U);
  Matrix q = qr.householderQ();
  const Matrix& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    const cdouble d = r(j, j);
    const double a = std::abs(d);
    q.col(j) *= (a > 0.0 ? d / a : cdouble(1.0, 0.0));
  }
  return q;
}

double log_vandermonde_change(const Eigen::VectorXd& lam, Eigen::Index i, double y) {
  const double x = lam(i);
  double s = 0.0;
  double prod = 1.0;
  for (Eigen::Index j = 0; j < lam.size(); ++j) {
    if (j == i) continue;
    prod *= (y - lam(j)) / (x - lam(j));
    // Flush before the running product can over- or underflow.
    const double a = std::abs(prod);
    if (a > 1e100 || a < 1e-100) {
      s += std::log(a);
      prod = 1.0;
    }
  }
  return 2.0 * (s + std::log(std::abs(prod)));
}

struct MoveCounter {
  long proposed = 0;
  long accepted = 0;
  [[nodiscard]] double rate() const { return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0; }
};

double tune_step(double step, const MoveCounter& window, double target, double cap) {
  if (window.proposed == 0) return step;
  const double factor = std::exp(2.0 * (window.rate() - target));
  return std::clamp(step * factor, 1e-8 * cap, cap);
}

class Chain {
 public:
  Chain(const GibbsModel& model, const ChainOptions& opts, CounterRng& rng, const ChainState* init)
      : model_(model), opts_(opts), rng_(rng), energy_(model.V(), model.n()), n_(model.n()), N_(model.N()) {
    const double R = model.R();
    if (init) {
      if (static_cast<int>(init->eigenvalues.size()) != n_) throw InvalidArgument("mcmc_chain: warm start has wrong n");
      lam_ = init->eigenvalues;
      U_ = init->eigenvectors;
      for (const auto& l : lam_) {
        if (l.size() != N_) throw InvalidArgument("mcmc_chain: warm start has wrong N");
        if (l.cwiseAbs().maxCoeff() > R) throw InvalidArgument("mcmc_chain: warm start outside the ball");
      }
    } else {
      for (int b = 0; b < n_; ++b) {
        lam_.push_back(initial_spectrum(N_, R));
        U_.push_back(haar_unitary(N_, rng_));
      }
    }
    eigen_step_ = init && init->eigen_step > 0 ? init->eigen_step : opts.step_scale * R / N_;
    rotation_step_ = init && init->rotation_step > 0 ? init->rotation_step : opts.step_scale * 0.5;
    matrix_step_ = init && init->matrix_step > 0 ? init->matrix_step : opts.step_scale * R / (2.0 * N_);

    track_from_spectra_ = std::all_of(opts.tracked.begin(), opts.tracked.end(), [](const NcPoly& p) {
      return is_block_separable(p);
    });
    keep_matrices_ = !energy_.separable() || opts.kernel == Kernel::FullMatrix;
    if (keep_matrices_) {
      for (int b = 0; b < n_; ++b) M_.push_back(reassemble(U_[static_cast<std::size_t>(b)], lam_[static_cast<std::size_t>(b)]));
      energy_.reset(pointers());
    }
    trv_ = current_total();
  }

  ChainResult run() {
    if (opts_.steps <= opts_.burnin) throw InvalidArgument("mcmc_chain: steps must exceed burnin");
    if (opts_.thin < 1) throw InvalidArgument("mcmc_chain: thin must be >= 1");
    if (!(opts_.step_scale > 0.0)) throw InvalidArgument("mcmc_chain: step_scale must be positive");
    ChainResult result;
    for (long sweep = 0; sweep < opts_.steps; ++sweep) {
      const bool burning = sweep < opts_.burnin;
      if (opts_.kernel == Kernel::Spectral) spectral_sweep();
      else matrix_sweep();

      if (burning && opts_.tune && (sweep + 1) % kTuneWindow == 0) {
        const double R = model_.R();
        eigen_step_ = tune_step(eigen_step_, win_eigen_, opts_.target_acceptance, 2.0 * R);
        rotation_step_ = tune_step(rotation_step_, win_rot_, opts_.target_acceptance, std::numbers::pi);
        matrix_step_ = tune_step(matrix_step_, win_matrix_, opts_.target_acceptance, 2.0 * R);
        win_eigen_ = win_rot_ = win_matrix_ = {};
      }
      if (opts_.kernel == Kernel::Spectral && keep_matrices_ && (sweep + 1) % kResyncEvery == 0) resync();
      if (sweep + 1 == opts_.burnin) {
        total_eigen_ = total_rot_ = total_matrix_ = {};
        win_eigen_ = win_rot_ = win_matrix_ = {};
      }
      if (!burning && (sweep - opts_.burnin) % opts_.thin == 0) result.samples.push_back(emit(sweep));
    }
    result.diagnostics = diagnostics(result);
    result.final_state = state();
    return result;
  }

 private:
  std::vector<const Matrix*> pointers() const {
    std::vector<const Matrix*> p;
    for (const Matrix& m : M_) p.push_back(&m);
    return p;
  }

  double current_total() const {
    return energy_.separable() ? energy_.separable_total(lam_) : energy_.cached_total(N_);
  }

  bool accept(double log_ratio) { return log_ratio >= 0.0 || rng_.uniform() < std::exp(log_ratio); }

  void spectral_sweep() {
    const double bN = model_.beta() * N_;
    for (int b = 0; b < n_; ++b) {
      auto& lam = lam_[static_cast<std::size_t>(b)];
      for (int m = 0; m < N_; ++m) eigen_move(b, lam, bN);
      if (keep_matrices_ && N_ >= 2) {
        for (int m = 0; m < N_; ++m) rotation_move(b, bN);
      }
    }
  }

  void eigen_move(int b, Eigen::VectorXd& lam, double bN) {
    const auto i = static_cast<Eigen::Index>(rng_.below(static_cast<std::uint64_t>(N_)));
    const double x = lam(i);
    const double y = x + eigen_step_ * rng_.normal();
    ++win_eigen_.proposed;
    ++total_eigen_.proposed;
    if (std::abs(y) > model_.R()) return;
    double log_ratio = log_vandermonde_change(lam, i, y);
    if (!keep_matrices_) {
      const double d = energy_.scalar_delta(b, x, y);
      if (accept(log_ratio - bN * d)) {
        lam(i) = y;
        trv_ += d;
        ++win_eigen_.accepted;
        ++total_eigen_.accepted;
      }
      return;
    }
    Matrix& M = M_[static_cast<std::size_t>(b)];
    const auto u = U_[static_cast<std::size_t>(b)].col(i);
    const Matrix old = M;
    M.noalias() += (y - x) * (u * u.adjoint());
    const double total = energy_.total_with(b, pointers(), scratch_);
    if (accept(log_ratio - bN * (total - trv_))) {
      lam(i) = y;
      trv_ = total;
      energy_.commit(scratch_);
      ++win_eigen_.accepted;
      ++total_eigen_.accepted;
    } else {
      M = old;
    }
  }

  void rotation_move(int b, double bN) {
    const auto a = static_cast<Eigen::Index>(rng_.below(static_cast<std::uint64_t>(N_)));
    auto c = static_cast<Eigen::Index>(rng_.below(static_cast<std::uint64_t>(N_ - 1)));
    if (c >= a) ++c;
    const double theta = rotation_step_ * rng_.normal();
    const double phi = 2.0 * std::numbers::pi * rng_.uniform();
    ++win_rot_.proposed;
    ++total_rot_.proposed;

    Matrix& U = U_[static_cast<std::size_t>(b)];
    const auto& lam = lam_[static_cast<std::size_t>(b)];
    const Eigen::VectorXcd ua = U.col(a), uc = U.col(c);
    const cdouble e(std::cos(phi), std::sin(phi));
    const double co = std::cos(theta), si = std::sin(theta);
    const Eigen::VectorXcd na = co * ua + si * std::conj(e) * uc;
    const Eigen::VectorXcd nc = -si * e * ua + co * uc;

    Matrix& M = M_[static_cast<std::size_t>(b)];
    const Matrix old = M;
    M.noalias() += lam(a) * (na * na.adjoint() - ua * ua.adjoint());
    M.noalias() += lam(c) * (nc * nc.adjoint() - uc * uc.adjoint());
    const double total = energy_.total_with(b, pointers(), scratch_);
    if (accept(-bN * (total - trv_))) {
      U.col(a) = na;
      U.col(c) = nc;
      trv_ = total;
      energy_.commit(scratch_);
      ++win_rot_.accepted;
      ++total_rot_.accepted;
    } else {
      M = old;
    }
  }

  void matrix_sweep() {
    const double bN = model_.beta() * N_;
    for (int b = 0; b < n_; ++b) {
      Matrix& M = M_[static_cast<std::size_t>(b)];
      const Matrix old = M;
      M += (matrix_step_ / std::sqrt(static_cast<double>(N_))) * gaussian_hermitian(N_, rng_);
      ++win_matrix_.proposed;
      ++total_matrix_.proposed;
      Eigen::SelfAdjointEigenSolver<Matrix> es(M);
      const Eigen::VectorXd& ev = es.eigenvalues();
      if (std::max(std::abs(ev(0)), std::abs(ev(N_ - 1))) > model_.R()) {
        M = old;
        continue;
      }
      double total;
      if (energy_.separable()) {
        auto trial = lam_;
        trial[static_cast<std::size_t>(b)] = ev;
        total = energy_.separable_total(trial);
      } else {
        total = energy_.total_with(b, pointers(), scratch_);
      }
      if (accept(-bN * (total - trv_))) {
        lam_[static_cast<std::size_t>(b)] = ev;
        U_[static_cast<std::size_t>(b)] = es.eigenvectors();
        trv_ = total;
        if (!energy_.separable()) energy_.commit(scratch_);
        ++win_matrix_.accepted;
        ++total_matrix_.accepted;
      } else {
        M = old;
      }
    }
  }

  void resync() {
    for (int b = 0; b < n_; ++b) {
      auto& U = U_[static_cast<std::size_t>(b)];
      U = reorthonormalize(U);
      M_[static_cast<std::size_t>(b)] = reassemble(U, lam_[static_cast<std::size_t>(b)]);
    }
    energy_.reset(pointers());
    trv_ = current_total();
  }

  ChainSample emit(long sweep) {
    ChainSample s;
    s.step = sweep;
    for (const auto& l : lam_) {
      Eigen::VectorXd sorted = l;
      std::sort(sorted.begin(), sorted.end());
      s.spectra.push_back(std::move(sorted));
    }
    s.trace_potential = trv_;
    const bool need_tuple = opts_.store_matrices || !track_from_spectra_;
    if (need_tuple) {
      std::vector<Matrix> blocks;
      for (int b = 0; b < n_; ++b) {
        if (keep_matrices_) blocks.push_back(M_[static_cast<std::size_t>(b)]);
        else blocks.push_back(reassemble(haar_unitary(N_, rng_), lam_[static_cast<std::size_t>(b)]));
      }
      s.tuple = MatrixTuple::unchecked(std::move(blocks), model_.R());
    }
    for (const NcPoly& p : opts_.tracked) {
      if (track_from_spectra_) s.tracked.push_back(separable_trace(p, s.spectra) / N_);
      else s.tracked.push_back(trace_moment(*s.tuple, p).real());
    }
    if (!opts_.store_matrices) s.tuple.reset();
    return s;
  }

  ChainDiagnostics diagnostics(const ChainResult& r) const {
    ChainDiagnostics d;
    const MoveCounter all{total_eigen_.proposed + total_rot_.proposed + total_matrix_.proposed,
                          total_eigen_.accepted + total_rot_.accepted + total_matrix_.accepted};
    d.acceptance = all.rate();
    d.eigen_acceptance = opts_.kernel == Kernel::Spectral ? total_eigen_.rate() : total_matrix_.rate();
    d.rotation_acceptance = total_rot_.proposed ? total_rot_.rate() : 1.0;
    d.samples = static_cast<long>(r.samples.size());
    double tau = integrated_autocorr_time(potential_series(r));
    for (int b = 0; b < n_; ++b) {
      std::vector<double> m2;
      m2.reserve(r.samples.size());
      for (const auto& s : r.samples) m2.push_back(s.spectra[static_cast<std::size_t>(b)].squaredNorm() / N_);
      tau = std::max(tau, integrated_autocorr_time(m2));
    }
    d.autocorr_time = tau;
    d.effective_samples = static_cast<double>(d.samples) / tau;
    return d;
  }

  ChainState state() const {
    ChainState st;
    st.eigenvalues = lam_;
    for (const auto& U : U_) st.eigenvectors.push_back(reorthonormalize(U));
    st.eigen_step = eigen_step_;
    st.rotation_step = rotation_step_;
    st.matrix_step = matrix_step_;
    return st;
  }

  const GibbsModel& model_;
  const ChainOptions& opts_;
  CounterRng& rng_;
  Energy energy_;
  int n_, N_;
  std::vector<Eigen::VectorXd> lam_;
  std::vector<Matrix> U_;
  std::vector<Matrix> M_;
  std::vector<cdouble> scratch_;
  bool keep_matrices_ = false;
  bool track_from_spectra_ = true;
  double trv_ = 0.0;
  double eigen_step_ = 0.0, rotation_step_ = 0.0, matrix_step_ = 0.0;
  MoveCounter win_eigen_, win_rot_, win_matrix_;
  MoveCounter total_eigen_, total_rot_, total_matrix_;
};

}  // namespace

ChainResult mcmc_chain(const GibbsModel& model, const ChainOptions& opts, CounterRng& rng, const ChainState* init) {
  for (const NcPoly& p : opts.tracked)
    if (p.n() != model.n()) throw InvalidArgument("mcmc_chain: tracked polynomial has the wrong generator count");
  Chain chain(model, opts, rng, init);
  return chain.run();
}

std::vector<double> tracked_series(const ChainResult& r, std::size_t index) {
  std::vector<double> out;
  out.reserve(r.samples.size());
  for (const auto& s : r.samples) out.push_back(s.tracked.at(index));
  return out;
}

std::vector<double> potential_series(const ChainResult& r) {
  std::vector<double> out;
  out.reserve(r.samples.size());
  for (const auto& s : r.samples) out.push_back(s.trace_potential);
  return out;
}

void write_chain_records(std::ostream& os, const ChainResult& r) {
  for (const auto& s : r.samples) {
    nlohmann::json j;
    j["step"] = s.step;
    auto spectra = nlohmann::json::array();
    for (const auto& ev : s.spectra) spectra.push_back(std::vector<double>(ev.data(), ev.data() + ev.size()));
    j["spectra"] = spectra;
    j["tracked"] = s.tracked;
    j["trace_potential"] = s.trace_potential;
    os << j.dump() << '\n';
  }
  const auto& d = r.diagnostics;
  nlohmann::json summary = {{"summary",
                             {{"acceptance", d.acceptance},
                              {"eigen_acceptance", d.eigen_acceptance},
                              {"rotation_acceptance", d.rotation_acceptance},
                              {"autocorr_time", d.autocorr_time},
                              {"effective_samples", d.effective_samples},
                              {"samples", d.samples}}}};
  os << summary.dump() << '\n';
}

double log_ball_volume(int N, double R) {
  if (N < 1) throw InvalidArgument("log_ball_volume: N must be >= 1");
  if (!(R > 0.0)) throw InvalidArgument("log_ball_volume: R must be positive");
  const double dN = N;
  // Weyl integration: pi^{N(N-1)/2} / prod_{k<=N} k! times the Selberg
  // integral of |Vandermonde|^2 over [-1, 1]^N.
  double v = 0.5 * dN * (dN - 1.0) * std::log(std::numbers::pi);
  for (int k = 1; k <= N; ++k) v -= std::lgamma(k + 1.0);
  v += dN * dN * std::log(2.0);
  for (int j = 0; j < N; ++j) v += 2.0 * std::lgamma(j + 1.0) + std::lgamma(j + 2.0) - std::lgamma(N + j + 1.0);
  return v + dN * dN * std::log(R);
}

ScalarEstimate ball_volume_hit_or_miss(int N, double R, long points, CounterRng& rng) {
  if (N < 1 || !(R > 0.0) || points < 1) throw InvalidArgument("ball_volume_hit_or_miss: need N >= 1, R > 0, points >= 1");
  // Every entry of a matrix in the ball is bounded by R, so the ball sits
  // inside the box of side 2R in each of the N^2 real coordinates.
  long hits = 0;
  Matrix m(N, N);
  Eigen::SelfAdjointEigenSolver<Matrix> es(N);
  for (long s = 0; s < points; ++s) {
    for (int i = 0; i < N; ++i) {
      m(i, i) = rng.uniform(-R, R);
      for (int j = i + 1; j < N; ++j) {
        m(i, j) = cdouble(rng.uniform(-R, R), rng.uniform(-R, R));
        m(j, i) = std::conj(m(i, j));
      }
    }
    es.compute(m, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    hits += std::max(-ev(0), ev(N - 1)) <= R;
  }
  if (hits == 0) throw EstimatorFailure("ball_volume_hit_or_miss: no hits");
  const double p = static_cast<double>(hits) / static_cast<double>(points);
  const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(points)) / p;
  return make_estimate(static_cast<double>(N) * N * std::log(2.0 * R) + std::log(p), se, points);
}

Matrix uniform_ball_matrix(int N, double R, CounterRng& rng) {
  if (N < 1 || N > 3) throw InvalidArgument("uniform_ball_matrix: supported for 1 <= N <= 3");
  // max of prod_{i<j} (x_i - x_j)^2 over [-1, 1]^N.
  static constexpr double kMaxVandermonde[] = {1.0, 1.0, 4.0, 4.0};
  Eigen::VectorXd lam(N);
  for (;;) {
    double v = 1.0;
    for (int i = 0; i < N; ++i) lam(i) = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < N; ++i)
      for (int j = i + 1; j < N; ++j) v *= (lam(i) - lam(j)) * (lam(i) - lam(j));
    if (rng.uniform() * kMaxVandermonde[N] < v) break;
  }
  return reassemble(haar_unitary(N, rng), R * lam);
}

std::vector<double> uniform_beta_grid(double beta, int nodes) {
  if (nodes < 2) throw InvalidArgument("uniform_beta_grid: need at least 2 nodes");
  std::vector<double> g(static_cast<std::size_t>(nodes));
  for (int k = 0; k < nodes; ++k) g[static_cast<std::size_t>(k)] = beta * k / (nodes - 1);
  return g;
}

LogIEstimate estimate_log_I(const GibbsModel& model, const std::vector<double>& beta_grid, const ChainOptions& opts,
                            CounterRng& rng, int threads) {
  LogIEstimate out;
  const double log_vol = model.n() * log_ball_volume(model.N(), model.R());
  const double N = model.N();
  bool constant_only = true;
  double c0 = 0.0;
  for (const auto& [w, c] : model.V().terms()) {
    if (w.is_unit()) c0 = c.real();
    else constant_only = false;
  }
  if (constant_only) {
    out.value = log_vol - model.beta() * N * N * c0;
    out.betas = {0.0, model.beta()};
    out.node_means = {make_estimate(N * N * c0, 0.0, 0), make_estimate(N * N * c0, 0.0, 0)};
    return out;
  }
  if (beta_grid.size() < 2 || beta_grid.front() != 0.0 || std::abs(beta_grid.back() - model.beta()) > 1e-12)
    throw InvalidArgument("estimate_log_I: beta grid must run from 0 to the model beta");
  for (std::size_t k = 1; k < beta_grid.size(); ++k)
    if (!(beta_grid[k] > beta_grid[k - 1])) throw InvalidArgument("estimate_log_I: beta grid must increase");

  ChainOptions node_opts = opts;
  node_opts.tracked.clear();
  node_opts.store_matrices = false;
  const std::size_t K = beta_grid.size();
  std::vector<ScalarEstimate> means(K);
  std::vector<double> acc(K, 1.0);
  parallel_for(static_cast<long>(K), threads, [&](long k) {
    CounterRng r = rng.fork(static_cast<std::uint64_t>(k));
    const ChainResult c = mcmc_chain(model.with_beta(beta_grid[static_cast<std::size_t>(k)]), node_opts, r);
    std::vector<double> e = potential_series(c);
    for (double& x : e) x *= N;
    means[static_cast<std::size_t>(k)] = mean_estimate(e);
    acc[static_cast<std::size_t>(k)] = c.diagnostics.acceptance;
  });
  out.min_acceptance = *std::min_element(acc.begin(), acc.end());
  if (out.min_acceptance < 0.01) {
    throw EstimatorFailure("estimate_log_I: chain acceptance " + std::to_string(out.min_acceptance) + " below 1%");
  }
  double integral = 0.0, var = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double left = k > 0 ? beta_grid[k] - beta_grid[k - 1] : 0.0;
    const double right = k + 1 < K ? beta_grid[k + 1] - beta_grid[k] : 0.0;
    const double w = 0.5 * (left + right);
    integral += w * means[k].value;
    var += w * w * means[k].std_error * means[k].std_error;
  }
  double max_second = 0.0;
  for (std::size_t k = 1; k + 1 < K; ++k)
    max_second = std::max(max_second, std::abs(means[k + 1].value - 2.0 * means[k].value + means[k - 1].value));
  out.value = log_vol - integral;
  out.std_error = std::sqrt(var);
  out.discretization_bound = model.beta() / 12.0 * max_second;
  out.betas = beta_grid;
  out.node_means = std::move(means);
  return out;
}

ScalarEstimate gibbs_entropy(const GibbsModel& model, const ScalarEstimate& logI, const ChainResult& chain) {
  const ScalarEstimate e = mean_estimate(potential_series(chain));
  const double scale = model.beta() * model.N();
  return make_estimate(logI.value + scale * e.value, combine_stderr(logI.std_error, scale * e.std_error), e.count);
}

HitRateEstimate microstate_hit_rate(const MomentSpec& tau, double eps, int K, int N, long sample_budget,
                                    CounterRng& rng) {
  if (!(eps > 0.0)) throw InvalidArgument("microstate_hit_rate: eps must be positive");
  if (tau.K() < K) throw InvalidArgument("microstate_hit_rate: target truncated below K");
  if (sample_budget < 10) throw InvalidArgument("microstate_hit_rate: budget too small");
  const int n = tau.n();
  const GibbsModel uniform = GibbsModel::uniform(n, N, tau.R());
  ChainOptions opts;
  opts.burnin = std::max<long>(200, sample_budget / 10);
  opts.steps = opts.burnin + sample_budget;
  opts.store_matrices = n > 1;
  const ChainResult c = mcmc_chain(uniform, opts, rng);

  HitRateEstimate out;
  std::vector<double> hit;
  hit.reserve(c.samples.size());
  for (const auto& s : c.samples) {
    const MomentSpec m = n == 1 ? spectral_moments(s.spectra.front(), K, tau.R()) : empirical_moments(*s.tuple, K);
    const bool h = moment_distance(m, tau, K) < eps;
    hit.push_back(h ? 1.0 : 0.0);
    out.hits += h;
  }
  out.samples = static_cast<long>(hit.size());
  out.probability = mean_estimate(hit);
  if (out.hits == 0) return out;
  const double p = out.probability.value;
  const double log_vol = n * log_ball_volume(N, tau.R());
  // A constant hit series has zero variance; fall back to the binomial error.
  double se = out.probability.std_error;
  if (se == 0.0 && p < 1.0) se = std::sqrt(p * (1.0 - p) / static_cast<double>(out.samples));
  out.log_volume = make_estimate(log_vol + std::log(p), se / p, out.samples);
  return out;
}

}  // namespace freeent
