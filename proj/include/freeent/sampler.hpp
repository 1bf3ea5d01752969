#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "freeent/matrix.hpp"
#include "freeent/moments.hpp"
#include "freeent/ncpoly.hpp"
#include "freeent/rng.hpp"
#include "freeent/stats.hpp"

namespace freeent {

/// Density proportional to exp(-beta * N * Tr V(M_1, ..., M_n)) on the
/// product of operator-norm balls (H_N^R)^n, with Tr unnormalized.
class GibbsModel {
 public:
  GibbsModel(int n, int N, double R, NcPoly V, double beta = 1.0);

  /// The uniform measure on the ball (V = 0).
  static GibbsModel uniform(int n, int N, double R);

  [[nodiscard]] int n() const { return n_; }
  [[nodiscard]] int N() const { return N_; }
  [[nodiscard]] double R() const { return R_; }
  [[nodiscard]] double beta() const { return beta_; }
  [[nodiscard]] const NcPoly& V() const { return V_; }
  [[nodiscard]] bool separable() const { return separable_; }

  [[nodiscard]] GibbsModel with_beta(double beta) const;

  /// Tr V(M), real part.
  [[nodiscard]] double trace_potential(const MatrixTuple& t) const;

 private:
  int n_, N_;
  double R_;
  NcPoly V_;
  double beta_;
  bool separable_;
};

enum class Kernel {
  /// Eigenvalue random walk plus Givens rotations of the eigenvectors.
  Spectral,
  /// Gaussian Hermitian increments on whole blocks.
  FullMatrix,
};

/// Chain state for warm starts: spectra and eigenvectors per block.
struct ChainState {
  std::vector<Eigen::VectorXd> eigenvalues;
  std::vector<Matrix> eigenvectors;
  double eigen_step = 0.0;
  double rotation_step = 0.0;
  double matrix_step = 0.0;
};

struct ChainOptions {
  /// Total sweeps including burn-in.
  long steps = 4000;
  long burnin = 1000;
  long thin = 1;
  /// Multiplies the initial proposal widths.
  double step_scale = 1.0;
  Kernel kernel = Kernel::Spectral;
  /// Adapt proposal widths during burn-in only.
  bool tune = true;
  double target_acceptance = 0.375;
  /// Keep the full matrix tuple of every retained sample.
  bool store_matrices = false;
  /// Polynomials whose (1/N) Re Tr is recorded for each retained sample.
  std::vector<NcPoly> tracked;
};

struct ChainSample {
  long step = 0;
  /// Ascending spectrum per block.
  std::vector<Eigen::VectorXd> spectra;
  /// Tr V at this sample (model potential, unnormalized trace).
  double trace_potential = 0.0;
  std::vector<double> tracked;
  std::optional<MatrixTuple> tuple;
};

struct ChainDiagnostics {
  double acceptance = 0.0;
  double eigen_acceptance = 0.0;
  double rotation_acceptance = 0.0;
  double autocorr_time = 1.0;
  double effective_samples = 0.0;
  long samples = 0;
};

struct ChainResult {
  std::vector<ChainSample> samples;
  ChainDiagnostics diagnostics;
  ChainState final_state;
};

/// Metropolis sampler for the model. Proposals leaving the norm ball are
/// rejected. With the spectral kernel and a block-separable potential the
/// eigenvectors never enter the energy; emitted matrices then use fresh
/// Haar eigenvectors, which is exact.
ChainResult mcmc_chain(const GibbsModel& model, const ChainOptions& opts, CounterRng& rng,
                       const ChainState* init = nullptr);

/// Series of one tracked value across the retained samples.
std::vector<double> tracked_series(const ChainResult& r, std::size_t index);
std::vector<double> potential_series(const ChainResult& r);

/// Writes one JSON line per retained sample (step, spectra, tracked) and a
/// final summary line with the diagnostics.
void write_chain_records(std::ostream& os, const ChainResult& r);

/// log Leb{M in H_N : ||M|| <= R}, with dM the product of the diagonal
/// entries and the real and imaginary parts above the diagonal.
double log_ball_volume(int N, double R);

/// Hit-or-miss estimate of log_ball_volume from uniform points in the
/// enclosing box of entries; the standard error is that of the log.
ScalarEstimate ball_volume_hit_or_miss(int N, double R, long points, CounterRng& rng);

/// Exact draw from the uniform measure on H_N^R by rejection on the
/// eigenvalue density. Supported for N <= 3.
Matrix uniform_ball_matrix(int N, double R, CounterRng& rng);

struct LogIEstimate {
  double value = 0.0;
  double std_error = 0.0;
  /// Trapezoid error heuristic: beta/12 * max |second difference|.
  double discretization_bound = 0.0;
  std::vector<double> betas;
  /// E_beta[N Tr V] at each node.
  std::vector<ScalarEstimate> node_means;
  double min_acceptance = 1.0;

  [[nodiscard]] ScalarEstimate estimate() const { return make_estimate(value, std_error, 0); }
};

/// Uniform grid of `nodes` points on [0, beta].
std::vector<double> uniform_beta_grid(double beta, int nodes = 21);

/// log I(beta) = log Leb((H_N^R)^n) - int_0^beta E_b[N Tr V] db, trapezoid
/// rule over the grid, one independent chain per node. Throws
/// EstimatorFailure when some chain accepts fewer than 1% of proposals.
LogIEstimate estimate_log_I(const GibbsModel& model, const std::vector<double>& beta_grid,
                            const ChainOptions& opts, CounterRng& rng, int threads = 1);

/// Ent = log I + beta * N * E[Tr V].
ScalarEstimate gibbs_entropy(const GibbsModel& model, const ScalarEstimate& logI, const ChainResult& chain);

struct HitRateEstimate {
  /// Missing when no sample hit the neighborhood.
  std::optional<ScalarEstimate> log_volume;
  long hits = 0;
  long samples = 0;
  ScalarEstimate probability;
};

/// log Leb(Gamma_R(tau, eps, K, N)) from hit counting under the uniform
/// chain at radius tau.R().
HitRateEstimate microstate_hit_rate(const MomentSpec& tau, double eps, int K, int N, long sample_budget,
                                    CounterRng& rng);

}  // namespace freeent
