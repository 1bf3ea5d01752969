#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "freeent/matrix.hpp"
#include "freeent/sampler.hpp"
#include "freeent/stats.hpp"

namespace freeent {

/// Constraint E[x^power] = target for the scalar maxent oracle.
struct MomentConstraint {
  int power = 1;
  double target = 0.0;
};

struct MaxentResult {
  /// Differential entropy of the grid optimizer (discrete entropy + log h).
  double entropy = 0.0;
  double dual = 0.0;
  /// |dual - entropy|
  double gap = 0.0;
  /// Density proportional to exp(-sum_k lambda_k x^{p_k}).
  Eigen::VectorXd lambda;
  Eigen::VectorXd grid;
  /// Density values at the grid midpoints (integrates to 1).
  Eigen::VectorXd density;
  int iterations = 0;
  bool converged = false;
};

/// Dense-grid maximum entropy on [-R, R] subject to power-moment constraints,
/// by Newton's method on the dual. Throws InfeasibleTarget when the
/// constraints cannot be met on the grid.
MaxentResult scalar_maxent_oracle(const std::vector<MomentConstraint>& constraints, double R, int grid_size = 20000);

/// Piecewise-uniform probability density: masses[i] spread over
/// [edges[i], edges[i+1]].
struct ScalarDensity {
  std::vector<double> edges;
  std::vector<double> masses;

  static ScalarDensity from_cdf(const std::function<double(double)>& cdf, std::vector<double> edges);
  /// Midpoint masses pdf(mid) * width; not renormalized.
  static ScalarDensity from_pdf(const std::function<double(double)>& pdf, double lo, double hi, int cells);
  /// Semicircle of the given variance on a grid refined near the edges.
  static ScalarDensity semicircle(double variance = 1.0, int cells = 2000);
  /// Arcsine on [-R, R] on a grid refined near the edges.
  static ScalarDensity arcsine(double R, int cells = 2000);

  [[nodiscard]] double total_mass() const;
  [[nodiscard]] ScalarDensity dilated(double s) const;
  [[nodiscard]] double moment(int k) const;
};

/// Edges R sin(theta) for theta uniform on [-pi/2, pi/2].
std::vector<double> sine_edges(double R, int cells);

/// Double logarithmic energy  int int log|s - t| dmu(s) dmu(t), exact for the
/// piecewise-uniform density.
double log_energy(const ScalarDensity& d);

/// Universal constant of the one-variable reference, calibrated from the
/// exact large-N limit of the uniform-ball entropy curve at R = 2, whose
/// limiting spectral law (arcsine on [-2, 2]) has zero log-energy.
double chi_reference_constant();

/// log-energy + chi_reference_constant(). Throws InvalidArgument when the
/// density does not integrate to 1.
double one_variable_chi_reference(const ScalarDensity& d);

/// Differential entropy of the normalized density exp(log_density) on
/// [lo, hi] by midpoint quadrature.
double scalar_entropy_quadrature(const std::function<double(double)>& log_density, double lo, double hi,
                                 int cells = 200000);

/// Cell masses of exp(-V(x, y)) normalized over the M x M midpoint grid of [-R, R]^2.
Eigen::MatrixXd gibbs_grid_2d(const std::function<double(double, double)>& V, double R, int M);

/// Relative entropy -sum p log(p / q) of two mass arrays of the same shape (<= 0).
double relative_entropy(const Eigen::ArrayXXd& p, const Eigen::ArrayXXd& q);

struct DataProcessingReport {
  double joint = 0.0;      ///< Ent(mu | nu)
  double projected = 0.0;  ///< Ent(T mu | T nu) for T the first coordinate
  [[nodiscard]] bool holds(double slack = 0.0) const { return projected >= joint - slack; }
};

DataProcessingReport data_processing_check(const std::function<double(double, double)>& V_mu,
                                           const std::function<double(double, double)>& V_nu, double R, int M = 400);

struct PartitionBound {
  double lhs = 0.0;
  double rhs = 0.0;
};

/// Ent(mu) against mu(F) log Leb(F) + mu(F^c) log Leb(F^c) + H(mu(F)) for
/// cell masses on the uniform midpoint grid of [-R, R] and a cell mask F.
PartitionBound partition_bound(const Eigen::VectorXd& masses, const std::vector<bool>& in_F, double R);

/// Relative version: Ent(mu | nu) against mu(F) log nu(F) + ... + H(mu(F)).
PartitionBound relative_partition_bound(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu,
                                        const std::vector<bool>& in_F);

struct ScalarCompressionReport {
  double entropy = 0.0;         ///< Ent(mu)
  double pushed_entropy = 0.0;  ///< Ent(g_* mu) by quadrature on [-R, R]
  double mean_log_derivative = 0.0;  ///< E_mu[log g']
  [[nodiscard]] double discrepancy() const { return pushed_entropy - entropy - mean_log_derivative; }
};

/// One-dimensional entropy change under the compression g for the density
/// proportional to exp(log_density) on [-T, T], every term by quadrature.
ScalarCompressionReport scalar_compression_check(const CompressionFn& g,
                                                 const std::function<double(double)>& log_density,
                                                 int cells = 200000);

struct CompressionReport {
  /// E_mu[log Jacobian of G] for mu uniform on the T-ball.
  ScalarEstimate formula;
  /// Ent(G_* mu) - Ent(mu) by self-normalized importance sampling from the
  /// uniform R-ball, where the pushed density is 1 / (Leb * Jacobian).
  ScalarEstimate direct;
  double max_abs_log_jacobian = 0.0;
  double jacobian_bound = 0.0;  ///< N^2 |log alpha|
  bool bound_holds = true;
  double importance_ess = 0.0;
  [[nodiscard]] double combined_stderr() const { return combine_stderr(formula.std_error, direct.std_error); }
  [[nodiscard]] bool matches(double k = 3.0) const {
    return std::abs(formula.value - direct.value) <= k * combined_stderr();
  }
};

/// Sum of log dg(l_i, l_j) over all pairs of eigenvalues.
double log_jacobian_from_spectrum(const Eigen::VectorXd& spectrum, const CompressionFn& g);

CompressionReport compression_check(const CompressionFn& g, int N, const ChainOptions& chain, CounterRng& rng);

}  // namespace freeent
