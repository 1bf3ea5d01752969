#pragma once

#include <optional>
#include <string>
#include <vector>

#include "freeent/moments.hpp"
#include "freeent/sampler.hpp"

namespace freeent {

/// Coordinates for self-adjoint potentials of degree <= K modulo trace
/// equivalence: per canonical class w, the real part (w + w^*)/2 and, for
/// classes that are not reversal-symmetric, the imaginary part
/// (w - w^*)/(2i).
struct DualElement {
  Word word;
  bool imaginary = false;
  NcPoly poly;
};

class DualBasis {
 public:
  DualBasis(int n, int K);

  [[nodiscard]] int n() const { return n_; }
  [[nodiscard]] int K() const { return K_; }
  [[nodiscard]] int size() const { return static_cast<int>(elements_.size()); }
  [[nodiscard]] const std::vector<DualElement>& elements() const { return elements_; }
  [[nodiscard]] const DualElement& operator[](int j) const { return elements_[static_cast<std::size_t>(j)]; }
  [[nodiscard]] std::vector<NcPoly> polys() const;

  /// tau(b_j) for every element (real by construction).
  [[nodiscard]] Eigen::VectorXd values(const MomentSpec& tau) const;
  /// sum_j lambda_j b_j.
  [[nodiscard]] NcPoly potential(const Eigen::VectorXd& lambda) const;
  /// Coordinates of a self-adjoint P of degree <= K, constant term dropped.
  [[nodiscard]] Eigen::VectorXd coordinates(const NcPoly& P) const;
  /// Natural scale R^{deg(b_j)} of each coordinate.
  [[nodiscard]] Eigen::VectorXd scales(double R) const;

 private:
  int n_, K_;
  std::vector<DualElement> elements_;
};

DualBasis build_dual_basis(int n, int K);

/// Chain and integration budgets shared by the estimators below.
struct EstimatorBudget {
  ChainOptions chain;
  int ti_nodes = 21;
  int threads = 1;
};

/// F_eps(lambda) = log I_N(P_lambda) + N^2 (tau(P_lambda) + eps ||lambda||_1).
ScalarEstimate dual_objective(const Eigen::VectorXd& lambda, const DualBasis& basis, const MomentSpec& tau, double eps,
                              int N, double R, const EstimatorBudget& budget, CounterRng& rng);

struct FitOptions {
  int max_iterations = 14;
  /// Sweeps per iteration; grows geometrically up to max_chain_steps.
  long chain_steps = 3000;
  long chain_burnin = 1000;
  /// Burn-in for warm-started iterations after the first.
  long warm_burnin = 300;
  double growth = 1.3;
  long max_chain_steps = 30000;
  /// Final chain at the averaged coefficients.
  long final_steps = 40000;
  long final_burnin = 2000;
  /// Per-node chain for the log-partition estimate.
  long ti_steps = 8000;
  long ti_burnin = 1000;
  int ti_nodes = 21;
  /// Convergence: max(|residual_j| - eps, 0) <= tol_scale * R^{deg_j}.
  double tol_scale = 0.01;
  /// Newton steps satisfy d^T H d <= trust_radius^2 (H in per-N^2 units).
  double trust_radius = 2.0;
  /// and |d_j| R^{deg_j} <= step_cap.
  double step_cap = 4.0;
  /// max_j |lambda_j| R^{deg_j} beyond this is reported as infeasible.
  double divergence_bound = 60.0;
  double ridge = 1e-9;
  int threads = 1;
  /// Skip the log-partition estimate (rho and dual stay unset).
  bool skip_entropy = false;
  Kernel kernel = Kernel::Spectral;
  std::optional<Eigen::VectorXd> initial_lambda;
};

enum class FitStatus { Converged, BudgetExhausted, Infeasible };

std::string to_string(FitStatus s);

struct FitIteration {
  int iteration = 0;
  double max_excess_residual = 0.0;
  double newton_decrement = 0.0;
  double trust_radius = 0.0;
  double acceptance = 0.0;
  bool truncated = false;
};

struct FitResult {
  FitStatus status = FitStatus::BudgetExhausted;
  std::string message;
  int n = 0, N = 0, K = 0;
  double R = 0.0, eps = 0.0;
  Eigen::VectorXd lambda;
  /// N-normalized potential sum_j lambda_j b_j.
  NcPoly potential;
  Eigen::VectorXd targets;
  Eigen::VectorXd model_moments;
  Eigen::VectorXd moment_stderr;
  /// targets - model moments.
  Eigen::VectorXd residuals;
  ScalarEstimate logI;
  double discretization_bound = 0.0;
  /// Entropy of the fitted model (the primal value).
  ScalarEstimate rho;
  ScalarEstimate dual_value;
  /// dual - primal and its standard error.
  double gap = 0.0;
  double gap_stderr = 0.0;
  ChainDiagnostics final_diagnostics;
  std::vector<FitIteration> trajectory;
};

/// Fits the maximum-entropy model with moments in the eps-box around tau by
/// stochastic proximal Newton on the dual, then estimates its entropy.
/// Infeasible targets come back with status Infeasible, not an exception.
FitResult fit_projection(const MomentSpec& tau, int N, int K, double R, double eps, const FitOptions& opts,
                         CounterRng& rng);

struct RhoEstimate {
  FitStatus status = FitStatus::BudgetExhausted;
  ScalarEstimate primal;
  ScalarEstimate dual;
  double gap = 0.0;
  double gap_stderr = 0.0;
  [[nodiscard]] bool feasible() const { return status != FitStatus::Infeasible; }
};

/// rho_{N,K} relaxed to the eps-neighborhood; throws InfeasibleTarget when
/// the fit diverges.
RhoEstimate rho(const MomentSpec& tau, int N, int K, double R, double eps, const FitOptions& opts, CounterRng& rng);

struct CurvePoint {
  int N = 0;
  double value = 0.0;
  double std_error = 0.0;
  FitStatus status = FitStatus::BudgetExhausted;
};

/// (1/N^2) rho_{N,K,eps}(tau) + (n/2) log N for each N; reported raw.
std::vector<CurvePoint> chi_tilde_curve(const MomentSpec& tau, const std::vector<int>& N_list, int K, double R,
                                        double eps, const FitOptions& opts, CounterRng& rng);

/// (1/N^2) log I_N(P) + (n/2) log N.
ScalarEstimate free_pressure(const NcPoly& P, int N, double R, const EstimatorBudget& budget, CounterRng& rng);

struct EtaBoundReport {
  double lhs = 0.0;  ///< (1/N^2) rho + (n/2) log N
  double rhs = 0.0;  ///< tau(P) + eps ||P||_1 + free pressure
  double combined_stderr = 0.0;
  bool holds = false;
};

/// Checks lhs <= rhs + 3 * combined stderr for a potential P of degree <= K.
/// `rho_value` is the estimate to test, typically from rho().
EtaBoundReport eta_bound_check(const MomentSpec& tau, const NcPoly& P, const ScalarEstimate& rho_value, int N, int K,
                               double R, double eps, const EstimatorBudget& budget, CounterRng& rng);

}  // namespace freeent
