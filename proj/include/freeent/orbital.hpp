#pragma once

#include <optional>
#include <vector>

#include "freeent/matrix.hpp"
#include "freeent/moments.hpp"
#include "freeent/sampler.hpp"

namespace freeent {

/// log of the Haar integral  int exp(t Tr(A U B U^*)) dU  for Hermitian A, B
/// with spectra a, b (HCIZ determinant formula, evaluated in extended
/// precision). Throws EstimatorFailure when the determinant loses its sign
/// to rounding and InvalidArgument for repeated eigenvalues.
double log_hciz(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double t);

/// Below this value of |t| max|a| max|b| log_hciz sums a divided-difference
/// series instead of the determinant ratio.
inline double kHcizSeriesLimit = 6.0;

enum class InnerMethod {
  /// Exact when available, Monte Carlo otherwise.
  Auto,
  MonteCarlo,
  /// Closed form for two separately conjugated blocks whose only mixed
  /// terms are X1X2 and X2X1.
  Exact,
};

/// True when the exact inner integral applies to (V, pi).
bool exact_inner_available(const GibbsModel& model, const BlockMap& pi);

struct OrbitalRequest {
  GibbsModel model;
  BlockMap pi;
  int S_out = 400;
  int S_in = 256;
  /// Chain used to draw the outer samples; steps is derived from S_out.
  ChainOptions chain;
  /// Generators kept for a marginal estimate; empty keeps all. Dropped
  /// generators are integrated out by uniform-ball importance sampling
  /// (N <= 3 only).
  std::vector<bool> keep;
  int threads = 1;
  InnerMethod inner = InnerMethod::Auto;
};

struct OrbitalEstimate {
  /// Ent(mu | U^pi mu), <= 0 in expectation.
  double value = 0.0;
  double std_error = 0.0;
  /// Mean jackknife correction of the inner log-mean-exp.
  double bias_bound = 0.0;
  /// Estimate from the first half of the inner draws.
  double half_inner_value = 0.0;
  /// |value - half_inner_value| within the half-budget bias bound + 3 stderr.
  bool doubling_consistent = true;
  int S_out = 0, S_in = 0;
  /// Whether the inner integral was evaluated exactly (S_in unused).
  bool exact_inner = false;
  ChainDiagnostics diagnostics;

  [[nodiscard]] ScalarEstimate estimate() const { return make_estimate(value, std_error, S_out); }
  /// Conventional KL divergence, -value.
  [[nodiscard]] double kl() const { return -value; }
};

/// Nested Monte Carlo: -E_mu[log f(M) - log E_U f(U^pi M)] with the inner
/// expectation over S_in Haar draws per outer sample. Throws
/// EstimatorFailure when every inner weight underflows.
OrbitalEstimate orbital_entropy(const OrbitalRequest& req, CounterRng& rng);

struct ChainRuleReport {
  ScalarEstimate joint;     ///< Ent(mu | nu), nu uniform on the ball
  ScalarEstimate orbital;   ///< Ent(mu | U^pi mu)
  ScalarEstimate averaged;  ///< Ent(U^pi mu | nu)
  double residual = 0.0;    ///< joint - orbital - averaged
  /// Standard error of the residual; the shared log I cancels.
  double residual_stderr = 0.0;
  /// Inner jackknife corrections; the identity itself is unaffected since
  /// the inner average is U^pi-invariant.
  double bias_bound = 0.0;
  bool exact_inner = false;
  ScalarEstimate logI;
  double log_volume = 0.0;  ///< n log Leb(H_N^R)
  [[nodiscard]] bool holds(double k = 3.0) const { return std::abs(residual) <= k * residual_stderr; }
};

struct ChainRuleBudget {
  int S_out = 400;
  int S_in = 256;
  ChainOptions chain;
  /// Per-node chain for log I.
  ChainOptions ti_chain;
  int ti_nodes = 21;
  int threads = 1;
  InnerMethod inner = InnerMethod::Auto;
};

/// Three independent estimates of the terms of
/// Ent(mu|nu) = Ent(mu|U^pi mu) + Ent(U^pi mu|nu).
ChainRuleReport chain_rule_check(const GibbsModel& model, const BlockMap& pi, const ChainRuleBudget& budget,
                                 CounterRng& rng);

struct EntropySplitReport {
  ChainRuleReport terms;
  ScalarEstimate entropy;           ///< Ent(mu)
  ScalarEstimate averaged_entropy;  ///< Ent(U mu)
  [[nodiscard]] bool holds(double k = 3.0) const { return terms.holds(k); }
};

/// Ent(mu) = Ent(mu | U mu) + Ent(U mu) with U the blockwise conjugation.
EntropySplitReport entropy_split_check(const GibbsModel& model, const ChainRuleBudget& budget, CounterRng& rng);

/// sqrt(E sum_i (1/N) ||M_i - M'_i||_HS^2) over paired tuples, an upper
/// bound on the 2-Wasserstein distance of the two laws.
ScalarEstimate dW_upper_bound(const std::vector<std::pair<MatrixTuple, MatrixTuple>>& pairs);

/// max over classes of degree <= K of |a(m) - b(m)| / (deg R^{deg-1} sqrt(n P)),
/// a lower bound on the 2-Wasserstein distance; P is the largest group size.
double dW_moment_lower_bound(const MomentSpec& a, const MomentSpec& b, int K, double R, int max_group_size = 1);

struct MomentEstimate {
  MomentSpec mean;
  /// Standard error of each stored class value (absolute, complex).
  std::map<Word, double> std_error;
};

/// Sample-average moments of a list of tuples, with i.i.d. standard errors.
MomentEstimate average_moments(const std::vector<MatrixTuple>& tuples, int K);

struct TalagrandBudget {
  int K = 4;
  int S_out = 400;
  int S_in = 256;
  ChainOptions chain;
  int threads = 1;
  InnerMethod inner = InnerMethod::Auto;
};

struct TalagrandReport {
  OrbitalEstimate orbital;
  /// Moment lower bound on d_W(tau_mu, free product of its marginals).
  double lhs_free_product = 0.0;
  /// Same against the moments of U^pi-randomized samples.
  double lhs_randomized = 0.0;
  double lhs_stderr = 0.0;
  /// 4 R sqrt(P max(0, -(orbital - 3 stderr)) / N^2).
  double rhs = 0.0;
  double slack = 0.0;
  /// moment_distance between the randomized moments and the free product.
  double freeness_gap = 0.0;
  int max_group_size = 1;
  [[nodiscard]] bool holds() const {
    return std::max(lhs_free_product, lhs_randomized) <= rhs + 3.0 * lhs_stderr;
  }
};

TalagrandReport talagrand_report(const GibbsModel& model, const BlockMap& pi, const TalagrandBudget& budget,
                                 CounterRng& rng);

/// moment_distance(moments of U^pi-randomized samples, free product of the
/// group marginals, K), each sample randomized independently several times.
double freeness_gap(const GibbsModel& model, const BlockMap& pi, int K, int samples, const ChainOptions& chain,
                    CounterRng& rng, int randomizations = 8);

}  // namespace freeent
