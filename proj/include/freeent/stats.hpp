#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace freeent {

/// A Monte Carlo output: value, standard error, and the number of samples
/// that went into it.
struct ScalarEstimate {
  double value = 0.0;
  double std_error = 0.0;
  long count = 0;
};

ScalarEstimate make_estimate(double value, double std_error, long count);

/// sqrt(a^2 + b^2), the usual independent-error combination.
double combine_stderr(double a, double b);

double mean(std::span<const double> xs);

/// Unbiased sample variance; 0 for fewer than two points.
double variance(std::span<const double> xs);

/// Integrated autocorrelation time with Sokal's self-consistent window
/// (window M is the smallest with M >= c * tau(M)). Returns 1 for series
/// that are constant or too short to say anything.
double integrated_autocorr_time(std::span<const double> xs, double window_c = 5.0);

/// Mean with a standard error inflated by the integrated autocorrelation
/// time of the series.
ScalarEstimate mean_estimate(std::span<const double> xs);

/// Mean with the naive i.i.d. standard error.
ScalarEstimate mean_estimate_iid(std::span<const double> xs);

/// Sample covariance of the columns of `rows` (one row per sample).
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& rows);

/// log((1/n) sum exp(x_i)) with max-shift.
double log_mean_exp(std::span<const double> xs);

/// Jackknife-corrected log-mean-exp and the size of the correction.
struct JackknifeLme {
  double raw = 0.0;        ///< plain log-mean-exp
  double corrected = 0.0;  ///< n*raw - (n-1)*mean(leave-one-out)
  double bias = 0.0;       ///< corrected - raw (estimated downward bias of raw)
};

JackknifeLme jackknife_log_mean_exp(std::span<const double> xs);

}  // namespace freeent
