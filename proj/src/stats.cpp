#include "freeent/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace freeent {

ScalarEstimate make_estimate(double value, double std_error, long count) {
  ScalarEstimate e;
  e.value = value;
  e.std_error = std_error < 0.0 ? 0.0 : std_error;
  e.count = count;
  return e;
}

double combine_stderr(double a, double b) { return std::hypot(a, b); }

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(n - 1);
}

double integrated_autocorr_time(std::span<const double> xs, double window_c) {
  const std::size_t n = xs.size();
  if (n < 8) return 1.0;
  const double m = mean(xs);
  double c0 = 0.0;
  for (double x : xs) c0 += (x - m) * (x - m);
  c0 /= static_cast<double>(n);
  if (!(c0 > 1e-300)) return 1.0;

  double tau = 1.0;
  const std::size_t max_lag = n / 4;
  for (std::size_t lag = 1; lag < max_lag; ++lag) {
    double c = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) c += (xs[i] - m) * (xs[i + lag] - m);
    c /= static_cast<double>(n);
    tau += 2.0 * c / c0;
    if (static_cast<double>(lag) >= window_c * tau) break;
  }
  return std::max(tau, 1.0);
}

ScalarEstimate mean_estimate(std::span<const double> xs) {
  const auto n = static_cast<long>(xs.size());
  if (n == 0) return make_estimate(0.0, 0.0, 0);
  const double tau = integrated_autocorr_time(xs);
  const double se = std::sqrt(variance(xs) * tau / static_cast<double>(n));
  return make_estimate(mean(xs), se, n);
}

ScalarEstimate mean_estimate_iid(std::span<const double> xs) {
  const auto n = static_cast<long>(xs.size());
  if (n == 0) return make_estimate(0.0, 0.0, 0);
  return make_estimate(mean(xs), std::sqrt(variance(xs) / static_cast<double>(n)), n);
}

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& rows) {
  const Eigen::Index n = rows.rows();
  if (n < 2) return Eigen::MatrixXd::Zero(rows.cols(), rows.cols());
  const Eigen::RowVectorXd mu = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - mu;
  return (centered.transpose() * centered) / static_cast<double>(n - 1);
}

double log_mean_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s / static_cast<double>(xs.size()));
}

JackknifeLme jackknife_log_mean_exp(std::span<const double> xs) {
  JackknifeLme out;
  const std::size_t n = xs.size();
  out.raw = log_mean_exp(xs);
  out.corrected = out.raw;
  if (n < 2 || !std::isfinite(out.raw)) return out;

  const double mx = *std::max_element(xs.begin(), xs.end());
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::exp(xs[i] - mx);
    total += w[i];
  }
  double loo_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double rest = total - w[i];
    // Leaving out the only non-negligible weight: fall back to the raw value
    // for that replicate rather than taking log(0).
    const double loo = rest > 0.0 ? mx + std::log(rest / static_cast<double>(n - 1)) : out.raw;
    loo_sum += loo;
  }
  const double nn = static_cast<double>(n);
  out.corrected = nn * out.raw - (nn - 1.0) * (loo_sum / nn);
  out.bias = out.corrected - out.raw;
  return out;
}

}  // namespace freeent
