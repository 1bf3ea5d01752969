#pragma once

#include <complex>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "freeent/rng.hpp"

namespace freeent {

using cdouble = std::complex<double>;
using Matrix = Eigen::MatrixXcd;

inline constexpr double kHermitianTol = 1e-12;
inline constexpr double kNormTol = 1e-9;

/// An n-tuple of N x N Hermitian matrices inside the operator-norm ball of
/// radius R. The checked constructor enforces both invariants.
class MatrixTuple {
 public:
  MatrixTuple(std::vector<Matrix> blocks, double R);

  /// Skips the Hermitian and norm checks. For samplers that maintain the
  /// invariants themselves.
  static MatrixTuple unchecked(std::vector<Matrix> blocks, double R);

  [[nodiscard]] int n() const { return static_cast<int>(blocks_.size()); }
  [[nodiscard]] int N() const { return blocks_.empty() ? 0 : static_cast<int>(blocks_.front().rows()); }
  [[nodiscard]] double R() const { return R_; }
  [[nodiscard]] const Matrix& operator[](int i) const { return blocks_[static_cast<std::size_t>(i)]; }
  [[nodiscard]] const std::vector<Matrix>& blocks() const { return blocks_; }

 private:
  MatrixTuple() = default;
  std::vector<Matrix> blocks_;
  double R_ = 0.0;
};

/// Surjective assignment of blocks to conjugation groups. Stored 0-based;
/// from_groups() accepts the 1-based labels used in configs.
class BlockMap {
 public:
  explicit BlockMap(std::vector<int> group_of_block);

  static BlockMap from_groups(const std::vector<int>& one_based);
  /// A single group: the global conjugation U^G.
  static BlockMap global(int n);
  /// One group per block: the full blockwise conjugation U.
  static BlockMap full(int n);

  [[nodiscard]] int blocks() const { return static_cast<int>(group_.size()); }
  [[nodiscard]] int groups() const { return groups_; }
  [[nodiscard]] int group_of(int block) const { return group_[static_cast<std::size_t>(block)]; }
  [[nodiscard]] std::vector<int> members(int group) const;
  /// Largest number of blocks sharing one group.
  [[nodiscard]] int max_group_size() const;
  [[nodiscard]] const std::vector<int>& assignment() const { return group_; }

 private:
  std::vector<int> group_;
  int groups_ = 0;
};

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the
/// phases of R's diagonal pushed into Q.
Matrix haar_unitary(int N, CounterRng& rng);

/// Block i becomes U_{pi(i)} M_i U_{pi(i)}^*.
MatrixTuple conjugate_tuple(const MatrixTuple& t, std::span<const Matrix> us, const BlockMap& pi);

/// Largest absolute eigenvalue of a Hermitian matrix.
double operator_norm(const Matrix& m);

/// Eigenvalues (ascending) of a Hermitian matrix.
Eigen::VectorXd hermitian_eigenvalues(const Matrix& m);

/// f applied to the spectrum of a Hermitian matrix.
Matrix apply_scalar_function(const Matrix& m, const std::function<double(double)>& f);

/// Random Hermitian matrix with i.i.d. N(0,1) diagonal and N(0,1/2)
/// real/imaginary off-diagonal parts (Tr G^2 has chi-square N^2 law).
Matrix gaussian_hermitian(int N, CounterRng& rng);

/// Piecewise-linear-derivative norm compression g: [-T, T] -> [-R, R].
/// h = g' equals alpha on |t| >= R, 1 on |t| <= S, and interpolates
/// linearly in between; g(t) = -R + int_{-T}^t h. Outside [-T, T] the map
/// continues with slope alpha.
class CompressionFn {
 public:
  CompressionFn(double T, double R, double S);

  [[nodiscard]] double T() const { return T_; }
  [[nodiscard]] double R() const { return R_; }
  [[nodiscard]] double S() const { return S_; }
  [[nodiscard]] double alpha() const { return alpha_; }

  [[nodiscard]] double operator()(double t) const;
  /// h(t) = g'(t).
  [[nodiscard]] double derivative(double t) const;
  /// (g(a) - g(b)) / (a - b), with g'(a) when |a - b| < 1e-10.
  [[nodiscard]] double divided_difference(double a, double b) const;
  /// Inverse on [-R, R] (bisection on the monotone map).
  [[nodiscard]] double inverse(double y) const;

 private:
  double T_, R_, S_, alpha_;
};

CompressionFn build_compression(double T, double R, double S);

/// sum_{i,j} log dg(lambda_i, lambda_j): the log-Jacobian of X -> g(X) on
/// H_N with respect to Lebesgue measure.
double log_jacobian_functional_calculus(const Matrix& m, const CompressionFn& g);

void to_json(nlohmann::json& j, const MatrixTuple& t);
MatrixTuple matrix_tuple_from_json(const nlohmann::json& j);

}  // namespace freeent
