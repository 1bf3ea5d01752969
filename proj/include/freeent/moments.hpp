#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "freeent/ncpoly.hpp"

namespace freeent {

/// Truncated trace state: tau(m) for every monomial of degree <= K, stored
/// once per canonical class (rotation + reversal).
class MomentSpec {
 public:
  MomentSpec(int n, int K, double R);

  [[nodiscard]] int n() const { return n_; }
  [[nodiscard]] int K() const { return K_; }
  [[nodiscard]] double R() const { return R_; }

  /// Stores tau(w); the class representative receives the conjugate when
  /// it is reached through reversal.
  void set(const Word& w, cdouble value);

  [[nodiscard]] std::optional<cdouble> find(const Word& w) const;
  /// Throws InvalidArgument when w has no stored class.
  [[nodiscard]] cdouble value(const Word& w) const;
  [[nodiscard]] cdouble value(const NcPoly& p) const;

  [[nodiscard]] const std::map<Word, cdouble>& entries() const { return entries_; }

  /// Restriction to the given generators (1-based, in the order listed),
  /// renumbered 1..k.
  [[nodiscard]] MomentSpec restrict_to(const std::vector<int>& generators) const;

  /// Same state truncated to a smaller degree.
  [[nodiscard]] MomentSpec truncate(int K) const;

 private:
  int n_;
  int K_;
  double R_;
  std::map<Word, cdouble> entries_;
};

/// Normalized trace moments of the tuple up to degree K; R is set to the
/// largest operator norm of the blocks.
MomentSpec empirical_moments(const MatrixTuple& t, int K);

/// Same, computed from a list of per-block spectra when n = 1.
MomentSpec spectral_moments(const Eigen::VectorXd& spectrum, int K, double R);

/// max over monomials of degree <= K of |a(m) - b(m)|.
double moment_distance(const MomentSpec& a, const MomentSpec& b, int K);

/// Convex combination sum_i w_i * specs_i (same n, K; R is the max).
MomentSpec mix_moments(const std::vector<MomentSpec>& specs, const std::vector<double>& weights);

/// Human-readable invariant violations; empty when the state is valid.
/// Each message starts with its category: "unit", "letters", "missing",
/// "adjoint symmetry", "norm bound", "gram".
std::vector<std::string> validate(const MomentSpec& s);

/// Gram matrix G_{u,v} = tau(u^* v) over words of degree <= floor(K/2).
Matrix gram_matrix(const MomentSpec& s);

/// One-generator semicircle with the given variance; R defaults to the
/// support edge 2*sqrt(variance).
MomentSpec semicircle_moments(double variance, int K, std::optional<double> R = std::nullopt);

/// One-generator arcsine law on [-R, R]: m_{2k} = binom(2k, k) (R/2)^{2k}.
MomentSpec arcsine_moments(double R, int K);

/// Joint moments of freely independent blocks (generators concatenated in
/// block order), from free cumulants summed over non-crossing partitions.
MomentSpec free_product_moments(const std::vector<MomentSpec>& blocks, int K);

/// Same, with blocks placed at arbitrary generator positions: groups[b]
/// lists the 1-based output generators carried by block b.
MomentSpec free_product_moments(const std::vector<MomentSpec>& blocks,
                                const std::vector<std::vector<int>>& groups, int K);

inline constexpr int kFreeProductMaxDegree = 8;

/// Non-crossing partitions of {0..k-1}, each as a block label per point.
const std::vector<std::vector<int>>& noncrossing_partitions(int k);

void to_json(nlohmann::json& j, const MomentSpec& s);
MomentSpec moment_spec_from_json(const nlohmann::json& j);

}  // namespace freeent
