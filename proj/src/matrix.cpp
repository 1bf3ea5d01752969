#include "freeent/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "freeent/errors.hpp"

namespace freeent {

namespace {

void check_block(const Matrix& m, double R, std::size_t index, int N) {
  if (m.rows() != m.cols() || m.rows() != N) {
    throw InvalidArgument("block " + std::to_string(index) + " is not " + std::to_string(N) + "x" +
                          std::to_string(N));
  }
  const double asym = (m - m.adjoint()).cwiseAbs().maxCoeff();
  if (asym > kHermitianTol) {
    throw InvalidArgument("block " + std::to_string(index) + " is not Hermitian (deviation " +
                          std::to_string(asym) + ")");
  }
  const double norm = operator_norm(m);
  if (norm > R + kNormTol) {
    throw InvalidArgument("block " + std::to_string(index) + " has operator norm " +
                          std::to_string(norm) + " > R = " + std::to_string(R));
  }
}

}  // namespace

MatrixTuple::MatrixTuple(std::vector<Matrix> blocks, double R) : blocks_(std::move(blocks)), R_(R) {
  if (!(R > 0.0)) throw InvalidArgument("MatrixTuple: R must be positive");
  if (blocks_.empty()) throw InvalidArgument("MatrixTuple: need at least one block");
  const int N = static_cast<int>(blocks_.front().rows());
  if (N < 1) throw InvalidArgument("MatrixTuple: empty matrices");
  for (std::size_t i = 0; i < blocks_.size(); ++i) check_block(blocks_[i], R_, i, N);
}

MatrixTuple MatrixTuple::unchecked(std::vector<Matrix> blocks, double R) {
  MatrixTuple t;
  t.blocks_ = std::move(blocks);
  t.R_ = R;
  return t;
}

BlockMap::BlockMap(std::vector<int> group_of_block) : group_(std::move(group_of_block)) {
  if (group_.empty()) throw InvalidArgument("BlockMap: no blocks");
  const int hi = *std::max_element(group_.begin(), group_.end());
  const int lo = *std::min_element(group_.begin(), group_.end());
  if (lo < 0) throw InvalidArgument("BlockMap: negative group index");
  std::vector<bool> seen(static_cast<std::size_t>(hi) + 1, false);
  for (int g : group_) seen[static_cast<std::size_t>(g)] = true;
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
    throw InvalidArgument("BlockMap: assignment is not surjective onto 1..l");
  }
  groups_ = hi + 1;
}

BlockMap BlockMap::from_groups(const std::vector<int>& one_based) {
  std::vector<int> zero;
  zero.reserve(one_based.size());
  for (int g : one_based) zero.push_back(g - 1);
  return BlockMap(std::move(zero));
}

BlockMap BlockMap::global(int n) { return BlockMap(std::vector<int>(static_cast<std::size_t>(n), 0)); }

BlockMap BlockMap::full(int n) {
  std::vector<int> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = i;
  return BlockMap(std::move(g));
}

std::vector<int> BlockMap::members(int group) const {
  std::vector<int> out;
  for (int i = 0; i < blocks(); ++i)
    if (group_[static_cast<std::size_t>(i)] == group) out.push_back(i);
  return out;
}

int BlockMap::max_group_size() const {
  int best = 0;
  for (int g = 0; g < groups_; ++g) best = std::max(best, static_cast<int>(members(g).size()));
  return best;
}

Matrix haar_unitary(int N, CounterRng& rng) {
  if (N < 1) throw InvalidArgument("haar_unitary: N must be >= 1");
  Matrix z(N, N);
  const double s = std::sqrt(0.5);
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) z(i, j) = cdouble(s * rng.normal(), s * rng.normal());
  Eigen::HouseholderQR<Matrix> qr(z);
  Matrix q = qr.householderQ();
  const Matrix& r = qr.matrixQR();
  for (int j = 0; j < N; ++j) {
    const cdouble d = r(j, j);
    const double a = std::abs(d);
    q.col(j) *= (a > 0.0 ? d / a : cdouble(1.0, 0.0));
  }
  return q;
}

MatrixTuple conjugate_tuple(const MatrixTuple& t, std::span<const Matrix> us, const BlockMap& pi) {
  if (pi.blocks() != t.n()) throw InvalidArgument("conjugate_tuple: block map does not match tuple");
  if (static_cast<int>(us.size()) != pi.groups()) {
    throw InvalidArgument("conjugate_tuple: expected " + std::to_string(pi.groups()) + " unitaries");
  }
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(t.n()));
  for (int i = 0; i < t.n(); ++i) {
    const Matrix& u = us[static_cast<std::size_t>(pi.group_of(i))];
    if (u.rows() != t.N() || u.cols() != t.N()) throw InvalidArgument("conjugate_tuple: size mismatch");
    Matrix c = u * t[i] * u.adjoint();
    c = 0.5 * (c + c.adjoint()).eval();
    out.push_back(std::move(c));
  }
  return MatrixTuple::unchecked(std::move(out), t.R());
}

Eigen::VectorXd hermitian_eigenvalues(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

double operator_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  const Eigen::VectorXd ev = hermitian_eigenvalues(m);
  return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

Matrix apply_scalar_function(const Matrix& m, const std::function<double(double)>& f) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  Eigen::VectorXd fe = es.eigenvalues().unaryExpr([&](double x) { return f(x); });
  const Matrix& v = es.eigenvectors();
  Matrix out = v * fe.cast<cdouble>().asDiagonal() * v.adjoint();
  return 0.5 * (out + out.adjoint());
}

Matrix gaussian_hermitian(int N, CounterRng& rng) {
  Matrix g(N, N);
  const double s = std::sqrt(0.5);
  for (int i = 0; i < N; ++i) {
    g(i, i) = cdouble(rng.normal(), 0.0);
    for (int j = i + 1; j < N; ++j) {
      const cdouble z(s * rng.normal(), s * rng.normal());
      g(i, j) = z;
      g(j, i) = std::conj(z);
    }
  }
  return g;
}

CompressionFn::CompressionFn(double T, double R, double S) : T_(T), R_(R), S_(S) {
  if (!(T > R && R > S && S > 0.0)) throw InvalidArgument("CompressionFn: need T > R > S > 0");
  alpha_ = (R - S) / (2.0 * T - (R + S));
}

double CompressionFn::derivative(double t) const {
  const double a = std::abs(t);
  if (a >= R_) return alpha_;
  if (a <= S_) return 1.0;
  return alpha_ + (1.0 - alpha_) * (R_ - a) / (R_ - S_);
}

double CompressionFn::operator()(double t) const {
  if (t > 0.0) return -(*this)(-t);
  // t <= 0 from here on; integrate h from -T.
  if (t <= -R_) return -R_ + alpha_ * (t + T_);
  const double at_minus_r = -R_ + alpha_ * (T_ - R_);
  if (t <= -S_) {
    const double u = t + R_;
    return at_minus_r + alpha_ * u + (1.0 - alpha_) * u * u / (2.0 * (R_ - S_));
  }
  return t;
}

double CompressionFn::divided_difference(double a, double b) const {
  if (std::abs(a - b) < 1e-10) return derivative(0.5 * (a + b));
  return ((*this)(a) - (*this)(b)) / (a - b);
}

double CompressionFn::inverse(double y) const {
  double lo = -T_ - (R_ + std::abs(y)) / alpha_;
  double hi = -lo;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if ((*this)(mid) < y) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

CompressionFn build_compression(double T, double R, double S) { return {T, R, S}; }

double log_jacobian_functional_calculus(const Matrix& m, const CompressionFn& g) {
  const Eigen::VectorXd ev = hermitian_eigenvalues(m);
  const Eigen::Index n = ev.size();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    total += std::log(g.derivative(ev(i)));
    for (Eigen::Index j = i + 1; j < n; ++j) total += 2.0 * std::log(g.divided_difference(ev(i), ev(j)));
  }
  return total;
}

void to_json(nlohmann::json& j, const MatrixTuple& t) {
  j = nlohmann::json::object();
  j["n"] = t.n();
  j["N"] = t.N();
  j["R"] = t.R();
  auto blocks = nlohmann::json::array();
  for (const Matrix& m : t.blocks()) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(2 * m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        flat.push_back(m(r, c).real());
        flat.push_back(m(r, c).imag());
      }
    blocks.push_back(flat);
  }
  j["blocks"] = blocks;
}

MatrixTuple matrix_tuple_from_json(const nlohmann::json& j) {
  try {
    const int n = j.at("n").get<int>();
    const int N = j.at("N").get<int>();
    const double R = j.at("R").get<double>();
    const auto& blocks = j.at("blocks");
    if (static_cast<int>(blocks.size()) != n) throw InvalidArgument("matrix tuple: block count mismatch");
    std::vector<Matrix> ms;
    for (const auto& b : blocks) {
      const auto flat = b.get<std::vector<double>>();
      if (static_cast<int>(flat.size()) != 2 * N * N) throw InvalidArgument("matrix tuple: wrong entry count");
      Matrix m(N, N);
      for (int r = 0; r < N; ++r)
        for (int c = 0; c < N; ++c) {
          const std::size_t k = static_cast<std::size_t>(2 * (r * N + c));
          m(r, c) = cdouble(flat[k], flat[k + 1]);
        }
      ms.push_back(std::move(m));
    }
    return MatrixTuple(std::move(ms), R);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("matrix tuple: ") + e.what());
  }
}

}  // namespace freeent
