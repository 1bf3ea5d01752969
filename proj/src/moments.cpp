#include "freeent/moments.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <mutex>

#include <nlohmann/json.hpp>

#include "freeent/errors.hpp"

namespace freeent {

MomentSpec::MomentSpec(int n, int K, double R) : n_(n), K_(K), R_(R) {
  if (n < 1) throw InvalidArgument("MomentSpec: n must be >= 1");
  if (K < 0) throw InvalidArgument("MomentSpec: K must be >= 0");
  if (!(R > 0.0)) throw InvalidArgument("MomentSpec: R must be positive");
}

void MomentSpec::set(const Word& w, cdouble value) {
  if (w.degree() > K_) throw InvalidArgument("MomentSpec: word " + to_string(w) + " exceeds degree K");
  const CanonicalForm cf = canonical_form(w);
  entries_[cf.rep] = cf.reversed ? std::conj(value) : value;
}

std::optional<cdouble> MomentSpec::find(const Word& w) const {
  const CanonicalForm cf = canonical_form(w);
  auto it = entries_.find(cf.rep);
  if (it == entries_.end()) return std::nullopt;
  return cf.reversed ? std::conj(it->second) : it->second;
}

cdouble MomentSpec::value(const Word& w) const {
  if (auto v = find(w)) return *v;
  throw InvalidArgument("MomentSpec: no value for " + to_string(w));
}

cdouble MomentSpec::value(const NcPoly& p) const {
  if (p.n() != n_) throw InvalidArgument("MomentSpec: polynomial generator count mismatch");
  cdouble s{};
  for (const auto& [w, c] : p.terms()) s += c * value(w);
  return s;
}

MomentSpec MomentSpec::restrict_to(const std::vector<int>& generators) const {
  const int k = static_cast<int>(generators.size());
  MomentSpec out(k, K_, R_);
  for (const Word& local : canonical_classes(k, K_)) {
    Word global;
    for (int l : local.letters) global.letters.push_back(generators[static_cast<std::size_t>(l - 1)]);
    out.set(local, value(global));
  }
  return out;
}

MomentSpec MomentSpec::truncate(int K) const {
  if (K > K_) throw InvalidArgument("MomentSpec::truncate: cannot raise K");
  MomentSpec out(n_, K, R_);
  for (const auto& [w, v] : entries_)
    if (w.degree() <= K) out.entries_[w] = v;
  return out;
}

MomentSpec empirical_moments(const MatrixTuple& t, int K) {
  if (K < 0) throw InvalidArgument("empirical_moments: K must be >= 0");
  double R = 0.0;
  for (const Matrix& m : t.blocks()) R = std::max(R, operator_norm(m));
  if (t.n() == 1) return spectral_moments(hermitian_eigenvalues(t[0]), K, R > 0.0 ? R : 1.0);

  MomentSpec out(t.n(), K, R > 0.0 ? R : 1.0);
  std::vector<const Matrix*> ptrs;
  for (const Matrix& m : t.blocks()) ptrs.push_back(&m);
  const double N = static_cast<double>(t.N());
  for (const Word& w : canonical_classes(t.n(), K)) out.set(w, trace_word(w, ptrs) / N);
  return out;
}

MomentSpec spectral_moments(const Eigen::VectorXd& spectrum, int K, double R) {
  MomentSpec out(1, K, R);
  const double N = static_cast<double>(spectrum.size());
  Eigen::ArrayXd pw = Eigen::ArrayXd::Ones(spectrum.size());
  Word w;
  out.set(w, 1.0);
  for (int d = 1; d <= K; ++d) {
    pw *= spectrum.array();
    w.letters.push_back(1);
    out.set(w, pw.sum() / N);
  }
  return out;
}

double moment_distance(const MomentSpec& a, const MomentSpec& b, int K) {
  if (a.n() != b.n()) throw InvalidArgument("moment_distance: generator counts differ");
  if (a.K() < K || b.K() < K) throw InvalidArgument("moment_distance: a spec is truncated below K");
  double d = 0.0;
  for (const Word& w : canonical_classes(a.n(), K, 1)) d = std::max(d, std::abs(a.value(w) - b.value(w)));
  return d;
}

MomentSpec mix_moments(const std::vector<MomentSpec>& specs, const std::vector<double>& weights) {
  if (specs.empty() || specs.size() != weights.size()) throw InvalidArgument("mix_moments: bad inputs");
  const int n = specs.front().n();
  int K = specs.front().K();
  double R = 0.0;
  for (const auto& s : specs) {
    if (s.n() != n) throw InvalidArgument("mix_moments: generator counts differ");
    K = std::min(K, s.K());
    R = std::max(R, s.R());
  }
  MomentSpec out(n, K, R);
  for (const Word& w : canonical_classes(n, K)) {
    cdouble v{};
    for (std::size_t i = 0; i < specs.size(); ++i) v += weights[i] * specs[i].value(w);
    out.set(w, v);
  }
  return out;
}

Matrix gram_matrix(const MomentSpec& s) {
  const std::vector<Word> words = enumerate_words(s.n(), s.K() / 2);
  const auto m = static_cast<Eigen::Index>(words.size());
  Matrix g(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      g(i, j) = s.value(concat(reverse(words[static_cast<std::size_t>(i)]), words[static_cast<std::size_t>(j)]));
  return g;
}

std::vector<std::string> validate(const MomentSpec& s) {
  std::vector<std::string> out;
  for (const auto& [w, v] : s.entries()) {
    if (!w.valid_for(s.n())) out.push_back("letters: word " + to_string(w) + " uses a generator outside 1..n");
  }
  if (!out.empty()) return out;

  const auto unit = s.find(Word{});
  if (!unit) out.push_back("unit: value(1) is missing");
  else if (std::abs(*unit - cdouble(1.0)) > 1e-12) out.push_back("unit: value(1) != 1");

  bool complete = true;
  for (const Word& w : canonical_classes(s.n(), s.K())) {
    const auto v = s.find(w);
    if (!v) {
      out.push_back("missing: no value for class " + to_string(w));
      complete = false;
      continue;
    }
    if (is_reversal_symmetric(w) && std::abs(v->imag()) > 1e-9 * std::max(1.0, std::abs(*v))) {
      out.push_back("adjoint symmetry: class " + to_string(w) + " must have a real value");
    }
    const double bound = std::pow(s.R(), w.degree());
    if (std::abs(*v) > bound * (1.0 + 1e-9) + 1e-12) {
      out.push_back("norm bound: |value(" + to_string(w) + ")| exceeds R^deg");
    }
  }
  if (complete) {
    const Matrix g = gram_matrix(s);
    const Matrix gh = 0.5 * (g + g.adjoint());
    const double min_eig = hermitian_eigenvalues(gh)(0);
    const double tr = gh.trace().real();
    if (min_eig < -1e-8 * tr) out.push_back("gram: Gram matrix has eigenvalue " + std::to_string(min_eig));
  }
  return out;
}

namespace {

double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

MomentSpec semicircle_moments(double variance, int K, std::optional<double> R) {
  if (!(variance > 0.0)) throw InvalidArgument("semicircle_moments: variance must be positive");
  MomentSpec out(1, K, R.value_or(2.0 * std::sqrt(variance)));
  Word w;
  out.set(w, 1.0);
  for (int d = 1; d <= K; ++d) {
    w.letters.push_back(1);
    if (d % 2) {
      out.set(w, 0.0);
      continue;
    }
    const int k = d / 2;
    const double catalan = std::exp(log_binomial(2 * k, k)) / (k + 1.0);
    out.set(w, std::round(catalan) * std::pow(variance, k));
  }
  return out;
}

MomentSpec arcsine_moments(double R, int K) {
  if (!(R > 0.0)) throw InvalidArgument("arcsine_moments: R must be positive");
  MomentSpec out(1, K, R);
  Word w;
  out.set(w, 1.0);
  for (int d = 1; d <= K; ++d) {
    w.letters.push_back(1);
    if (d % 2) {
      out.set(w, 0.0);
      continue;
    }
    const int k = d / 2;
    out.set(w, std::round(std::exp(log_binomial(2 * k, k))) * std::pow(R / 2.0, 2 * k));
  }
  return out;
}

const std::vector<std::vector<int>>& noncrossing_partitions(int k) {
  static std::mutex mu;
  static std::map<int, std::vector<std::vector<int>>> cache;
  std::lock_guard lock(mu);
  if (auto it = cache.find(k); it != cache.end()) return it->second;

  std::vector<std::vector<int>> out;
  std::vector<int> labels(static_cast<std::size_t>(k), 0);
  const auto crossing = [&]() {
    for (int a = 0; a < k; ++a)
      for (int b = a + 1; b < k; ++b) {
        if (labels[a] == labels[b]) continue;
        for (int c = b + 1; c < k; ++c) {
          if (labels[c] != labels[a]) continue;
          for (int d = c + 1; d < k; ++d)
            if (labels[d] == labels[b]) return true;
        }
      }
    return false;
  };
  // Restricted growth strings enumerate each set partition once.
  std::function<void(int, int)> rec = [&](int pos, int next_label) {
    if (pos == k) {
      if (!crossing()) out.push_back(labels);
      return;
    }
    for (int l = 0; l <= next_label; ++l) {
      labels[static_cast<std::size_t>(pos)] = l;
      rec(pos + 1, std::max(next_label, l + 1));
    }
  };
  if (k == 0) out.push_back({});
  else rec(0, 0);
  return cache.emplace(k, std::move(out)).first->second;
}

namespace {

/// Free cumulants of one block, memoized by local word.
class CumulantTable {
 public:
  explicit CumulantTable(const MomentSpec& s) : spec_(s) {}

  cdouble operator()(const Word& w) {
    if (auto it = memo_.find(w); it != memo_.end()) return it->second;
    const int k = w.degree();
    cdouble kappa = spec_.value(w);
    for (const auto& part : noncrossing_partitions(k)) {
      const int blocks = *std::max_element(part.begin(), part.end()) + 1;
      if (blocks == 1) continue;
      cdouble prod = 1.0;
      for (int b = 0; b < blocks && prod != cdouble{}; ++b) {
        Word sub;
        for (int i = 0; i < k; ++i)
          if (part[static_cast<std::size_t>(i)] == b) sub.letters.push_back(w.letters[static_cast<std::size_t>(i)]);
        prod *= (*this)(sub);
      }
      kappa -= prod;
    }
    memo_.emplace(w, kappa);
    return kappa;
  }

 private:
  const MomentSpec& spec_;
  std::map<Word, cdouble> memo_;
};

}  // namespace

MomentSpec free_product_moments(const std::vector<MomentSpec>& blocks, const std::vector<std::vector<int>>& groups,
                                int K) {
  if (K > kFreeProductMaxDegree) {
    throw InvalidArgument("free_product_moments: K = " + std::to_string(K) + " exceeds the degree guard " +
                          std::to_string(kFreeProductMaxDegree));
  }
  if (blocks.empty() || blocks.size() != groups.size()) throw InvalidArgument("free_product_moments: bad blocks");

  int n = 0;
  double R = 0.0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (static_cast<int>(groups[b].size()) != blocks[b].n())
      throw InvalidArgument("free_product_moments: group size does not match block generator count");
    if (blocks[b].K() < K) throw InvalidArgument("free_product_moments: block truncated below K");
    if (auto v = validate(blocks[b]); !v.empty())
      throw InvalidArgument("free_product_moments: block " + std::to_string(b) + " invalid: " + v.front());
    n += blocks[b].n();
    R = std::max(R, blocks[b].R());
  }
  // global generator -> (block, local letter)
  std::vector<std::pair<int, int>> owner(static_cast<std::size_t>(n + 1), {-1, 0});
  for (std::size_t b = 0; b < groups.size(); ++b)
    for (std::size_t j = 0; j < groups[b].size(); ++j) {
      const int g = groups[b][j];
      if (g < 1 || g > n || owner[static_cast<std::size_t>(g)].first != -1)
        throw InvalidArgument("free_product_moments: groups must partition 1..n");
      owner[static_cast<std::size_t>(g)] = {static_cast<int>(b), static_cast<int>(j) + 1};
    }

  std::vector<CumulantTable> cumulants;
  cumulants.reserve(blocks.size());
  for (const auto& s : blocks) cumulants.emplace_back(s);

  MomentSpec out(n, K, R);
  for (const Word& w : canonical_classes(n, K)) {
    const int k = w.degree();
    if (k == 0) {
      out.set(w, 1.0);
      continue;
    }
    cdouble total{};
    for (const auto& part : noncrossing_partitions(k)) {
      const int nb = *std::max_element(part.begin(), part.end()) + 1;
      cdouble prod = 1.0;
      for (int b = 0; b < nb && prod != cdouble{}; ++b) {
        Word sub;
        int block = -1;
        bool mixed = false;
        for (int i = 0; i < k; ++i) {
          if (part[static_cast<std::size_t>(i)] != b) continue;
          const auto [ob, local] = owner[static_cast<std::size_t>(w.letters[static_cast<std::size_t>(i)])];
          if (block == -1) block = ob;
          else if (block != ob) mixed = true;
          sub.letters.push_back(local);
        }
        prod = mixed ? cdouble{} : prod * cumulants[static_cast<std::size_t>(block)](sub);
      }
      total += prod;
    }
    out.set(w, total);
  }
  return out;
}

MomentSpec free_product_moments(const std::vector<MomentSpec>& blocks, int K) {
  std::vector<std::vector<int>> groups;
  int next = 1;
  for (const auto& s : blocks) {
    std::vector<int> g;
    for (int j = 0; j < s.n(); ++j) g.push_back(next++);
    groups.push_back(std::move(g));
  }
  return free_product_moments(blocks, groups, K);
}

void to_json(nlohmann::json& j, const MomentSpec& s) {
  j = nlohmann::json::object();
  j["n"] = s.n();
  j["K"] = s.K();
  j["R"] = s.R();
  auto entries = nlohmann::json::array();
  for (const auto& [w, v] : s.entries()) {
    entries.push_back({{"word", w.letters}, {"re", v.real()}, {"im", v.imag()}});
  }
  j["entries"] = entries;
}

MomentSpec moment_spec_from_json(const nlohmann::json& j) {
  try {
    MomentSpec s(j.at("n").get<int>(), j.at("K").get<int>(), j.at("R").get<double>());
    for (const auto& e : j.at("entries")) {
      Word w(e.at("word").get<std::vector<int>>());
      if (!w.valid_for(s.n())) throw InvalidArgument("moment spec: word " + to_string(w) + " outside 1..n");
      s.set(w, cdouble(e.at("re").get<double>(), e.value("im", 0.0)));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("moment spec: ") + e.what());
  }
}

}  // namespace freeent
