#include "freeent/ncpoly.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "freeent/errors.hpp"

namespace freeent {

bool Word::valid_for(int n) const {
  return std::all_of(letters.begin(), letters.end(), [n](int l) { return l >= 1 && l <= n; });
}

Word reverse(const Word& w) { return Word(std::vector<int>(w.letters.rbegin(), w.letters.rend())); }

Word concat(const Word& a, const Word& b) {
  Word out = a;
  out.letters.insert(out.letters.end(), b.letters.begin(), b.letters.end());
  return out;
}

Word rotate(const Word& w, int k) {
  if (w.letters.empty()) return w;
  const int d = w.degree();
  k = ((k % d) + d) % d;
  Word out = w;
  std::rotate(out.letters.begin(), out.letters.begin() + k, out.letters.end());
  return out;
}

std::string to_string(const Word& w) {
  if (w.is_unit()) return "1";
  std::string s;
  for (std::size_t i = 0; i < w.letters.size(); ++i) {
    if (i) s += '*';
    s += 'X' + std::to_string(w.letters[i]);
  }
  return s;
}

CanonicalForm canonical_form(const Word& w) {
  CanonicalForm best{w, false};
  const int d = w.degree();
  if (d <= 1) return best;
  const Word r = reverse(w);
  for (int k = 0; k < d; ++k) {
    Word a = rotate(w, k);
    if (a < best.rep) best = {std::move(a), false};
  }
  for (int k = 0; k < d; ++k) {
    Word b = rotate(r, k);
    // Ties keep the unreversed form; the value of such a class is real.
    if (b < best.rep) best = {std::move(b), true};
  }
  return best;
}

Word canonical_class(const Word& w) { return canonical_form(w).rep; }

bool is_reversal_symmetric(const Word& w) {
  const Word r = reverse(w);
  for (int k = 0; k < std::max(1, w.degree()); ++k)
    if (rotate(r, k) == w) return true;
  return false;
}

std::vector<Word> enumerate_words(int n, int max_degree) {
  std::vector<Word> out{Word{}};
  std::vector<Word> frontier{Word{}};
  for (int d = 1; d <= max_degree; ++d) {
    std::vector<Word> next;
    next.reserve(frontier.size() * static_cast<std::size_t>(n));
    for (const Word& w : frontier)
      for (int l = 1; l <= n; ++l) {
        Word x = w;
        x.letters.push_back(l);
        next.push_back(std::move(x));
      }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

std::vector<Word> canonical_classes(int n, int max_degree, int min_degree) {
  std::vector<Word> out;
  for (const Word& w : enumerate_words(n, max_degree)) {
    if (w.degree() < min_degree) continue;
    if (canonical_class(w) == w) out.push_back(w);
  }
  return out;
}

NcPoly::NcPoly(int n) : n_(n) {
  if (n < 1) throw InvalidArgument("NcPoly: generator count must be >= 1");
}

NcPoly NcPoly::constant(int n, cdouble c) {
  NcPoly p(n);
  p.add_term(Word{}, c);
  return p;
}

NcPoly NcPoly::monomial(int n, const Word& w, cdouble c) {
  NcPoly p(n);
  p.add_term(w, c);
  return p;
}

int NcPoly::degree() const {
  int d = 0;
  for (const auto& [w, c] : terms_) d = std::max(d, w.degree());
  return d;
}

cdouble NcPoly::coefficient(const Word& w) const {
  auto it = terms_.find(w);
  return it == terms_.end() ? cdouble{} : it->second;
}

void NcPoly::add_term(const Word& w, cdouble c) {
  if (!w.valid_for(n_)) throw InvalidArgument("NcPoly: word " + to_string(w) + " has a letter outside 1..n");
  if (c == cdouble{}) return;
  auto [it, inserted] = terms_.try_emplace(w, c);
  if (!inserted) {
    it->second += c;
    if (it->second == cdouble{}) terms_.erase(it);
  }
}

NcPoly& NcPoly::operator+=(const NcPoly& o) {
  if (o.n_ != n_) throw InvalidArgument("NcPoly: generator count mismatch");
  for (const auto& [w, c] : o.terms_) add_term(w, c);
  return *this;
}

NcPoly& NcPoly::operator-=(const NcPoly& o) {
  if (o.n_ != n_) throw InvalidArgument("NcPoly: generator count mismatch");
  for (const auto& [w, c] : o.terms_) add_term(w, -c);
  return *this;
}

NcPoly& NcPoly::operator*=(cdouble c) {
  if (c == cdouble{}) {
    terms_.clear();
    return *this;
  }
  for (auto& [w, v] : terms_) v *= c;
  return *this;
}

NcPoly operator*(const NcPoly& a, const NcPoly& b) {
  if (a.n() != b.n()) throw InvalidArgument("NcPoly: generator count mismatch");
  NcPoly out(a.n());
  for (const auto& [wa, ca] : a.terms())
    for (const auto& [wb, cb] : b.terms()) out.add_term(concat(wa, wb), ca * cb);
  return out;
}

double NcPoly::l1_norm_nonunit() const {
  double s = 0.0;
  for (const auto& [w, c] : terms_)
    if (!w.is_unit()) s += std::abs(c);
  return s;
}

NcPoly star(const NcPoly& p) {
  NcPoly out(p.n());
  for (const auto& [w, c] : p.terms()) out.add_term(reverse(w), std::conj(c));
  return out;
}

bool is_self_adjoint(const NcPoly& p) { return star(p) == p; }

bool is_block_separable(const NcPoly& p) {
  for (const auto& [w, c] : p.terms()) {
    if (w.letters.empty()) continue;
    const int first = w.letters.front();
    if (!std::all_of(w.letters.begin(), w.letters.end(), [first](int l) { return l == first; })) return false;
  }
  return true;
}

std::string to_string(const NcPoly& p) {
  if (p.is_zero()) return "0";
  std::ostringstream os;
  os.precision(12);
  bool first = true;
  for (const auto& [w, c] : p.terms()) {
    if (!first) os << " + ";
    first = false;
    if (c.imag() == 0.0) os << c.real();
    else os << '(' << c.real() << (c.imag() < 0 ? "-" : "+") << std::abs(c.imag()) << "i)";
    if (!w.is_unit()) os << '*' << to_string(w);
  }
  return os.str();
}

// Recursive-descent parser:
//   expr   := term (('+' | '-') term)*
//   term   := unary ('*' unary)*
//   unary  := '-' unary | power
//   power  := atom ('^' integer)?
//   atom   := number | 'i' | 'X' integer | '(' expr ')'
namespace {

class PolyParser {
 public:
  PolyParser(int n, std::string_view s) : n_(n), s_(s) {}

  NcPoly parse() {
    NcPoly p = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected character");
    return p;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw InvalidArgument("polynomial parse error at offset " + std::to_string(pos_) + ": " + what + " in \"" +
                          std::string(s_) + "\"");
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  int integer() {
    skip();
    int v = 0;
    auto [p, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
    if (ec != std::errc{}) fail("expected integer");
    pos_ = static_cast<std::size_t>(p - s_.data());
    return v;
  }

  NcPoly expr() {
    NcPoly acc = term();
    for (;;) {
      if (accept('+')) acc += term();
      else if (accept('-')) acc -= term();
      else return acc;
    }
  }

  NcPoly term() {
    NcPoly acc = unary();
    while (accept('*')) acc = acc * unary();
    return acc;
  }

  NcPoly unary() {
    if (accept('-')) return unary() * cdouble(-1.0);
    return power();
  }

  NcPoly power() {
    NcPoly base = atom();
    if (accept('^')) {
      const int k = integer();
      if (k < 0 || k > 32) fail("exponent out of range");
      NcPoly out = NcPoly::constant(n_, 1.0);
      for (int i = 0; i < k; ++i) out = out * base;
      return out;
    }
    return base;
  }

  NcPoly atom() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      NcPoly inner = expr();
      if (!accept(')')) fail("expected ')'");
      return inner;
    }
    if (c == 'X' || c == 'x') {
      ++pos_;
      const int l = integer();
      if (l < 1 || l > n_) fail("generator index out of range");
      return NcPoly::monomial(n_, Word{l});
    }
    if (c == 'i') {
      ++pos_;
      return NcPoly::constant(n_, cdouble(0.0, 1.0));
    }
    // strtod handles exponents; from_chars for double is missing on older libstdc++.
    std::string tail(s_.substr(pos_));
    char* end = nullptr;
    const double v = std::strtod(tail.c_str(), &end);
    if (end == tail.c_str()) fail("expected number, generator, 'i' or '('");
    pos_ += static_cast<std::size_t>(end - tail.c_str());
    return NcPoly::constant(n_, v);
  }

  int n_;
  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

NcPoly NcPoly::parse(int n, std::string_view text) { return PolyParser(n, text).parse(); }

cdouble trace_word(const Word& w, std::span<const Matrix* const> blocks) {
  const Eigen::Index N = blocks.front()->rows();
  const auto& l = w.letters;
  const auto blk = [&](std::size_t k) -> const Matrix& { return *blocks[static_cast<std::size_t>(l[k] - 1)]; };
  switch (l.size()) {
    case 0:
      return cdouble(static_cast<double>(N), 0.0);
    case 1:
      return blk(0).trace();
    case 2:
      return blk(0).cwiseProduct(blk(1).transpose()).sum();
    default: {
      Matrix prod = blk(0) * blk(1);
      for (std::size_t k = 2; k + 1 < l.size(); ++k) prod = prod * blk(k);
      return prod.cwiseProduct(blk(l.size() - 1).transpose()).sum();
    }
  }
}

namespace {

std::vector<const Matrix*> block_pointers(const MatrixTuple& t) {
  std::vector<const Matrix*> ptrs;
  for (const Matrix& m : t.blocks()) ptrs.push_back(&m);
  return ptrs;
}

}  // namespace

Matrix evaluate(const NcPoly& p, const MatrixTuple& t) {
  if (p.n() != t.n()) throw InvalidArgument("evaluate: polynomial has " + std::to_string(p.n()) +
                                            " generators, tuple has " + std::to_string(t.n()));
  const Eigen::Index N = t.N();
  Matrix out = Matrix::Zero(N, N);
  for (const auto& [w, c] : p.terms()) {
    Matrix m = Matrix::Identity(N, N);
    for (int l : w.letters) m = m * t[l - 1];
    out += c * m;
  }
  return out;
}

cdouble trace_moment(const MatrixTuple& t, const Word& w) {
  if (w.is_unit()) return 1.0;
  if (!w.valid_for(t.n())) throw InvalidArgument("trace_moment: word " + to_string(w) + " invalid for tuple");
  const auto ptrs = block_pointers(t);
  return trace_word(w, ptrs) / static_cast<double>(t.N());
}

cdouble trace_moment(const MatrixTuple& t, const NcPoly& p) {
  if (p.n() != t.n()) throw InvalidArgument("trace_moment: generator count mismatch");
  const auto ptrs = block_pointers(t);
  cdouble s{};
  for (const auto& [w, c] : p.terms()) s += c * trace_word(w, ptrs);
  return s / static_cast<double>(t.N());
}

}  // namespace freeent
