#pragma once

#include <compare>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "freeent/matrix.hpp"

namespace freeent {

/// A noncommutative monomial X_{i1} ... X_{ik}; letters are generator
/// indices in 1..n, the empty word is the unit.
struct Word {
  std::vector<int> letters;

  Word() = default;
  Word(std::initializer_list<int> l) : letters(l) {}
  explicit Word(std::vector<int> l) : letters(std::move(l)) {}

  [[nodiscard]] int degree() const { return static_cast<int>(letters.size()); }
  [[nodiscard]] bool is_unit() const { return letters.empty(); }
  [[nodiscard]] bool valid_for(int n) const;

  auto operator<=>(const Word&) const = default;
  bool operator==(const Word&) const = default;
};

Word reverse(const Word& w);
Word concat(const Word& a, const Word& b);
Word rotate(const Word& w, int k);
std::string to_string(const Word& w);

/// Representative of the class of w under cyclic rotation and reversal,
/// plus whether the representative was reached through the reversal. For a
/// trace state on self-adjoint generators value(w) equals value(rep), or
/// its conjugate when `reversed` is set.
struct CanonicalForm {
  Word rep;
  bool reversed = false;
};

CanonicalForm canonical_form(const Word& w);
Word canonical_class(const Word& w);

/// True when reverse(w) is a cyclic rotation of w, i.e. the trace of w is
/// real for every trace state.
bool is_reversal_symmetric(const Word& w);

/// All words over n letters of degree <= max_degree, by degree then lexicographically.
std::vector<Word> enumerate_words(int n, int max_degree);

/// Canonical class representatives of degree in [min_degree, max_degree].
std::vector<Word> canonical_classes(int n, int max_degree, int min_degree = 0);

/// Finite linear combination of words with complex coefficients.
class NcPoly {
 public:
  explicit NcPoly(int n = 1);

  static NcPoly constant(int n, cdouble c);
  static NcPoly monomial(int n, const Word& w, cdouble c = 1.0);
  /// Parses expressions such as "0.5*X1^2 - (X1 - X2)^2 + i*X1*X2".
  static NcPoly parse(int n, std::string_view text);

  [[nodiscard]] int n() const { return n_; }
  [[nodiscard]] int degree() const;
  [[nodiscard]] bool is_zero() const { return terms_.empty(); }
  [[nodiscard]] const std::map<Word, cdouble>& terms() const { return terms_; }
  [[nodiscard]] cdouble coefficient(const Word& w) const;

  void add_term(const Word& w, cdouble c);

  NcPoly& operator+=(const NcPoly& o);
  NcPoly& operator-=(const NcPoly& o);
  NcPoly& operator*=(cdouble c);
  friend NcPoly operator+(NcPoly a, const NcPoly& b) { return a += b; }
  friend NcPoly operator-(NcPoly a, const NcPoly& b) { return a -= b; }
  friend NcPoly operator*(NcPoly a, cdouble c) { return a *= c; }
  friend NcPoly operator*(cdouble c, NcPoly a) { return a *= c; }
  friend NcPoly operator*(const NcPoly& a, const NcPoly& b);
  bool operator==(const NcPoly& o) const { return n_ == o.n_ && terms_ == o.terms_; }

  /// Sum of |coefficient| over all non-unit words.
  [[nodiscard]] double l1_norm_nonunit() const;

 private:
  int n_;
  std::map<Word, cdouble> terms_;
};

/// The involution: words reversed, coefficients conjugated.
NcPoly star(const NcPoly& p);
bool is_self_adjoint(const NcPoly& p);
std::string to_string(const NcPoly& p);

/// True when every word of p uses a single generator, so p(M) splits into
/// per-block terms.
bool is_block_separable(const NcPoly& p);

/// Matrix value of p on the tuple.
Matrix evaluate(const NcPoly& p, const MatrixTuple& t);

/// Tr(w(M_1, ..., M_n)) (unnormalized) on raw blocks.
cdouble trace_word(const Word& w, std::span<const Matrix* const> blocks);

/// (1/N) Tr(w(M_1, ..., M_n)); the unit word gives 1.
cdouble trace_moment(const MatrixTuple& t, const Word& w);

/// (1/N) Tr(p(M)).
cdouble trace_moment(const MatrixTuple& t, const NcPoly& p);

}  // namespace freeent
