#pragma once

// Sparse multivariate polynomials over a generic coefficient ring.
//
// BasicPolynomial<double> is the numeric polynomial. The SOS compiler
// instantiates the same template with affine expressions of decision
// variables as coefficients, so everything here only asks of C that it forms
// a module over double: C + C, C - C, C * double and a zero test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "privbarrier/error.hpp"

namespace privbarrier {

/// Coefficients with magnitude at or below this are dropped.
inline constexpr double kCoefficientPruneTol = 1e-14;

class Monomial {
 public:
  Monomial() = default;
  explicit Monomial(int n_vars) : exps_(static_cast<std::size_t>(n_vars), 0) {}
  explicit Monomial(std::vector<int> exps) : exps_(std::move(exps)) {
    for (int e : exps_)
      if (e < 0) throw PreconditionError("monomial exponents must be nonnegative");
  }

  static Monomial variable(int n_vars, int index) {
    Monomial m(n_vars);
    m.exps_.at(static_cast<std::size_t>(index)) = 1;
    return m;
  }

  int n_vars() const noexcept { return static_cast<int>(exps_.size()); }
  int degree() const noexcept { return std::accumulate(exps_.begin(), exps_.end(), 0); }
  int operator[](int i) const { return exps_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& exponents() const noexcept { return exps_; }

  Monomial operator*(const Monomial& o) const {
    if (o.n_vars() != n_vars()) throw PreconditionError("monomial arity mismatch");
    Monomial r = *this;
    for (std::size_t i = 0; i < exps_.size(); ++i) r.exps_[i] += o.exps_[i];
    return r;
  }

  /// this divides o (componentwise <=)
  bool divides(const Monomial& o) const {
    for (std::size_t i = 0; i < exps_.size(); ++i)
      if (exps_[i] > o.exps_[i]) return false;
    return true;
  }

  double eval(std::span<const double> point) const {
    double v = 1.0;
    for (std::size_t i = 0; i < exps_.size(); ++i)
      for (int k = 0; k < exps_[i]; ++k) v *= point[i];
    return v;
  }

  bool operator==(const Monomial&) const = default;

  std::string to_string() const {
    if (degree() == 0) return "1";
    std::string s;
    for (std::size_t i = 0; i < exps_.size(); ++i) {
      if (!exps_[i]) continue;
      if (!s.empty()) s += "*";
      s += "x" + std::to_string(i + 1);
      if (exps_[i] > 1) s += "^" + std::to_string(exps_[i]);
    }
    return s;
  }

 private:
  std::vector<int> exps_;
};

/// Graded lexicographic order: lower degree first; within a degree, x1 > x2 > ...
/// so that the degree-1 block reads [x1, x2, ..., xn].
struct GrlexLess {
  bool operator()(const Monomial& a, const Monomial& b) const {
    const int da = a.degree(), db = b.degree();
    if (da != db) return da < db;
    return a.exponents() > b.exponents();
  }
};

// Zero tests found by ADL for each coefficient type.
inline bool coeff_is_zero(double c, double tol = kCoefficientPruneTol) { return std::abs(c) <= tol; }

template <class C>
class BasicPolynomial {
 public:
  using Coeff = C;
  using TermMap = std::map<Monomial, C, GrlexLess>;

  BasicPolynomial() = default;
  explicit BasicPolynomial(int n_vars) : n_vars_(n_vars) {
    if (n_vars < 0) throw PreconditionError("negative variable count");
  }

  static BasicPolynomial constant(int n_vars, const C& c) {
    BasicPolynomial p(n_vars);
    p.add_term(Monomial(n_vars), c);
    return p;
  }

  static BasicPolynomial monomial(const Monomial& m, const C& c) {
    BasicPolynomial p(m.n_vars());
    p.add_term(m, c);
    return p;
  }

  int n_vars() const noexcept { return n_vars_; }
  const TermMap& terms() const noexcept { return terms_; }
  bool is_zero() const noexcept { return terms_.empty(); }
  std::size_t size() const noexcept { return terms_.size(); }

  /// Total degree; -1 for the zero polynomial.
  int degree() const {
    return terms_.empty() ? -1 : terms_.rbegin()->first.degree();
  }

  C coefficient(const Monomial& m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? C{} : it->second;
  }

  void add_term(const Monomial& m, const C& c) {
    if (m.n_vars() != n_vars_) throw PreconditionError("monomial arity does not match polynomial");
    auto [it, inserted] = terms_.try_emplace(m, c);
    if (!inserted) it->second = it->second + c;
    if (coeff_is_zero(it->second)) terms_.erase(it);
  }

  BasicPolynomial& operator+=(const BasicPolynomial& o) {
    check_arity(o);
    for (const auto& [m, c] : o.terms_) add_term(m, c);
    return *this;
  }
  BasicPolynomial& operator-=(const BasicPolynomial& o) {
    check_arity(o);
    for (const auto& [m, c] : o.terms_) add_term(m, c * -1.0);
    return *this;
  }
  BasicPolynomial& operator*=(double s) {
    if (s == 0.0) {
      terms_.clear();
      return *this;
    }
    for (auto it = terms_.begin(); it != terms_.end();) {
      it->second = it->second * s;
      if (coeff_is_zero(it->second))
        it = terms_.erase(it);
      else
        ++it;
    }
    return *this;
  }

  friend BasicPolynomial operator+(BasicPolynomial a, const BasicPolynomial& b) { return a += b; }
  friend BasicPolynomial operator-(BasicPolynomial a, const BasicPolynomial& b) { return a -= b; }
  friend BasicPolynomial operator*(BasicPolynomial a, double s) { return a *= s; }
  friend BasicPolynomial operator*(double s, BasicPolynomial a) { return a *= s; }
  BasicPolynomial operator-() const { return *this * -1.0; }

  /// Part of the polynomial with total degree exactly k.
  BasicPolynomial homogeneous_part(int k) const {
    BasicPolynomial r(n_vars_);
    for (const auto& [m, c] : terms_)
      if (m.degree() == k) r.terms_.emplace(m, c);
    return r;
  }

  int max_exponent(int var) const {
    int e = 0;
    for (const auto& [m, c] : terms_) e = std::max(e, m[var]);
    return e;
  }

  int min_degree() const {
    return terms_.empty() ? -1 : terms_.begin()->first.degree();
  }

  void check_arity(const BasicPolynomial& o) const {
    if (o.n_vars_ != n_vars_)
      throw PreconditionError("polynomial arity mismatch: " + std::to_string(n_vars_) + " vs " +
                              std::to_string(o.n_vars_));
  }

 private:
  int n_vars_ = 0;
  TermMap terms_;
};

using Polynomial = BasicPolynomial<double>;

inline Polynomial variable_poly(int n_vars, int index) {
  return Polynomial::monomial(Monomial::variable(n_vars, index), 1.0);
}

/// Affine polynomial c0 + sum_i coeffs[i] x_i.
inline Polynomial affine_poly(std::span<const double> coeffs, double c0 = 0.0) {
  const int n = static_cast<int>(coeffs.size());
  Polynomial p = Polynomial::constant(n, c0);
  for (int i = 0; i < n; ++i) p.add_term(Monomial::variable(n, i), coeffs[static_cast<std::size_t>(i)]);
  return p;
}

/// Product of a generic-coefficient polynomial with a numeric one.
template <class C>
BasicPolynomial<C> mul(const BasicPolynomial<C>& p, const Polynomial& q) {
  if (p.n_vars() != q.n_vars())
    throw PreconditionError("polynomial arity mismatch: " + std::to_string(p.n_vars()) + " vs " +
                            std::to_string(q.n_vars()));
  BasicPolynomial<C> r(p.n_vars());
  for (const auto& [mp, cp] : p.terms())
    for (const auto& [mq, cq] : q.terms()) r.add_term(mp * mq, cp * cq);
  return r;
}

inline Polynomial operator*(const Polynomial& p, const Polynomial& q) { return mul(p, q); }

inline Polynomial pow(const Polynomial& p, int k) {
  if (k < 0) throw PreconditionError("negative polynomial power");
  Polynomial r = Polynomial::constant(p.n_vars(), 1.0);
  Polynomial base = p;
  while (k) {
    if (k & 1) r = r * base;
    k >>= 1;
    if (k) base = base * base;
  }
  return r;
}

/// Evaluation by direct summation of terms with Neumaier compensation.
inline double eval(const Polynomial& p, std::span<const double> point) {
  if (static_cast<int>(point.size()) != p.n_vars())
    throw PreconditionError("evaluation point has wrong dimension");
  double sum = 0.0, comp = 0.0;
  for (const auto& [m, c] : p.terms()) {
    const double term = c * m.eval(point);
    const double t = sum + term;
    if (std::abs(sum) >= std::abs(term))
      comp += (sum - t) + term;
    else
      comp += (term - t) + sum;
    sum = t;
  }
  return sum + comp;
}

/// All monomials of total degree <= max_degree, graded-lex sorted.
inline std::vector<Monomial> monomial_basis(int n_vars, int max_degree) {
  if (n_vars < 1 || max_degree < 0) throw PreconditionError("monomial_basis needs n_vars >= 1, max_degree >= 0");
  std::vector<Monomial> out;
  std::vector<int> e(static_cast<std::size_t>(n_vars), 0);
  for (int d = 0; d <= max_degree; ++d) {
    // compositions of d into n_vars parts, emitted in decreasing lex order
    auto rec = [&](auto&& self, int var, int left) -> void {
      if (var == n_vars - 1) {
        e[static_cast<std::size_t>(var)] = left;
        out.emplace_back(e);
        return;
      }
      for (int k = left; k >= 0; --k) {
        e[static_cast<std::size_t>(var)] = k;
        self(self, var + 1, left - k);
      }
    };
    rec(rec, 0, d);
  }
  return out;
}

/// Substitutes variable x_i := images[i] for every i. images must share one arity.
template <class C>
BasicPolynomial<C> substitute(const BasicPolynomial<C>& p, const std::vector<Polynomial>& images) {
  if (static_cast<int>(images.size()) != p.n_vars())
    throw PreconditionError("substitution needs one image per variable");
  const int out_vars = images.empty() ? 0 : images.front().n_vars();
  for (const auto& im : images)
    if (im.n_vars() != out_vars) throw PreconditionError("substitution images differ in arity");

  std::vector<std::vector<Polynomial>> powers(images.size());
  auto power = [&](std::size_t i, int k) -> const Polynomial& {
    auto& cache = powers[i];
    if (cache.empty()) cache.push_back(Polynomial::constant(out_vars, 1.0));
    while (static_cast<int>(cache.size()) <= k) cache.push_back(cache.back() * images[i]);
    return cache[static_cast<std::size_t>(k)];
  };

  BasicPolynomial<C> r(out_vars);
  for (const auto& [m, c] : p.terms()) {
    Polynomial term = Polynomial::constant(out_vars, 1.0);
    for (int i = 0; i < p.n_vars(); ++i)
      if (m[i]) term = term * power(static_cast<std::size_t>(i), m[i]);
    r += mul(BasicPolynomial<C>::constant(out_vars, c), term);
  }
  return r;
}

/// Fixes variable `var` to `value`, dropping it from the arity.
template <class C>
BasicPolynomial<C> fix_variable(const BasicPolynomial<C>& p, int var, double value) {
  if (var < 0 || var >= p.n_vars()) throw PreconditionError("fix_variable: index out of range");
  BasicPolynomial<C> r(p.n_vars() - 1);
  for (const auto& [m, c] : p.terms()) {
    std::vector<int> e;
    e.reserve(static_cast<std::size_t>(p.n_vars() - 1));
    for (int i = 0; i < p.n_vars(); ++i)
      if (i != var) e.push_back(m[i]);
    r.add_term(Monomial(std::move(e)), c * std::pow(value, m[var]));
  }
  return r;
}

/// x -> S(x)/R(x) with a shared denominator.
struct RationalMap {
  std::vector<Polynomial> numerators;
  Polynomial denominator;

  int in_vars() const { return denominator.n_vars(); }
  int out_vars() const { return static_cast<int>(numerators.size()); }

  void validate() const {
    if (denominator.is_zero()) throw PreconditionError("rational map denominator is identically zero");
    for (const auto& s : numerators)
      if (s.n_vars() != denominator.n_vars()) throw PreconditionError("rational map arity mismatch");
  }
};

/// R^d * B(S/R), where each degree-k term of B picks up R^(d-k).
/// d defaults to the total degree of B; it must be at least that.
template <class C>
BasicPolynomial<C> compose_rational(const BasicPolynomial<C>& b, const RationalMap& map, int d = -1) {
  map.validate();
  if (b.n_vars() != map.out_vars()) throw PreconditionError("compose_rational: B arity must equal map output arity");
  if (d < 0) d = std::max(b.degree(), 0);
  if (d < b.degree()) throw PreconditionError("compose_rational: homogenisation degree below deg(B)");
  const int n = map.in_vars();

  std::vector<Polynomial> r_pow{Polynomial::constant(n, 1.0)};
  while (static_cast<int>(r_pow.size()) <= d) r_pow.push_back(r_pow.back() * map.denominator);
  std::vector<std::vector<Polynomial>> s_pow(map.numerators.size());
  auto spow = [&](std::size_t i, int k) -> const Polynomial& {
    auto& cache = s_pow[i];
    if (cache.empty()) cache.push_back(Polynomial::constant(n, 1.0));
    while (static_cast<int>(cache.size()) <= k) cache.push_back(cache.back() * map.numerators[i]);
    return cache[static_cast<std::size_t>(k)];
  };

  BasicPolynomial<C> out(n);
  for (const auto& [m, c] : b.terms()) {
    Polynomial term = r_pow[static_cast<std::size_t>(d - m.degree())];
    for (int i = 0; i < b.n_vars(); ++i)
      if (m[i]) term = term * spow(static_cast<std::size_t>(i), m[i]);
    out += mul(BasicPolynomial<C>::constant(n, c), term);
  }
  return out;
}

inline std::string to_string(const Polynomial& p) {
  if (p.is_zero()) return "0";
  std::string s;
  for (auto it = p.terms().rbegin(); it != p.terms().rend(); ++it) {
    const auto& [m, c] = *it;
    if (!s.empty()) s += c < 0 ? " - " : " + ";
    else if (c < 0) s += "-";
    const double a = std::abs(c);
    const bool unit = std::abs(a - 1.0) < 1e-15 && m.degree() > 0;
    if (!unit) s += std::to_string(a);
    if (m.degree() > 0) s += (unit ? "" : "*") + m.to_string();
  }
  return s;
}

// JSON form: array of {"coeff": c, "monomial": [e1, ..., en]}.

inline nlohmann::json to_json(const Polynomial& p) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [m, c] : p.terms()) arr.push_back({{"coeff", c}, {"monomial", m.exponents()}});
  return arr;
}

inline Polynomial polynomial_from_json(const nlohmann::json& j, int n_vars) {
  if (!j.is_array()) throw ValidationError("polynomial must be an array of terms");
  Polynomial p(n_vars);
  for (const auto& t : j) {
    if (!t.is_object() || !t.contains("coeff") || !t.contains("monomial"))
      throw ValidationError("polynomial term needs 'coeff' and 'monomial'");
    if (!t["coeff"].is_number()) throw ValidationError("polynomial coefficient must be a number");
    auto e = t["monomial"].get<std::vector<int>>();
    if (static_cast<int>(e.size()) != n_vars)
      throw ValidationError("monomial has " + std::to_string(e.size()) + " exponents, expected " +
                            std::to_string(n_vars));
    p.add_term(Monomial(std::move(e)), t["coeff"].get<double>());
  }
  return p;
}

}  // namespace privbarrier
