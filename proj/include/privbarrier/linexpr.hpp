#pragma once

#include <cmath>
#include <map>
#include <span>

#include "privbarrier/poly.hpp"

namespace privbarrier {

using VarId = int;

/// Affine function of conic decision variables: constant + sum c_v x_v.
struct LinExpr {
  std::map<VarId, double> terms;
  double constant = 0.0;

  LinExpr() = default;
  LinExpr(double c) : constant(c) {}  // NOLINT: implicit lift of constants

  static LinExpr var(VarId v, double c = 1.0) {
    LinExpr e;
    if (c != 0.0) e.terms.emplace(v, c);
    return e;
  }

  LinExpr& operator+=(const LinExpr& o) {
    constant += o.constant;
    for (const auto& [v, c] : o.terms) {
      auto [it, inserted] = terms.try_emplace(v, c);
      if (!inserted) {
        it->second += c;
        if (it->second == 0.0) terms.erase(it);
      }
    }
    return *this;
  }
  LinExpr& operator-=(const LinExpr& o) { return *this += o * -1.0; }
  LinExpr& operator*=(double s) {
    constant *= s;
    if (s == 0.0) terms.clear();
    for (auto& [v, c] : terms) c *= s;
    return *this;
  }
  friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
  friend LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
  friend LinExpr operator*(LinExpr a, double s) { return a *= s; }
  friend LinExpr operator*(double s, LinExpr a) { return a *= s; }

  bool is_constant() const { return terms.empty(); }

  template <class Vec>
  double eval(const Vec& x) const {
    double s = constant;
    for (const auto& [v, c] : terms) s += c * x[v];
    return s;
  }
};

inline bool coeff_is_zero(const LinExpr& e, double tol = kCoefficientPruneTol) {
  if (std::abs(e.constant) > tol) return false;
  for (const auto& [v, c] : e.terms)
    if (std::abs(c) > tol) return false;
  return true;
}

/// Polynomial whose coefficients are affine in decision variables.
using PolyExpression = BasicPolynomial<LinExpr>;

inline PolyExpression lift(const Polynomial& p) {
  PolyExpression r(p.n_vars());
  for (const auto& [m, c] : p.terms()) r.add_term(m, LinExpr(c));
  return r;
}

/// Numeric polynomial obtained by plugging decision values into every coefficient.
template <class Vec>
Polynomial resolve(const PolyExpression& p, const Vec& x) {
  Polynomial r(p.n_vars());
  for (const auto& [m, c] : p.terms()) r.add_term(m, c.eval(x));
  return r;
}

}  // namespace privbarrier
