#pragma once

// Sum-of-squares programs on top of ConicProgram. A constraint "p is SOS" becomes
// p = z' Q z with Q >= 0 for a monomial vector z, imposed coefficient by coefficient.

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "privbarrier/conic.hpp"
#include "privbarrier/error.hpp"
#include "privbarrier/linexpr.hpp"
#include "privbarrier/poly.hpp"

namespace privbarrier {

inline constexpr int kMaxSosDegree = 40;

struct SosVariable {
  std::string label;
  std::vector<Monomial> basis;
  MatrixVar gram;
  PolyExpression expr;
};

/// z' Q z for a symbolic Gram matrix.
inline PolyExpression gram_expression(const std::vector<Monomial>& basis, const MatrixVar& q, int n_vars) {
  PolyExpression p(n_vars);
  const int k = static_cast<int>(basis.size());
  for (int i = 0; i < k; ++i)
    for (int j = i; j < k; ++j)
      p.add_term(basis[static_cast<std::size_t>(i)] * basis[static_cast<std::size_t>(j)],
                 LinExpr::var(q(i, j), i == j ? 1.0 : 2.0));
  return p;
}

/// Gram basis for a polynomial with the given support (half-degree `half`).
/// Keeps monomials inside the per-variable and total degree bounds implied by the
/// Newton polytope, then repeatedly drops m whenever m^2 is neither in the support
/// nor a cross product of two other basis elements.
inline std::vector<Monomial> newton_basis(const std::vector<Monomial>& support, int n_vars, int half, bool prune = true) {
  std::vector<Monomial> full = monomial_basis(n_vars, half);
  if (!prune || support.empty()) return full;
  std::vector<int> max_e(static_cast<std::size_t>(n_vars), 0);
  int min_deg = std::numeric_limits<int>::max();
  for (const auto& m : support) {
    for (int i = 0; i < n_vars; ++i) max_e[static_cast<std::size_t>(i)] = std::max(max_e[static_cast<std::size_t>(i)], m[i]);
    min_deg = std::min(min_deg, m.degree());
  }
  std::vector<Monomial> basis;
  for (const auto& m : full) {
    bool ok = 2 * m.degree() >= min_deg;
    for (int i = 0; i < n_vars && ok; ++i) ok = 2 * m[i] <= max_e[static_cast<std::size_t>(i)];
    if (ok) basis.push_back(m);
  }
  std::set<Monomial, GrlexLess> supp(support.begin(), support.end());
  bool changed = true;
  while (changed) {
    changed = false;
    std::map<Monomial, int, GrlexLess> cross;
    for (std::size_t i = 0; i < basis.size(); ++i)
      for (std::size_t j = i + 1; j < basis.size(); ++j) ++cross[basis[i] * basis[j]];
    std::vector<Monomial> kept;
    for (const auto& m : basis) {
      const Monomial sq = m * m;
      if (supp.count(sq) || cross.count(sq))
        kept.push_back(m);
      else
        changed = true;
    }
    basis.swap(kept);
  }
  return basis;
}

enum class MarginKind { None, Fixed, Variable };

struct PositivityOptions {
  /// Degree of SOS multipliers on inequality constraints; -1 picks the default.
  int multiplier_degree = -1;
  MarginKind margin = MarginKind::None;
  double fixed_margin = 0.0;
  /// Name under which a variable margin is reported.
  std::string margin_name;
};

struct GramFactor {
  std::string label;
  std::vector<Monomial> basis;
  Eigen::MatrixXd gram;
  Eigen::MatrixXd factor;  // rows l_k with Q = sum_k l_k' l_k
  double min_eig = 0.0;
  double clipped = 0.0;
  double residual = 0.0;  // max coefficient error of z'Qz against the constrained polynomial
};

struct SosCertificate {
  std::map<std::string, Polynomial> polynomials;
  std::map<std::string, double> scalars;
  std::map<std::string, Eigen::MatrixXd> matrices;
  std::vector<GramFactor> grams;
  double margin = 0.0;
  int iterations = 0;
  double max_eq_residual = 0.0;
  std::string status;

  double max_gram_residual() const {
    double r = 0.0;
    for (const auto& g : grams) r = std::max(r, g.residual);
    return r;
  }

  nlohmann::json to_json() const {
    using nlohmann::json;
    auto mat = [](const Eigen::MatrixXd& m) {
      json a = json::array();
      for (int i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (int j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        a.push_back(r);
      }
      return a;
    };
    json j;
    json polys = json::object();
    for (const auto& [k, p] : polynomials) polys[k] = privbarrier::to_json(p);
    j["polynomials"] = polys;
    j["scalars"] = scalars;
    json ms = json::object();
    for (const auto& [k, m] : matrices) ms[k] = mat(m);
    j["matrices"] = ms;
    json gs = json::array();
    for (const auto& g : grams) {
      json basis = json::array();
      for (const auto& m : g.basis) basis.push_back(m.exponents());
      gs.push_back({{"label", g.label},
                    {"basis", basis},
                    {"factor", mat(g.factor)},
                    {"min_eig", g.min_eig},
                    {"residual", g.residual}});
    }
    j["gram_factors"] = gs;
    j["margin"] = margin;
    j["solver"] = {{"status", status}, {"iterations", iterations}, {"max_eq_residual", max_eq_residual}};
    return j;
  }
};

class SosProgram {
 public:
  explicit SosProgram(int n_vars) : n_vars_(n_vars) {
    if (n_vars < 1) throw PreconditionError("SOS program needs at least one variable");
  }

  int n_vars() const { return n_vars_; }
  ConicProgram& conic() { return conic_; }
  const ConicProgram& conic() const { return conic_; }
  bool newton_pruning = true;

  /// Polynomial of degree <= deg with free coefficients.
  PolyExpression free_polynomial(int deg, const std::string& name = {}) {
    if (deg < 0) throw PreconditionError("negative polynomial degree");
    check_degree(deg);
    PolyExpression p(n_vars_);
    for (const auto& m : monomial_basis(n_vars_, deg))
      p.add_term(m, LinExpr::var(conic_.add_variable(name.empty() ? std::string{} : name + "[" + m.to_string() + "]")));
    if (!name.empty()) expressions_[name] = p;
    return p;
  }

  SosVariable new_sos_var(int degree, const std::string& label = {}) {
    if (degree < 0 || degree % 2) throw PreconditionError("SOS variable degree must be even and nonnegative, got " + std::to_string(degree));
    check_degree(degree);
    SosVariable s;
    s.label = label;
    s.basis = monomial_basis(n_vars_, degree / 2);
    s.gram = conic_.add_psd_matrix(static_cast<int>(s.basis.size()), label);
    s.expr = gram_expression(s.basis, s.gram, n_vars_);
    grams_.push_back({label, s.basis, s.gram, s.expr});
    return s;
  }

  /// Scalar s with s > 0 imposed strictly.
  VarId new_positive_scalar(const std::string& name) {
    MatrixVar m = conic_.add_psd_matrix(1, name, true);
    scalars_[name] = m.first;
    return m.first;
  }

  VarId new_scalar(const std::string& name) {
    VarId v = conic_.add_variable(name);
    scalars_[name] = v;
    return v;
  }

  void name_expression(const std::string& name, const PolyExpression& e) { expressions_[name] = e; }
  void name_scalar(const std::string& name, VarId v) { scalars_[name] = v; }

  /// expr = z' G z with G >= 0. Returns the index of the Gram record.
  int assert_sos(const PolyExpression& expr, const std::string& label = {}) {
    if (expr.n_vars() != n_vars_) throw PreconditionError("assert_sos: arity mismatch");
    int deg = expr.degree();
    if (deg < 0) deg = 0;
    check_degree(deg);
    if (deg % 2) {
      bool top_fixed = true;
      for (const auto& [m, c] : expr.terms())
        if (m.degree() == deg && !c.is_constant()) top_fixed = false;
      if (top_fixed)
        throw PreconditionError("assert_sos '" + label + "': odd leading degree " + std::to_string(deg) + " cannot be SOS");
      ++deg;
    }
    std::vector<Monomial> support;
    for (const auto& [m, c] : expr.terms()) support.push_back(m);
    std::vector<Monomial> basis = newton_basis(support, n_vars_, deg / 2, newton_pruning);

    PolyExpression diff = expr;
    if (!basis.empty()) {
      MatrixVar g = conic_.add_psd_matrix(static_cast<int>(basis.size()), label);
      PolyExpression ge = gram_expression(basis, g, n_vars_);
      diff -= ge;
      grams_.push_back({label, basis, g, expr});
    } else {
      grams_.push_back({label, basis, MatrixVar{}, expr});
    }
    for (const auto& [m, c] : diff.terms()) conic_.add_equality(c, label + ":" + m.to_string());
    return static_cast<int>(grams_.size() - 1);
  }

  /// f >= margin on {g_i >= 0, a_j = 0}, certified as
  /// f - margin - sum s_i g_i - sum r_j a_j in SOS with SOS multipliers s_i and free r_j.
  void assert_positive_on_set(const PolyExpression& f, const std::vector<Polynomial>& ineqs,
                              const std::vector<Polynomial>& eqs, const PositivityOptions& opt = {},
                              const std::string& label = {}) {
    if (f.n_vars() != n_vars_) throw PreconditionError("assert_positive_on_set: arity mismatch");
    const int df = std::max(f.degree(), 0);
    const int top = df + (df % 2);
    check_degree(top);
    PolyExpression rest = f;
    for (std::size_t i = 0; i < ineqs.size(); ++i) {
      const Polynomial& g = ineqs[i];
      if (g.n_vars() != n_vars_) throw PreconditionError("constraint arity mismatch");
      int md = opt.multiplier_degree;
      if (md < 0) {
        md = top - std::max(g.degree(), 0);
        if (md < 0) md = 0;
        md -= md % 2;
      }
      if (md % 2) throw PreconditionError("inequality multiplier degree must be even");
      check_degree(md + g.degree());
      SosVariable s = new_sos_var(md, label + ":mult" + std::to_string(i));
      rest -= mul(s.expr, g);
    }
    for (std::size_t j = 0; j < eqs.size(); ++j) {
      const Polynomial& a = eqs[j];
      if (a.n_vars() != n_vars_) throw PreconditionError("constraint arity mismatch");
      int rd = std::max(top - std::max(a.degree(), 0), 0);
      check_degree(rd + a.degree());
      PolyExpression r = free_polynomial(rd);
      rest -= mul(r, a);
    }
    switch (opt.margin) {
      case MarginKind::None: break;
      case MarginKind::Fixed: rest -= PolyExpression::constant(n_vars_, LinExpr(opt.fixed_margin)); break;
      case MarginKind::Variable: {
        VarId s = new_positive_scalar(opt.margin_name.empty() ? label + ":margin" : opt.margin_name);
        rest -= PolyExpression::constant(n_vars_, LinExpr::var(s));
        break;
      }
    }
    assert_sos(rest, label);
  }

  ConicSolution solve(const SolverOptions& opt = {}, const ConicBackend* backend = nullptr) const {
    return privbarrier::solve(conic_, opt, backend);
  }

  /// Resolves every named quantity and factors every Gram matrix.
  SosCertificate extract_certificate(const ConicSolution& sol, double clip = 1e-8) const {
    if (sol.status != SolveStatus::Feasible && sol.status != SolveStatus::MarginalFeasible)
      throw PreconditionError("extract_certificate needs a feasible solution");
    SosCertificate cert;
    cert.margin = sol.margin;
    cert.iterations = sol.iterations;
    cert.max_eq_residual = sol.max_eq_residual;
    cert.status = to_string(sol.status);
    for (const auto& [k, e] : expressions_) cert.polynomials[k] = resolve(e, sol.x);
    for (const auto& [k, v] : scalars_) cert.scalars[k] = sol.x[v];
    for (const auto& g : grams_) {
      GramFactor f;
      f.label = g.label;
      f.basis = g.basis;
      const int k = static_cast<int>(g.basis.size());
      f.gram = Eigen::MatrixXd::Zero(k, k);
      for (int i = 0; i < k; ++i)
        for (int j = i; j < k; ++j) f.gram(i, j) = f.gram(j, i) = sol.x[g.gram(i, j)];
      Polynomial target = resolve(g.target, sol.x);
      if (k > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f.gram);
        Eigen::VectorXd lam = es.eigenvalues();
        f.min_eig = lam.minCoeff();
        if (f.min_eig < -clip)
          throw NumericalFailure("Gram matrix '" + g.label + "' has eigenvalue " + std::to_string(f.min_eig) +
                                 " below the clip threshold");
        std::vector<int> keep;
        for (int i = 0; i < k; ++i) {
          if (lam[i] < 0) f.clipped = std::max(f.clipped, -lam[i]);
          if (lam[i] > 0) keep.push_back(i);
        }
        f.factor.resize(static_cast<Eigen::Index>(keep.size()), k);
        for (std::size_t r = 0; r < keep.size(); ++r)
          f.factor.row(static_cast<Eigen::Index>(r)) = std::sqrt(lam[keep[r]]) * es.eigenvectors().col(keep[r]).transpose();
      } else {
        f.factor.resize(0, 0);
      }
      f.residual = max_abs_coefficient(target - expand_factor(f, n_vars_));
      cert.grams.push_back(std::move(f));
    }
    return cert;
  }

  /// Sum of squares of the factor rows against the basis.
  static Polynomial expand_factor(const GramFactor& f, int n_vars) {
    Polynomial s(n_vars);
    for (int r = 0; r < f.factor.rows(); ++r) {
      Polynomial q(n_vars);
      for (std::size_t i = 0; i < f.basis.size(); ++i) q.add_term(f.basis[i], f.factor(r, static_cast<Eigen::Index>(i)));
      s += q * q;
    }
    return s;
  }

  static double max_abs_coefficient(const Polynomial& p) {
    double m = 0.0;
    for (const auto& [mono, c] : p.terms()) m = std::max(m, std::abs(c));
    return m;
  }

 private:
  struct GramRecord {
    std::string label;
    std::vector<Monomial> basis;
    MatrixVar gram;
    PolyExpression target;
  };

  void check_degree(int d) const {
    if (d > kMaxSosDegree)
      throw DegreeOverflow("polynomial degree " + std::to_string(d) + " exceeds the cap of " + std::to_string(kMaxSosDegree));
  }

  int n_vars_;
  ConicProgram conic_;
  std::vector<GramRecord> grams_;
  std::map<std::string, PolyExpression> expressions_;
  std::map<std::string, VarId> scalars_;
};

}  // namespace privbarrier
