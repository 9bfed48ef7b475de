#pragma once

// Semidefinite feasibility/optimisation problems in LMI form:
//
//   variables x in R^m
//   F_k(x) = F0_k + sum_i x_i F_ik  >= 0   (> 0 when the block is strict)
//   A x = c,  G x >= h,  optional linear objective.
//
// Strict blocks are decided through a margin: maximise t subject to
// F_k(x) - t I >= 0 on every strict block. Programs without strict blocks and
// without objective are solved in elastic form (every cone shifted by t <= 0)
// so that infeasibility shows up as a strictly negative optimum.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "privbarrier/error.hpp"
#include "privbarrier/linexpr.hpp"

namespace privbarrier {

enum class BlockKind { Pencil, MatrixVariable };

/// One symmetric matrix-valued affine constraint.
struct LmiBlock {
  std::string label;
  int dim = 0;
  bool strict = false;
  BlockKind kind = BlockKind::Pencil;
  Eigen::MatrixXd f0;                                      // Pencil
  std::vector<std::pair<VarId, Eigen::MatrixXd>> coeffs;  // Pencil
  VarId first_var = -1;                                    // MatrixVariable

  /// Position of entry (i, j) among a matrix variable's scalars (upper triangle, row-major).
  static int packed_index(int dim, int i, int j) {
    if (i > j) std::swap(i, j);
    return i * dim - i * (i - 1) / 2 + (j - i);
  }

  template <class Vec>
  Eigen::MatrixXd evaluate(const Vec& x) const {
    Eigen::MatrixXd m(dim, dim);
    if (kind == BlockKind::MatrixVariable) {
      for (int i = 0; i < dim; ++i)
        for (int j = i; j < dim; ++j) m(i, j) = m(j, i) = x[first_var + packed_index(dim, i, j)];
      return m;
    }
    m = f0;
    for (const auto& [v, f] : coeffs) m += x[v] * f;
    return m;
  }
};

/// Handle to a symmetric matrix variable registered as a PSD block.
struct MatrixVar {
  int block = -1;
  int dim = 0;
  VarId first = -1;
  VarId operator()(int i, int j) const { return first + LmiBlock::packed_index(dim, i, j); }
};

struct LinearRow {
  std::vector<std::pair<VarId, double>> coeffs;
  double rhs = 0.0;
  std::string label;

  template <class Vec>
  double lhs(const Vec& x) const {
    double s = 0.0;
    for (const auto& [v, c] : coeffs) s += c * x[v];
    return s;
  }
};

struct Objective {
  LinExpr expr;
  bool maximize = true;
};

class ConicProgram {
 public:
  VarId add_variable(std::string name = {}) {
    names_.push_back(std::move(name));
    nonneg_.push_back(false);
    matrix_owned_.push_back(false);
    return static_cast<VarId>(names_.size() - 1);
  }

  /// Scalar variable constrained to x >= 0 (entrywise-positive cone).
  VarId add_nonneg_variable(std::string name = {}) {
    VarId v = add_variable(std::move(name));
    nonneg_[static_cast<std::size_t>(v)] = true;
    return v;
  }

  /// Symmetric dim x dim matrix variable Q with Q >= 0.
  MatrixVar add_psd_matrix(int dim, std::string label = {}, bool strict = false) {
    if (dim < 1) throw PreconditionError("psd matrix dimension must be positive");
    LmiBlock b;
    b.label = std::move(label);
    b.dim = dim;
    b.strict = strict;
    b.kind = BlockKind::MatrixVariable;
    b.first_var = n_scalar_vars();
    const int count = dim * (dim + 1) / 2;
    for (int k = 0; k < count; ++k) {
      add_variable();
      matrix_owned_.back() = true;
    }
    blocks_.push_back(std::move(b));
    return MatrixVar{static_cast<int>(blocks_.size() - 1), dim, blocks_.back().first_var};
  }

  int add_lmi(LmiBlock block) {
    if (block.kind != BlockKind::Pencil) throw PreconditionError("add_lmi takes pencil blocks");
    if (block.f0.rows() != block.dim || block.f0.cols() != block.dim)
      throw PreconditionError("LMI block '" + block.label + "' has inconsistent F0 size");
    auto check_sym = [&](const Eigen::MatrixXd& f) {
      if (f.rows() != block.dim || f.cols() != block.dim)
        throw PreconditionError("LMI block '" + block.label + "' has inconsistent coefficient size");
      if ((f - f.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw PreconditionError("LMI block '" + block.label + "' is not symmetric");
    };
    check_sym(block.f0);
    for (const auto& [v, f] : block.coeffs) {
      check_var(v);
      check_sym(f);
    }
    blocks_.push_back(std::move(block));
    return static_cast<int>(blocks_.size() - 1);
  }

  /// Builds a pencil block from a matrix of affine expressions.
  int add_lmi(const std::vector<std::vector<LinExpr>>& entries, std::string label, bool strict) {
    const int n = static_cast<int>(entries.size());
    LmiBlock b;
    b.label = std::move(label);
    b.dim = n;
    b.strict = strict;
    b.f0 = Eigen::MatrixXd::Zero(n, n);
    std::map<VarId, Eigen::MatrixXd> coeffs;
    for (int i = 0; i < n; ++i) {
      if (static_cast<int>(entries[static_cast<std::size_t>(i)].size()) != n)
        throw PreconditionError("LMI entry matrix must be square");
      for (int j = 0; j < n; ++j) {
        const LinExpr& e = entries[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        b.f0(i, j) = e.constant;
        for (const auto& [v, c] : e.terms) {
          auto [it, ins] = coeffs.try_emplace(v, Eigen::MatrixXd::Zero(n, n));
          it->second(i, j) += c;
        }
      }
    }
    for (auto& [v, f] : coeffs) b.coeffs.emplace_back(v, std::move(f));
    return add_lmi(std::move(b));
  }

  /// expr == 0
  void add_equality(const LinExpr& expr, std::string label = {}) {
    equalities_.push_back(to_row(expr, std::move(label)));
  }
  /// expr >= 0
  void add_inequality(const LinExpr& expr, std::string label = {}) {
    inequalities_.push_back(to_row(expr, std::move(label)));
  }

  void set_objective(LinExpr expr, bool maximize = true) {
    for (const auto& [v, c] : expr.terms) check_var(v);
    objective_ = Objective{std::move(expr), maximize};
  }

  int n_scalar_vars() const { return static_cast<int>(names_.size()); }
  const std::vector<LmiBlock>& lmi_blocks() const { return blocks_; }
  const std::vector<LinearRow>& equalities() const { return equalities_; }
  const std::vector<LinearRow>& inequalities() const { return inequalities_; }
  const std::optional<Objective>& objective() const { return objective_; }
  bool is_nonneg(VarId v) const { return nonneg_[static_cast<std::size_t>(v)]; }
  bool is_matrix_entry(VarId v) const { return matrix_owned_[static_cast<std::size_t>(v)]; }
  const std::string& name(VarId v) const { return names_[static_cast<std::size_t>(v)]; }
  bool has_strict_blocks() const {
    for (const auto& b : blocks_)
      if (b.strict) return true;
    return false;
  }

  /// Returns a copy with every pencil block scaled by `s` (both F0 and F_i).
  ConicProgram with_block_scaled(int block, double s) const {
    ConicProgram p = *this;
    auto& b = p.blocks_.at(static_cast<std::size_t>(block));
    if (b.kind != BlockKind::Pencil) throw PreconditionError("only pencil blocks can be rescaled");
    b.f0 *= s;
    for (auto& [v, f] : b.coeffs) f *= s;
    return p;
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
    auto rows = [](const std::vector<LinearRow>& rs) {
      json a = json::array();
      for (const auto& r : rs) {
        json c = json::array();
        for (const auto& [v, x] : r.coeffs) c.push_back({v, x});
        a.push_back({{"label", r.label}, {"coeffs", c}, {"rhs", r.rhs}});
      }
      return a;
    };
    json j;
    j["n_scalar_vars"] = n_scalar_vars();
    json nn = json::array();
    for (int v = 0; v < n_scalar_vars(); ++v)
      if (is_nonneg(v)) nn.push_back(v);
    j["nonneg_vars"] = nn;
    json blocks = json::array();
    for (const auto& b : blocks_) {
      json jb{{"label", b.label}, {"dim", b.dim}, {"strict", b.strict}};
      if (b.kind == BlockKind::MatrixVariable) {
        jb["kind"] = "matrix_variable";
        jb["first_var"] = b.first_var;
      } else {
        jb["kind"] = "pencil";
        jb["F0"] = mat(b.f0);
        json cs = json::array();
        for (const auto& [v, f] : b.coeffs) cs.push_back({{"var", v}, {"F", mat(f)}});
        jb["coeffs"] = cs;
      }
      blocks.push_back(jb);
    }
    j["lmi_blocks"] = blocks;
    j["linear_eq"] = rows(equalities_);
    j["linear_ineq"] = rows(inequalities_);
    if (objective_) {
      json c = json::array();
      for (const auto& [v, x] : objective_->expr.terms) c.push_back({v, x});
      j["objective"] = {{"maximize", objective_->maximize}, {"coeffs", c}, {"constant", objective_->expr.constant}};
    }
    return j;
  }

 private:
  void check_var(VarId v) const {
    if (v < 0 || v >= n_scalar_vars()) throw PreconditionError("unknown conic variable " + std::to_string(v));
  }
  LinearRow to_row(const LinExpr& e, std::string label) const {
    LinearRow r;
    r.label = std::move(label);
    for (const auto& [v, c] : e.terms) {
      check_var(v);
      if (c != 0.0) r.coeffs.emplace_back(v, c);
    }
    r.rhs = -e.constant;
    return r;
  }

  std::vector<std::string> names_;
  std::vector<bool> nonneg_;
  std::vector<bool> matrix_owned_;
  std::vector<LmiBlock> blocks_;
  std::vector<LinearRow> equalities_;
  std::vector<LinearRow> inequalities_;
  std::optional<Objective> objective_;
};

enum class SolveStatus { Feasible, Infeasible, MarginalFeasible, NumericalFailure };

inline std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Feasible: return "Feasible";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::MarginalFeasible: return "MarginalFeasible";
    case SolveStatus::NumericalFailure: return "NumericalFailure";
  }
  return "?";
}

struct SolverOptions {
  double tol = 1e-7;
  double strict_eps = 1e-6;
  double t_max = 1.0;
  int max_iterations = 200;
  bool verbose = false;
  /// Optional starting values for the scalar variables (used for the free part only).
  std::optional<Eigen::VectorXd> warm_start;
};

struct ConicSolution {
  SolveStatus status = SolveStatus::NumericalFailure;
  Eigen::VectorXd x;
  /// Optimal t of the margin problem (elastic optimum when no block is strict).
  double margin = 0.0;
  double objective_value = 0.0;
  double max_eq_residual = 0.0;
  std::vector<double> block_min_eig;
  int iterations = 0;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double rel_gap = 0.0;
  std::string message;

  nlohmann::json to_json() const {
    nlohmann::json j{{"status", to_string(status)},
                     {"margin", margin},
                     {"objective", objective_value},
                     {"max_eq_residual", max_eq_residual},
                     {"block_min_eig", block_min_eig},
                     {"iterations", iterations},
                     {"rel_gap", rel_gap},
                     {"message", message}};
    j["x"] = std::vector<double>(x.data(), x.data() + x.size());
    return j;
  }
};

/// Pluggable conic backend.
class ConicBackend {
 public:
  virtual ~ConicBackend() = default;
  virtual ConicSolution solve(const ConicProgram& program, const SolverOptions& options) const = 0;
  virtual std::string name() const = 0;
};

struct BlockCheck {
  std::string label;
  int dim = 0;
  bool strict = false;
  double min_eig = 0.0;
  bool violated = false;
};

struct SolutionReport {
  std::vector<BlockCheck> blocks;
  double max_eq_residual = 0.0;
  double max_ineq_violation = 0.0;
  double max_nonneg_violation = 0.0;
  bool ok = true;

  nlohmann::json to_json() const {
    nlohmann::json b = nlohmann::json::array();
    for (const auto& c : blocks)
      b.push_back({{"label", c.label}, {"dim", c.dim}, {"strict", c.strict}, {"min_eig", c.min_eig}, {"violated", c.violated}});
    return {{"ok", ok},
            {"blocks", b},
            {"max_eq_residual", max_eq_residual},
            {"max_ineq_violation", max_ineq_violation},
            {"max_nonneg_violation", max_nonneg_violation}};
  }
};

/// Recomputes every residual of `x` from scratch with eigen-decompositions
/// (the solver itself only ever uses Cholesky factors).
inline SolutionReport validate_solution(const ConicProgram& program, const Eigen::VectorXd& x, double tol = 1e-7) {
  if (x.size() != program.n_scalar_vars()) throw PreconditionError("solution vector has wrong size");
  SolutionReport rep;
  for (const auto& b : program.lmi_blocks()) {
    Eigen::MatrixXd m = b.evaluate(x);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    BlockCheck c{b.label, b.dim, b.strict, es.eigenvalues().minCoeff(), false};
    c.violated = b.strict ? !(c.min_eig > 0.0) : c.min_eig < -tol;
    rep.ok = rep.ok && !c.violated;
    rep.blocks.push_back(c);
  }
  for (const auto& r : program.equalities())
    rep.max_eq_residual = std::max(rep.max_eq_residual, std::abs(r.lhs(x) - r.rhs));
  for (const auto& r : program.inequalities())
    rep.max_ineq_violation = std::max(rep.max_ineq_violation, r.rhs - r.lhs(x));
  for (VarId v = 0; v < program.n_scalar_vars(); ++v)
    if (program.is_nonneg(v)) rep.max_nonneg_violation = std::max(rep.max_nonneg_violation, -x[v]);
  rep.ok = rep.ok && rep.max_eq_residual <= 10 * tol && rep.max_ineq_violation <= 10 * tol &&
           rep.max_nonneg_violation <= 10 * tol;
  return rep;
}

inline SolutionReport validate_solution(const ConicProgram& program, const ConicSolution& solution, double tol = 1e-7) {
  if (solution.status != SolveStatus::Feasible && solution.status != SolveStatus::MarginalFeasible)
    throw PreconditionError("validate_solution needs a feasible solution");
  return validate_solution(program, solution.x, tol);
}

}  // namespace privbarrier

#include "privbarrier/ipm.hpp"
