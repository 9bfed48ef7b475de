#pragma once

// Barrier-certificate verification of belief privacy.
//
// MDP:   B(b) = b̄'Vb̄ with b̄ = (b, 1), conditions as linear matrix inequalities.
// POMDP: B polynomial of degree d, conditions as SOS constraints on a chart of
//        the belief simplex.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <atomic>
#include <memory>
#include <future>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "privbarrier/belief.hpp"
#include "privbarrier/conic.hpp"
#include "privbarrier/error.hpp"
#include "privbarrier/model.hpp"
#include "privbarrier/poly.hpp"
#include "privbarrier/sos.hpp"

namespace privbarrier {

enum class Method { MdpSdp, PomdpFiniteSos, PomdpInfiniteSos };
enum class Status { Certified, Unknown };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::MdpSdp: return "MdpSdp";
    case Method::PomdpFiniteSos: return "PomdpFiniteSos";
    case Method::PomdpInfiniteSos: return "PomdpInfiniteSos";
  }
  return "?";
}

inline std::string to_string(Status s) { return s == Status::Certified ? "Certified" : "Unknown"; }

struct VerifyOptions {
  int degree = 2;
  /// Restrict every condition to the reachable belief region {b >= 0, sum b = mass}.
  bool localize_simplex = true;
  /// Finite horizon: one polynomial in (t, b) instead of one polynomial per step.
  bool time_polynomial = false;
  /// Decrease factors tried in order; B(next) <= kappa * B(b).
  std::vector<double> kappas{1.0, 0.75, 0.5, 0.25, 0.0};
  /// Bound on every certificate coefficient, so the margin is scale-free.
  double coefficient_box = 1.0;
  SolverOptions solver;
  int validation_samples = 10000;
  double decrease_tol = 1e-7;
  unsigned seed = 0;
  bool cross_check = true;
  int cross_check_depth = 10;
  long long cross_check_nodes = 4000000;
  int jobs = 1;
  std::function<void(const std::string&)> log;
  /// Called with every conic program before it is solved.
  std::function<void(const ConicProgram&, double kappa)> program_sink;
};

// ---- belief charts ----------------------------------------------------------

/// Coordinates for polynomials over beliefs. Reduced charts drop the last state,
/// b_n = mass - sum of the others.
struct BeliefChart {
  int n_states = 0;
  bool reduced = false;
  double mass = 1.0;

  int vars() const { return reduced ? n_states - 1 : n_states; }

  Polynomial belief(int i) const {
    const int k = vars();
    if (!reduced || i < n_states - 1) return variable_poly(k, i);
    std::vector<double> c(static_cast<std::size_t>(k), -1.0);
    return affine_poly(c, mass);
  }

  Polynomial affine(const Eigen::VectorXd& a, double c0 = 0.0) const {
    Polynomial p = Polynomial::constant(vars(), c0);
    for (int i = 0; i < n_states; ++i)
      if (a[i] != 0.0) p += belief(i) * a[i];
    return p;
  }

  std::vector<Polynomial> beliefs() const {
    std::vector<Polynomial> out;
    for (int i = 0; i < n_states; ++i) out.push_back(belief(i));
    return out;
  }

  /// Nonnegativity of every belief entry, when the chart is localised.
  std::vector<Polynomial> region() const {
    if (!reduced) return {};
    return beliefs();
  }

  Eigen::VectorXd coords(const Eigen::VectorXd& b) const { return reduced ? Eigen::VectorXd(b.head(n_states - 1)) : b; }

  /// Update map for (a, z) in chart coordinates: next chart coords = S / R.
  RationalMap update_map(const Model& m, int a, std::optional<int> z) const {
    const Eigen::MatrixXd& H = m.transitions[static_cast<std::size_t>(a)];
    Eigen::VectorXd o = Eigen::VectorXd::Ones(n_states);
    if (z) o = m.observation_fn[static_cast<std::size_t>(a)].col(*z);
    RationalMap map;
    map.denominator = Polynomial::constant(vars(), 0.0);
    std::vector<Polynomial> next;
    for (int i = 0; i < n_states; ++i) next.push_back(affine(Eigen::VectorXd(o[i] * H.row(i).transpose())));
    for (int i = 0; i < vars(); ++i) map.numerators.push_back(next[static_cast<std::size_t>(i)]);
    if (z) {
      for (const auto& p : next) map.denominator += p;
    } else {
      map.denominator = Polynomial::constant(vars(), 1.0);
    }
    return map;
  }

  std::vector<std::string> variable_names(const Model& m) const {
    std::vector<std::string> v(m.states.begin(), m.states.begin() + vars());
    return v;
  }
};

// ---- certificates -----------------------------------------------------------

struct BarrierCertificate {
  Method method = Method::MdpSdp;
  double kappa = 1.0;
  BeliefChart chart;
  /// MDP: B(b) = (b,1)' V (b,1).
  std::optional<Eigen::MatrixXd> V;
  /// POMDP: barriers[t] for t = 0..T (one entry when time-invariant), in chart variables.
  std::vector<Polynomial> barriers;
  std::optional<SosCertificate> sos;
  std::map<std::string, double> scalars;
  std::map<std::string, Eigen::MatrixXd> matrices;

  int horizon() const { return static_cast<int>(barriers.size()) - 1; }

  double eval(const Eigen::VectorXd& b, int t = 0) const {
    if (V) {
      Eigen::VectorXd bb(b.size() + 1);
      bb << b, 1.0;
      return bb.dot(*V * bb);
    }
    if (barriers.empty()) throw PreconditionError("empty certificate");
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(t, 0)), barriers.size() - 1);
    const Eigen::VectorXd y = chart.coords(b);
    return privbarrier::eval(barriers[k], std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
  }

  double scale() const {
    double s = 0.0;
    if (V) s = V->cwiseAbs().maxCoeff();
    for (const auto& p : barriers) s = std::max(s, SosProgram::max_abs_coefficient(p));
    return s > 0.0 ? s : 1.0;
  }

  nlohmann::json to_json(const Model& m) const {
    nlohmann::json j;
    j["kappa"] = kappa;
    if (V) {
      j["V"] = detail::matrix_json(*V);
      j["form"] = "(b,1)' V (b,1)";
    } else {
      j["chart"] = {{"variables", chart.variable_names(m)},
                    {"eliminated", chart.reduced ? nlohmann::json(m.states.back()) : nlohmann::json(nullptr)},
                    {"mass", chart.mass}};
      nlohmann::json bs = nlohmann::json::array();
      for (const auto& p : barriers) bs.push_back({{"terms", privbarrier::to_json(p)}, {"text", privbarrier::to_string(p)}});
      j["barriers"] = bs;
    }
    j["scalars"] = scalars;
    nlohmann::json ms = nlohmann::json::object();
    for (const auto& [k, v] : matrices) ms[k] = detail::matrix_json(v);
    j["matrices"] = ms;
    if (sos) j["sos"] = sos->to_json();
    return j;
  }
};

struct ValidationReport {
  int unsafe_samples = 0;
  int initial_samples = 0;
  int decrease_samples = 0;
  double worst_unsafe = std::numeric_limits<double>::infinity();     // min B on unsafe samples
  double worst_initial = -std::numeric_limits<double>::infinity();   // max B on initial samples
  double worst_decrease = -std::numeric_limits<double>::infinity();  // max B(next) - kappa B(b), normalised
  std::vector<std::string> violations;
  bool passed = true;

  nlohmann::json to_json() const {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"unsafe_samples", unsafe_samples},   {"initial_samples", initial_samples},
            {"decrease_samples", decrease_samples}, {"worst_unsafe", num(worst_unsafe)},
            {"worst_initial", num(worst_initial)}, {"worst_decrease", num(worst_decrease)},
            {"violations", violations},            {"passed", passed}};
  }
};

struct Attempt {
  double kappa = 1.0;
  std::string solver_status;
  double margin = 0.0;
  int iterations = 0;
  double seconds = 0.0;
  std::string message;

  nlohmann::json to_json() const {
    return {{"kappa", kappa}, {"solver_status", solver_status}, {"margin", margin},
            {"iterations", iterations}, {"seconds", seconds}, {"message", message}};
  }
};

struct VerificationOutcome {
  Status status = Status::Unknown;
  Method method = Method::MdpSdp;
  double gamma = 0.0;
  int degree = 2;
  std::optional<int> horizon;
  std::optional<BarrierCertificate> certificate;
  std::optional<ValidationReport> validation;
  std::optional<FalsifyResult> cross_check;
  std::vector<Attempt> attempts;
  double seconds = 0.0;
  std::string message;

  nlohmann::json to_json(const Model& m) const {
    nlohmann::json j;
    j["status"] = to_string(status);
    j["method"] = to_string(method);
    j["gamma"] = gamma;
    if (method != Method::MdpSdp) j["degree"] = degree;
    j["horizon"] = horizon ? nlohmann::json(*horizon) : nlohmann::json("infinite");
    j["certificate"] = certificate ? certificate->to_json(m) : nlohmann::json(nullptr);
    j["validation"] = validation ? validation->to_json() : nlohmann::json(nullptr);
    j["falsifier"] = cross_check ? cross_check->to_json(m) : nlohmann::json(nullptr);
    nlohmann::json at = nlohmann::json::array();
    for (const auto& a : attempts) at.push_back(a.to_json());
    j["attempts"] = at;
    j["message"] = message;
    j["wall_time_s"] = seconds;
    return j;
  }
};

// ---- helpers ----------------------------------------------------------------

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void say(const VerifyOptions& opt, const std::string& s) {
  if (opt.log) opt.log(s);
}

/// Mass of the beliefs a certificate has to cover.
inline double belief_mass(const Model& m, const PrivacySpec& spec) {
  if (m.is_pomdp()) return 1.0;
  if (const auto* p = std::get_if<PointSet>(&spec.initial_set)) return p->b0.sum();
  return 1.0;
}

inline Eigen::VectorXd initial_point(const Model& m, const PointSet& p) {
  Eigen::VectorXd b = p.b0;
  if (m.is_pomdp() && b.sum() > 0) b /= b.sum();
  return b;
}

/// Actions (and observations with some positive probability) of the switched system.
inline std::vector<std::pair<int, std::optional<int>>> modes(const Model& m) {
  std::vector<std::pair<int, std::optional<int>>> out;
  for (int a = 0; a < m.n_actions(); ++a) {
    if (!m.is_pomdp()) {
      out.emplace_back(a, std::nullopt);
      continue;
    }
    for (int z = 0; z < m.n_observations(); ++z)
      if (m.observation_fn[static_cast<std::size_t>(a)].col(z).maxCoeff() > 0.0) out.emplace_back(a, z);
  }
  return out;
}

inline std::optional<Eigen::VectorXd> next_belief(const Model& m, const Eigen::VectorXd& b, int a, std::optional<int> z) {
  Eigen::VectorXd hb = m.transitions[static_cast<std::size_t>(a)] * b;
  if (!z) return hb;
  Eigen::VectorXd num = m.observation_fn[static_cast<std::size_t>(a)].col(*z).cwiseProduct(hb);
  const double p = num.sum();
  if (p <= kBranchTol) return std::nullopt;
  return Eigen::VectorXd(num / p);
}

inline void box(ConicProgram& prog, VarId v, double bound, const std::string& label) {
  prog.add_inequality(LinExpr(bound) - LinExpr::var(v), label + "<=");
  prog.add_inequality(LinExpr(bound) + LinExpr::var(v), label + ">=");
}

inline void box(SosProgram& prog, const PolyExpression& p, double bound, const std::string& label) {
  for (const auto& [m, c] : p.terms())
    for (const auto& [v, coef] : c.terms) box(prog.conic(), v, bound / std::abs(coef), label + "[" + m.to_string() + "]");
}

// Polynomial with coefficients in [-bound, bound], written as u - bound with 0 <= u <= 2 bound so the
// solver sees no free columns.
inline PolyExpression boxed_polynomial(SosProgram& prog, int n_vars, int deg, double bound, const std::string& name) {
  PolyExpression p(n_vars);
  for (const auto& m : monomial_basis(n_vars, deg)) {
    const VarId u = prog.conic().add_nonneg_variable(name + "[" + m.to_string() + "]");
    prog.conic().add_inequality(LinExpr(2.0 * bound) - LinExpr::var(u), name + "[" + m.to_string() + "]<=");
    p.add_term(m, LinExpr::var(u) - LinExpr(bound));
  }
  return p;
}

inline int feasible_falsify_depth(const Model& m, std::size_t grid, int requested, long long budget) {
  const double branch = static_cast<double>(m.n_actions() * std::max(1, m.n_observations()));
  int d = 0;
  double nodes = static_cast<double>(grid);
  while (d < requested) {
    double more = nodes * branch + static_cast<double>(grid);
    if (more > static_cast<double>(budget)) break;
    nodes = more;
    ++d;
  }
  return d;
}

inline std::vector<Polynomial> initial_set_constraints(const Model& m, const PrivacySpec& spec, const BeliefChart& chart) {
  std::vector<Polynomial> g;
  if (const auto* p = std::get_if<PolytopeSet>(&spec.initial_set)) {
    const int n = m.n_states();
    for (int r = 0; r < p->E0.rows(); ++r)
      g.push_back(chart.affine(Eigen::VectorXd(p->E0.row(r).head(n).transpose()), p->E0(r, n)));
  } else if (const auto* s = std::get_if<SemialgebraicSet>(&spec.initial_set)) {
    for (const auto& l : s->polys) g.push_back(-substitute(l, chart.beliefs()));
  }
  return g;
}

}  // namespace detail

/// The same system seen through one uninformative observation.
inline Model embed_as_pomdp(const Model& m) {
  if (m.is_pomdp()) return m;
  Model p = m;
  p.observations = {"none"};
  for (int a = 0; a < m.n_actions(); ++a) p.observation_fn.push_back(Eigen::MatrixXd::Ones(m.n_states(), 1));
  if (p.initial.sum() > 0) p.initial /= p.initial.sum();
  p.validate();
  return p;
}

inline PrivacySpec with_lambda(PrivacySpec s, double lambda) {
  s.lambda = lambda;
  return s;
}

// ---- certificate validation ---------------------------------------------------

inline ValidationReport validate_certificate(const Model& model, const PrivacySpec& spec, const BarrierCertificate& cert,
                                             int n_samples = 10000, unsigned seed = 0, double decrease_tol = 1e-7) {
  ValidationReport rep;
  std::mt19937_64 rng(seed);
  const int n = model.n_states();
  const double mass = cert.chart.mass;
  const double scale = cert.scale();
  const UnsafeHalfspace u = unsafe_halfspace(spec, model);
  const int horizon = cert.V ? 0 : cert.horizon();
  std::uniform_int_distribution<int> pick_t(1, std::max(1, horizon));

  auto fail = [&](const std::string& s) {
    rep.passed = false;
    if (rep.violations.size() < 20) rep.violations.push_back(s);
  };

  // unsafe region, by rejection from the uniform distribution on the simplex
  for (long long tries = 0; rep.unsafe_samples < n_samples && tries < 200LL * n_samples; ++tries) {
    Eigen::VectorXd b = sample_simplex(rng, n, mass);
    if (!u.contains(b)) continue;
    ++rep.unsafe_samples;
    for (int t = 0; t <= horizon; ++t) {
      const double v = cert.eval(b, t);
      rep.worst_unsafe = std::min(rep.worst_unsafe, v);
      if (!(v > 0.0)) fail("B" + (horizon ? "_" + std::to_string(t) : std::string{}) + " = " + std::to_string(v) +
                           " on an unsafe belief with secret mass " + std::to_string(u.w.dot(b)));
    }
  }

  std::vector<Belief> init = default_grid(model, spec, n_samples, seed + 1);
  for (const auto& b : init) {
    ++rep.initial_samples;
    const double v = cert.eval(b.values, 0);
    rep.worst_initial = std::max(rep.worst_initial, v);
    if (!(v < 0.0)) fail("B = " + std::to_string(v) + " on an initial belief");
  }

  const auto modes = detail::modes(model);
  for (int k = 0; k < n_samples; ++k) {
    Eigen::VectorXd b = sample_simplex(rng, n, mass);
    const int t = pick_t(rng);
    for (const auto& [a, z] : modes) {
      auto nb = detail::next_belief(model, b, a, z);
      if (!nb) continue;
      const double d = (cert.eval(*nb, t) - cert.kappa * cert.eval(b, t - 1)) / scale;
      rep.worst_decrease = std::max(rep.worst_decrease, d);
      if (d > decrease_tol) fail("decrease condition off by " + std::to_string(d) + " under action " + model.actions[static_cast<std::size_t>(a)]);
    }
    ++rep.decrease_samples;
  }
  return rep;
}

// ---- MDP: linear matrix inequalities -------------------------------------------

namespace detail {

struct MdpProgram {
  ConicProgram prog;
  std::vector<VarId> V;  // packed upper triangle, (n+1) x (n+1)
  std::vector<VarId> U;
  VarId su = -1;
  int dim = 0;
  int n0 = 0;

  LinExpr v(int i, int j) const {
    if (i > j) std::swap(i, j);
    return LinExpr::var(V[static_cast<std::size_t>(LmiBlock::packed_index(dim, i, j))]);
  }

  Eigen::MatrixXd value(const std::vector<VarId>& vars, int d, const Eigen::VectorXd& x) const {
    Eigen::MatrixXd M(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) M(i, j) = M(j, i) = x[vars[static_cast<std::size_t>(LmiBlock::packed_index(d, i, j))]];
    return M;
  }
};

using LinMatrix = std::vector<std::vector<LinExpr>>;

inline LinMatrix zeros(int d) { return LinMatrix(static_cast<std::size_t>(d), std::vector<LinExpr>(static_cast<std::size_t>(d))); }

/// l y' + y l' + N with l = (1,...,1,-mass), y free, N >= 0 entrywise: vanishes or is
/// nonnegative on (b,1) for every b >= 0 of total mass `mass`.
inline LinMatrix localisation(ConicProgram& prog, int n, double mass, const std::string& label) {
  const int d = n + 1;
  LinMatrix L = zeros(d);
  std::vector<LinExpr> y;
  for (int i = 0; i < d; ++i) y.push_back(LinExpr::var(prog.add_variable(label + ".y" + std::to_string(i))));
  for (int i = 0; i < d; ++i) {
    const double li = i < n ? 1.0 : -mass;
    for (int j = 0; j < d; ++j) {
      const double lj = j < n ? 1.0 : -mass;
      L[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += y[static_cast<std::size_t>(j)] * li + y[static_cast<std::size_t>(i)] * lj;
    }
  }
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      LinExpr nij = LinExpr::var(prog.add_nonneg_variable(label + ".N" + std::to_string(i) + std::to_string(j)));
      L[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += nij;
      if (i != j) L[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] += nij;
    }
  return L;
}

inline MdpProgram build_mdp_program(const Model& model, const PrivacySpec& spec, double kappa, const VerifyOptions& opt) {
  const int n = model.n_states();
  const int d = n + 1;
  const double mass = belief_mass(model, spec);
  const Eigen::MatrixXd E = initial_polytope_matrix(spec, model);
  const UnsafeHalfspace u = unsafe_halfspace(spec, model);

  MdpProgram mp;
  mp.dim = d;
  mp.n0 = static_cast<int>(E.rows());
  ConicProgram& prog = mp.prog;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      VarId v = prog.add_variable("V" + std::to_string(i) + std::to_string(j));
      mp.V.push_back(v);
      box(prog, v, opt.coefficient_box, "box V" + std::to_string(i) + std::to_string(j));
    }
  for (int i = 0; i < mp.n0; ++i)
    for (int j = i; j < mp.n0; ++j) mp.U.push_back(prog.add_nonneg_variable("U" + std::to_string(i) + "_" + std::to_string(j)));
  mp.su = prog.add_psd_matrix(1, "s_u", true).first;

  auto U = [&](int i, int j) {
    if (i > j) std::swap(i, j);
    return LinExpr::var(mp.U[static_cast<std::size_t>(LmiBlock::packed_index(mp.n0, i, j))]);
  };
  // W_sym: (b,1)' W (b,1) = w'b - lambda
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < n; ++i) W(i, n) = W(n, i) = u.w[i] / 2.0;
  W(n, n) = -u.lambda;

  // V - s_u W - loc > 0
  LinMatrix unsafe = zeros(d);
  LinMatrix loc1 = opt.localize_simplex ? localisation(prog, n, mass, "loc_unsafe") : zeros(d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      unsafe[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          mp.v(i, j) - LinExpr::var(mp.su, W(i, j)) - loc1[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  prog.add_lmi(unsafe, "unsafe", true);

  // -V - E' U E - loc > 0
  LinMatrix init = zeros(d);
  LinMatrix loc2 = opt.localize_simplex ? localisation(prog, n, mass, "loc_initial") : zeros(d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      LinExpr e = mp.v(i, j) * -1.0 - loc2[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      for (int p = 0; p < mp.n0; ++p)
        for (int q = 0; q < mp.n0; ++q) {
          const double c = E(p, i) * E(q, j);
          if (c != 0.0) e -= U(p, q) * c;
        }
      init[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = e;
    }
  prog.add_lmi(init, "initial", true);

  // kappa V - Hbar' V Hbar - loc >= 0 for every action
  for (int a = 0; a < model.n_actions(); ++a) {
    Eigen::MatrixXd Hb = Eigen::MatrixXd::Identity(d, d);
    Hb.topLeftCorner(n, n) = model.transitions[static_cast<std::size_t>(a)];
    LinMatrix dec = zeros(d);
    LinMatrix loc3 = opt.localize_simplex ? localisation(prog, n, mass, "loc_" + model.actions[static_cast<std::size_t>(a)]) : zeros(d);
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        LinExpr e = mp.v(i, j) * kappa - loc3[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        for (int p = 0; p < d; ++p)
          for (int q = 0; q < d; ++q) {
            const double c = Hb(p, i) * Hb(q, j);
            if (c != 0.0) e -= mp.v(p, q) * c;
          }
        dec[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = e;
        dec[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = e;
      }
    prog.add_lmi(dec, "decrease_" + model.actions[static_cast<std::size_t>(a)], false);
  }
  return mp;
}

// ---- POMDP: sum-of-squares programs --------------------------------------------

struct SosBuild {
  SosProgram prog;
  std::vector<PolyExpression> barriers;
  BeliefChart chart;
  explicit SosBuild(int vars) : prog(vars) {}
};

inline PolyExpression at_time(const PolyExpression& bt, int t, int T) {
  return fix_variable(bt, bt.n_vars() - 1, T > 0 ? static_cast<double>(t) / T : 0.0);
}

inline std::unique_ptr<SosBuild> build_pomdp_program(const Model& model, const PrivacySpec& spec, double kappa,
                                                     const VerifyOptions& opt, std::optional<int> horizon) {
  BeliefChart chart{model.n_states(), opt.localize_simplex, 1.0};
  const int k = chart.vars();
  const int d = opt.degree;
  auto sb = std::make_unique<SosBuild>(k);
  sb->chart = chart;
  SosProgram& prog = sb->prog;
  const UnsafeHalfspace u = unsafe_halfspace(spec, model);

  const int steps = horizon.value_or(0);
  if (horizon && opt.time_polynomial) {
    // coefficients of B(t, y) live in the real program; t enters as t/T in [0, 1]
    PolyExpression bt = boxed_polynomial(prog, k + 1, d, opt.coefficient_box, "B");
    for (int t = 0; t <= steps; ++t) sb->barriers.push_back(at_time(bt, t, steps));
  } else {
    for (int t = 0; t <= steps; ++t) {
      const std::string name = horizon ? "B_" + std::to_string(t) : "B";
      PolyExpression b = boxed_polynomial(prog, k, d, opt.coefficient_box, name);
      sb->barriers.push_back(std::move(b));
    }
  }
  for (std::size_t t = 0; t < sb->barriers.size(); ++t)
    prog.name_expression(horizon ? "B_" + std::to_string(t) : "B", sb->barriers[t]);

  const std::vector<Polynomial> region = chart.region();

  // B > 0 on the unsafe set (at every step for a finite horizon)
  std::vector<Polynomial> unsafe = region;
  unsafe.push_back(chart.affine(u.w, -u.lambda));
  for (std::size_t t = 0; t < sb->barriers.size(); ++t) {
    PositivityOptions po;
    po.margin = MarginKind::Variable;
    po.margin_name = horizon ? "s_unsafe_" + std::to_string(t) : "s_unsafe";
    prog.assert_positive_on_set(sb->barriers[t], unsafe, {}, po, po.margin_name);
  }

  // B_0 < 0 on the initial set
  const PolyExpression minus_b0 = -sb->barriers.front();
  if (const auto* p = std::get_if<PointSet>(&spec.initial_set)) {
    const Eigen::VectorXd y = chart.coords(initial_point(model, *p));
    LinExpr value;
    for (const auto& [m, c] : minus_b0.terms())
      value += c * m.eval(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
    VarId s = prog.new_positive_scalar("s_initial");
    prog.conic().add_inequality(value - LinExpr::var(s), "initial");
  } else {
    std::vector<Polynomial> init = region;
    for (auto& g : initial_set_constraints(model, spec, chart)) init.push_back(std::move(g));
    PositivityOptions po;
    po.margin = MarginKind::Variable;
    po.margin_name = "s_initial";
    prog.assert_positive_on_set(minus_b0, init, {}, po, "initial");
  }

  // R^d (kappa B_{t-1} - B_t(S/R)) >= 0 on the region for every (a, z)
  const int last = std::max(steps, 1);
  for (const auto& [a, z] : modes(model)) {
    const RationalMap map = chart.update_map(model, a, z);
    const Polynomial rd = pow(map.denominator, d);
    for (int t = 1; t <= last; ++t) {
      const PolyExpression& cur = sb->barriers[static_cast<std::size_t>(horizon ? t : 0)];
      const PolyExpression& prev = sb->barriers[static_cast<std::size_t>(horizon ? t - 1 : 0)];
      PolyExpression e = -compose_rational(cur, map, d);
      if (kappa != 0.0) e += mul(prev, rd) * kappa;
      std::string label = "decrease_" + model.actions[static_cast<std::size_t>(a)];
      if (z) label += "/" + model.observations[static_cast<std::size_t>(*z)];
      if (horizon) label += "@" + std::to_string(t);
      prog.assert_positive_on_set(e, region, {}, {}, label);
    }
  }
  return sb;
}

}  // namespace detail

// ---- verification -----------------------------------------------------------

namespace detail {

struct AttemptResult {
  Attempt attempt;
  std::optional<BarrierCertificate> cert;
  std::optional<ValidationReport> validation;
};

inline AttemptResult attempt_once(const Model& model, const PrivacySpec& spec, Method method, double kappa,
                                  const VerifyOptions& opt, std::optional<int> horizon) {
  AttemptResult r;
  r.attempt.kappa = kappa;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    BarrierCertificate cert;
    cert.method = method;
    cert.kappa = kappa;
    ConicSolution sol;
    if (method == Method::MdpSdp) {
      MdpProgram mp = build_mdp_program(model, spec, kappa, opt);
      if (opt.program_sink) opt.program_sink(mp.prog, kappa);
      sol = solve(mp.prog, opt.solver);
      r.attempt.solver_status = to_string(sol.status);
      r.attempt.margin = sol.margin;
      r.attempt.iterations = sol.iterations;
      r.attempt.message = sol.message;
      if (sol.status == SolveStatus::Feasible) {
        cert.chart = BeliefChart{model.n_states(), false, belief_mass(model, spec)};
        cert.V = mp.value(mp.V, mp.dim, sol.x);
        cert.matrices["U"] = mp.value(mp.U, mp.n0, sol.x);
        cert.scalars["s_u"] = sol.x[mp.su];
        r.cert = std::move(cert);
      }
    } else {
      auto sb = build_pomdp_program(model, spec, kappa, opt, horizon);
      if (opt.program_sink) opt.program_sink(sb->prog.conic(), kappa);
      sol = sb->prog.solve(opt.solver);
      r.attempt.solver_status = to_string(sol.status);
      r.attempt.margin = sol.margin;
      r.attempt.iterations = sol.iterations;
      r.attempt.message = sol.message;
      if (sol.status == SolveStatus::Feasible) {
        SosCertificate sc = sb->prog.extract_certificate(sol);
        cert.chart = sb->chart;
        for (const auto& b : sb->barriers) cert.barriers.push_back(resolve(b, sol.x));
        cert.scalars = sc.scalars;
        cert.sos = std::move(sc);
        r.cert = std::move(cert);
      }
    }
    if (r.cert) {
      r.validation = validate_certificate(model, spec, *r.cert, opt.validation_samples, opt.seed, opt.decrease_tol);
      if (!r.validation->passed) r.attempt.message = "certificate failed sampled validation: " + r.validation->violations.front();
    }
  } catch (const NumericalFailure& e) {
    r.attempt.solver_status = "NumericalFailure";
    r.attempt.message = e.what();
    r.cert.reset();
  }
  r.attempt.seconds = seconds_since(t0);
  return r;
}

/// B = -1: valid whenever the unsafe set holds no belief of the region.
inline BarrierCertificate constant_certificate(const Model& model, const PrivacySpec& spec, Method method, int degree,
                                               const VerifyOptions& opt, std::optional<int> horizon) {
  BarrierCertificate c;
  c.method = method;
  c.kappa = 1.0;
  if (method == Method::MdpSdp) {
    c.chart = BeliefChart{model.n_states(), false, belief_mass(model, spec)};
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(model.n_states() + 1, model.n_states() + 1);
    V(model.n_states(), model.n_states()) = -1.0;
    c.V = V;
  } else {
    c.chart = BeliefChart{model.n_states(), opt.localize_simplex, 1.0};
    for (int t = 0; t <= horizon.value_or(0); ++t) c.barriers.push_back(Polynomial::constant(c.chart.vars(), -1.0));
  }
  (void)degree;
  return c;
}

}  // namespace detail

inline VerificationOutcome verify_with(const Model& model, const PrivacySpec& spec, Method method, const VerifyOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  VerificationOutcome out;
  out.method = method;
  out.gamma = spec.lambda;
  out.degree = method == Method::MdpSdp ? 2 : opt.degree;

  std::optional<int> horizon;
  if (method == Method::MdpSdp) {
    if (model.is_pomdp()) throw PreconditionError("MdpSdp needs a model without observations");
    if (std::holds_alternative<SemialgebraicSet>(spec.initial_set))
      throw UnsupportedEncoding("MdpSdp needs a point or polytope initial set");
    horizon = spec.horizon.steps;
  } else {
    if (!model.is_pomdp()) throw PreconditionError(to_string(method) + " needs a model with observations");
    if (opt.degree < 2 || opt.degree % 2) throw PreconditionError("barrier degree must be even and at least 2");
    if (method == Method::PomdpFiniteSos) {
      if (spec.horizon.infinite()) throw PreconditionError("PomdpFiniteSos needs a finite horizon");
      horizon = spec.horizon.steps;
    }
    if (2 * opt.degree + 1 > kMaxSosDegree)
      throw DegreeOverflow("barrier degree " + std::to_string(opt.degree) + " exceeds the cap");
  }
  out.horizon = spec.horizon.steps;
  check_initial_unsafe_disjoint(spec, model, {opt.validation_samples, opt.seed});
  const std::optional<int> sos_horizon = method == Method::PomdpFiniteSos ? horizon : std::nullopt;

  const double mass = detail::belief_mass(model, spec);
  if (spec.lambda >= mass) {
    BarrierCertificate c = detail::constant_certificate(model, spec, method, opt.degree, opt, sos_horizon);
    ValidationReport v = validate_certificate(model, spec, c, opt.validation_samples, opt.seed, opt.decrease_tol);
    out.status = v.passed ? Status::Certified : Status::Unknown;
    out.message = "unsafe set holds no reachable belief; constant certificate";
    out.certificate = std::move(c);
    out.validation = std::move(v);
  } else {
    std::vector<detail::AttemptResult> results(opt.kappas.size());
    auto run = [&](std::size_t i) {
      detail::say(opt, to_string(method) + " gamma=" + std::to_string(spec.lambda) + " kappa=" + std::to_string(opt.kappas[i]));
      results[i] = detail::attempt_once(model, spec, method, opt.kappas[i], opt, sos_horizon);
    };
    auto ok = [&](std::size_t i) { return results[i].cert && results[i].validation && results[i].validation->passed; };
    if (opt.jobs > 1 && opt.kappas.size() > 1) {
      std::vector<std::future<void>> fs;
      std::atomic<std::size_t> next{0};
      const int workers = std::min<int>(opt.jobs, static_cast<int>(opt.kappas.size()));
      for (int w = 0; w < workers; ++w)
        fs.push_back(std::async(std::launch::async, [&] {
          for (std::size_t i = next.fetch_add(1); i < opt.kappas.size(); i = next.fetch_add(1)) run(i);
        }));
      for (auto& f : fs) f.get();
      for (auto& r : results) out.attempts.push_back(r.attempt);
    } else {
      for (std::size_t i = 0; i < opt.kappas.size(); ++i) {
        run(i);
        out.attempts.push_back(results[i].attempt);
        if (ok(i)) break;
      }
    }
    for (std::size_t i = 0; i < opt.kappas.size(); ++i) {
      if (!results[i].cert) continue;
      if (!out.certificate || ok(i)) {
        out.certificate = results[i].cert;
        out.validation = results[i].validation;
      }
      if (ok(i)) {
        out.status = Status::Certified;
        break;
      }
    }
    if (out.status == Status::Unknown) {
      out.certificate.reset();
      out.message = out.validation ? "solver certificate rejected by sampled validation"
                                   : "no certificate found for any decrease factor";
    }
  }

  if (opt.cross_check) {
    std::vector<Belief> grid = default_grid(model, spec, 16, opt.seed);
    const int depth = detail::feasible_falsify_depth(model, grid.size(), opt.cross_check_depth, opt.cross_check_nodes);
    FalsifyOptions fo;
    fo.threads = std::max(1, opt.jobs);
    out.cross_check = falsify(model, spec, depth, grid, fo);
    if (out.status == Status::Certified && out.cross_check->witness) {
      // a certificate contradicted by a concrete trajectory is a numerical artefact
      out.status = Status::Unknown;
      out.certificate.reset();
      out.message = "certificate contradicted by a falsifier witness";
    }
  }
  out.seconds = detail::seconds_since(t0);
  return out;
}

inline VerificationOutcome verify_mdp(const Model& model, const PrivacySpec& spec, const VerifyOptions& opt = {}) {
  return verify_with(model, spec, Method::MdpSdp, opt);
}

inline VerificationOutcome verify_pomdp_infinite(const Model& model, const PrivacySpec& spec, const VerifyOptions& opt = {}) {
  return verify_with(model, spec, Method::PomdpInfiniteSos, opt);
}

inline VerificationOutcome verify_pomdp_finite(const Model& model, const PrivacySpec& spec, const VerifyOptions& opt = {}) {
  return verify_with(model, spec, Method::PomdpFiniteSos, opt);
}

inline Method default_method(const Model& model, const PrivacySpec& spec) {
  if (!model.is_pomdp()) return Method::MdpSdp;
  return spec.horizon.infinite() ? Method::PomdpInfiniteSos : Method::PomdpFiniteSos;
}

inline VerificationOutcome verify(const Model& model, const PrivacySpec& spec, const VerifyOptions& opt = {}) {
  return verify_with(model, spec, default_method(model, spec), opt);
}

// ---- threshold search ---------------------------------------------------------

struct BisectionStep {
  double gamma = 0.0;
  Status status = Status::Unknown;
  double seconds = 0.0;
};

struct GammaBound {
  /// Smallest certified threshold found; empty when nothing below 1 certifies.
  std::optional<double> gamma_star;
  double lower_bound = 0.0;  // falsifier
  int falsify_depth = 0;
  Method method = Method::MdpSdp;
  int degree = 2;
  std::vector<BisectionStep> trace;
  std::optional<VerificationOutcome> certified;
  double seconds = 0.0;

  nlohmann::json to_json(const Model& m) const {
    nlohmann::json j;
    j["gamma_star"] = gamma_star ? nlohmann::json(*gamma_star) : nlohmann::json(nullptr);
    j["falsifier_lower_bound"] = lower_bound;
    j["falsify_depth"] = falsify_depth;
    j["method"] = to_string(method);
    if (method != Method::MdpSdp) j["degree"] = degree;
    nlohmann::json tr = nlohmann::json::array();
    for (const auto& s : trace) tr.push_back({{"gamma", s.gamma}, {"status", to_string(s.status)}, {"seconds", s.seconds}});
    j["trace"] = tr;
    j["certificate"] = certified ? certified->to_json(m) : nlohmann::json(nullptr);
    j["wall_time_s"] = seconds;
    return j;
  }
};

/// Bisection on lambda over [L, 1] where L is the falsifier lower bound.
/// Relies on monotonicity: the unsafe set shrinks as lambda grows.
inline GammaBound min_certified_gamma(const Model& model, const PrivacySpec& spec, Method method, const VerifyOptions& opt = {},
                                      double tol = 0.01, int falsify_depth = -1) {
  if (!(tol > 0.0)) throw PreconditionError("bisection tolerance must be positive");
  const auto t0 = std::chrono::steady_clock::now();
  GammaBound g;
  g.method = method;
  g.degree = method == Method::MdpSdp ? 2 : opt.degree;

  std::vector<Belief> grid = default_grid(model, spec, 16, opt.seed);
  if (falsify_depth < 0) falsify_depth = model.is_pomdp() ? 8 : 12;
  g.falsify_depth = detail::feasible_falsify_depth(model, grid.size(), falsify_depth, 20000000);
  FalsifyOptions fo;
  fo.threads = std::max(1, opt.jobs);
  g.lower_bound = falsify(model, spec, g.falsify_depth, grid, fo).lower_bound;

  VerifyOptions inner = opt;
  inner.cross_check = false;
  auto check = [&](double lambda) {
    const auto s0 = std::chrono::steady_clock::now();
    VerificationOutcome o = verify_with(model, with_lambda(spec, lambda), method, inner);
    g.trace.push_back({lambda, o.status, detail::seconds_since(s0)});
    detail::say(opt, "  gamma=" + std::to_string(lambda) + " -> " + to_string(o.status));
    return o;
  };

  double lo = g.lower_bound;
  double hi = 1.0;
  VerificationOutcome top = check(hi);
  if (top.status != Status::Certified) {
    g.seconds = detail::seconds_since(t0);
    return g;
  }
  g.certified = std::move(top);
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    VerificationOutcome o = check(mid);
    if (o.status == Status::Certified) {
      hi = mid;
      g.certified = std::move(o);
    } else {
      lo = mid;
    }
  }
  g.gamma_star = hi;
  g.seconds = detail::seconds_since(t0);
  return g;
}

struct SweepRow {
  int degree = 2;
  std::optional<double> gamma_star;
  double seconds = 0.0;
  std::string error;
};

inline std::vector<SweepRow> degree_sweep(const Model& model, const PrivacySpec& spec, const std::vector<int>& degrees,
                                          const VerifyOptions& opt = {}, double tol = 0.01) {
  for (std::size_t i = 0; i < degrees.size(); ++i) {
    if (degrees[i] < 2 || degrees[i] % 2) throw PreconditionError("sweep degrees must be even and at least 2");
    if (i && degrees[i] <= degrees[i - 1]) throw PreconditionError("sweep degrees must ascend");
  }
  const Method method = spec.horizon.infinite() ? Method::PomdpInfiniteSos : Method::PomdpFiniteSos;
  std::vector<SweepRow> rows(degrees.size());
  auto run = [&](std::size_t i) {
    VerifyOptions o = opt;
    o.degree = degrees[i];
    o.jobs = 1;
    rows[i].degree = degrees[i];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      rows[i].gamma_star = min_certified_gamma(model, spec, method, o, tol).gamma_star;
    } catch (const Error& e) {
      rows[i].error = e.what();
    }
    rows[i].seconds = detail::seconds_since(t0);
  };
  std::atomic<std::size_t> next{0};
  const int workers = std::max(1, std::min<int>(opt.jobs, static_cast<int>(degrees.size())));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < degrees.size(); i = next.fetch_add(1)) run(i);
    });
  for (auto& t : pool) t.join();
  return rows;
}

inline nlohmann::json to_json(const std::vector<SweepRow>& rows) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j{{"degree", r.degree}, {"seconds", r.seconds}};
    j["gamma_star"] = r.gamma_star ? nlohmann::json(*r.gamma_star) : nlohmann::json(nullptr);
    if (!r.error.empty()) j["error"] = r.error;
    a.push_back(j);
  }
  return a;
}

}  // namespace privbarrier
