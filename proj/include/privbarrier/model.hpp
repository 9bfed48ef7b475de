#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "privbarrier/conic.hpp"
#include "privbarrier/error.hpp"
#include "privbarrier/poly.hpp"

namespace privbarrier {

inline constexpr double kStochasticTol = 1e-9;

/// MDP or POMDP. transitions[a](i, j) = P(q_i | q_j, a) (column-stochastic);
/// observation_fn[a](i, k) = P(z_k | q_i, a) (row-stochastic).
struct Model {
  std::vector<std::string> states;
  Eigen::VectorXd initial;
  std::vector<std::string> actions;
  std::vector<Eigen::MatrixXd> transitions;
  std::vector<std::string> observations;
  std::vector<Eigen::MatrixXd> observation_fn;
  std::vector<std::string> warnings;

  int n_states() const { return static_cast<int>(states.size()); }
  int n_actions() const { return static_cast<int>(actions.size()); }
  int n_observations() const { return static_cast<int>(observations.size()); }
  bool is_pomdp() const { return !observations.empty(); }
  double initial_mass() const { return initial.sum(); }

  int action_index(const std::string& a) const {
    auto it = std::find(actions.begin(), actions.end(), a);
    if (it == actions.end()) throw UnknownActionError("unknown action '" + a + "'");
    return static_cast<int>(it - actions.begin());
  }
  int observation_index(const std::string& z) const {
    auto it = std::find(observations.begin(), observations.end(), z);
    if (it == observations.end()) throw PreconditionError("unknown observation '" + z + "'");
    return static_cast<int>(it - observations.begin());
  }
  int state_index(const std::string& q) const {
    auto it = std::find(states.begin(), states.end(), q);
    if (it == states.end()) throw ValidationError("unknown state '" + q + "'");
    return static_cast<int>(it - states.begin());
  }

  /// Checks every stochasticity invariant; throws ValidationError naming the offender.
  void validate() const {
    const int n = n_states();
    if (n < 1) throw ValidationError("model needs at least one state");
    if (actions.empty()) throw ValidationError("model needs at least one action");
    check_unique(states, "state");
    check_unique(actions, "action");
    if (initial.size() != n)
      throw ValidationError("initial distribution has " + std::to_string(initial.size()) + " entries, expected " +
                            std::to_string(n));
    for (int i = 0; i < n; ++i)
      if (!(initial[i] >= 0.0 && initial[i] <= 1.0))
        throw ValidationError("initial probability of state '" + states[static_cast<std::size_t>(i)] + "' is outside [0,1]");
    if (transitions.size() != actions.size()) throw ValidationError("one transition matrix per action is required");
    for (int a = 0; a < n_actions(); ++a) {
      const auto& H = transitions[static_cast<std::size_t>(a)];
      const std::string& name = actions[static_cast<std::size_t>(a)];
      if (H.rows() != n || H.cols() != n)
        throw ValidationError("transition matrix of action '" + name + "' must be " + std::to_string(n) + "x" + std::to_string(n));
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i)
          if (!(H(i, j) >= 0.0 && H(i, j) <= 1.0))
            throw ValidationError("action '" + name + "': entry (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                                  ") is outside [0,1]");
        const double s = H.col(j).sum();
        if (std::abs(s - 1.0) > kStochasticTol)
          throw ValidationError("action '" + name + "': column " + std::to_string(j + 1) + " (state '" +
                                states[static_cast<std::size_t>(j)] + "') sums to " + fmt(s) + ", expected 1");
      }
    }
    if (observations.empty() != observation_fn.empty())
      throw ValidationError("observations and observation_fn must be given together");
    if (!observations.empty()) {
      check_unique(observations, "observation");
      if (observation_fn.size() != actions.size())
        throw ValidationError("one observation matrix per action is required");
      for (int a = 0; a < n_actions(); ++a) {
        const auto& O = observation_fn[static_cast<std::size_t>(a)];
        const std::string& name = actions[static_cast<std::size_t>(a)];
        if (O.rows() != n || O.cols() != n_observations())
          throw ValidationError("observation matrix of action '" + name + "' must be " + std::to_string(n) + "x" +
                                std::to_string(n_observations()) + " to match the observation list");
        for (int i = 0; i < n; ++i) {
          for (int k = 0; k < n_observations(); ++k)
            if (!(O(i, k) >= 0.0 && O(i, k) <= 1.0))
              throw ValidationError("observation matrix of action '" + name + "' has an entry outside [0,1]");
          const double s = O.row(i).sum();
          if (std::abs(s - 1.0) > kStochasticTol)
            throw ValidationError("action '" + name + "': observation row " + std::to_string(i + 1) + " sums to " + fmt(s) +
                                  ", expected 1");
        }
      }
    }
  }

 private:
  static void check_unique(const std::vector<std::string>& v, const char* what) {
    std::set<std::string> s(v.begin(), v.end());
    if (s.size() != v.size()) throw ValidationError(std::string("duplicate ") + what + " identifier");
  }
  static std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
  }
};

struct ParseOptions {
  /// Scale the initial distribution to sum 1 when it does not.
  bool renormalize = false;
};

namespace detail {

inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

inline nlohmann::json parse_json(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    auto [l, c] = line_column(text, e.byte);
    std::string msg = e.what();
    // strip nlohmann's own "[json.exception.parse_error.101] parse error at line ..., column ...: " prefix
    if (auto p = msg.find(": "); p != std::string::npos && msg.find("parse error") != std::string::npos) msg = msg.substr(p + 2);
    throw ParseError("syntax error: " + msg, l, c);
  }
}

inline const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(std::string("missing field '") + key + "'");
  return j.at(key);
}

inline std::vector<std::string> string_list(const nlohmann::json& j, const char* key) {
  const auto& a = field(j, key);
  if (!a.is_array()) throw ValidationError(std::string("field '") + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& s : a) {
    if (!s.is_string()) throw ValidationError(std::string("field '") + key + "' must be an array of strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

inline Eigen::VectorXd number_vector(const nlohmann::json& a, const std::string& what) {
  if (!a.is_array()) throw ValidationError(what + " must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw ValidationError(what + " must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  return v;
}

inline Eigen::MatrixXd number_matrix(const nlohmann::json& a, const std::string& what) {
  if (!a.is_array() || a.empty()) throw ValidationError(what + " must be a non-empty array of rows");
  const std::size_t cols = a[0].is_array() ? a[0].size() : 0;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_array() || a[i].size() != cols) throw ValidationError(what + " has ragged rows");
    for (std::size_t j = 0; j < cols; ++j) {
      if (!a[i][j].is_number()) throw ValidationError(what + " must contain numbers");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a[i][j].get<double>();
    }
  }
  return m;
}

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json r = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    a.push_back(r);
  }
  return a;
}

inline nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace detail

inline Model model_from_json(const nlohmann::json& j, const ParseOptions& opt = {}) {
  using namespace detail;
  if (!j.is_object()) throw ValidationError("model document must be a JSON object");
  Model m;
  m.states = string_list(j, "states");
  m.actions = string_list(j, "actions");
  m.initial = number_vector(field(j, "initial"), "field 'initial'");

  std::string convention = "column";
  if (j.contains("transition_convention")) {
    if (!j["transition_convention"].is_string()) throw ValidationError("transition_convention must be a string");
    convention = j["transition_convention"].get<std::string>();
    if (convention != "column" && convention != "row")
      throw ValidationError("transition_convention must be \"column\" or \"row\"");
  }
  const auto& tr = field(j, "transitions");
  if (!tr.is_object()) throw ValidationError("field 'transitions' must map action names to matrices");
  for (const auto& [k, v] : tr.items())
    if (std::find(m.actions.begin(), m.actions.end(), k) == m.actions.end())
      throw ValidationError("transitions given for undeclared action '" + k + "'");
  for (const auto& a : m.actions) {
    if (!tr.contains(a)) throw ValidationError("missing transition matrix for action '" + a + "'");
    Eigen::MatrixXd H = number_matrix(tr.at(a), "transition matrix of action '" + a + "'");
    // a row-convention table holds T(q, a, q') at (q, q')
    m.transitions.push_back(convention == "row" ? Eigen::MatrixXd(H.transpose()) : H);
  }

  const bool has_obs = j.contains("observations");
  const bool has_ofn = j.contains("observation_fn");
  if (has_obs != has_ofn) throw ValidationError("observations and observation_fn must be given together");
  if (has_obs) {
    m.observations = string_list(j, "observations");
    const auto& of = j.at("observation_fn");
    if (!of.is_object()) throw ValidationError("field 'observation_fn' must map action names to matrices");
    for (const auto& a : m.actions) {
      if (!of.contains(a)) throw ValidationError("missing observation matrix for action '" + a + "'");
      m.observation_fn.push_back(number_matrix(of.at(a), "observation matrix of action '" + a + "'"));
    }
  }

  if (m.initial.size() == static_cast<Eigen::Index>(m.states.size())) {
    const double s = m.initial.sum();
    if (s > 1.0 + kStochasticTol) throw ValidationError("initial distribution sums to " + std::to_string(s) + " > 1");
    if (!(s > 0.0)) throw ValidationError("initial distribution has zero mass");
    if (std::abs(s - 1.0) > kStochasticTol) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "initial distribution sums to %.12g, not 1%s", s,
                    opt.renormalize ? "; renormalized" : " (use renormalize to scale it)");
      m.warnings.emplace_back(buf);
      if (opt.renormalize) m.initial /= s;
    }
  }
  m.validate();
  return m;
}

inline Model parse_model(const std::string& text, const ParseOptions& opt = {}) {
  return model_from_json(detail::parse_json(text), opt);
}

inline nlohmann::json to_json(const Model& m) {
  using detail::matrix_json;
  nlohmann::json j;
  j["states"] = m.states;
  j["initial"] = detail::vector_json(m.initial);
  j["actions"] = m.actions;
  nlohmann::json tr = nlohmann::json::object();
  for (int a = 0; a < m.n_actions(); ++a) tr[m.actions[static_cast<std::size_t>(a)]] = matrix_json(m.transitions[static_cast<std::size_t>(a)]);
  j["transitions"] = tr;
  if (m.is_pomdp()) {
    j["observations"] = m.observations;
    nlohmann::json of = nlohmann::json::object();
    for (int a = 0; a < m.n_actions(); ++a)
      of[m.actions[static_cast<std::size_t>(a)]] = matrix_json(m.observation_fn[static_cast<std::size_t>(a)]);
    j["observation_fn"] = of;
  }
  return j;
}

inline std::string serialize_model(const Model& m) { return to_json(m).dump(2); }

// ---- privacy specification ------------------------------------------------

struct PointSet {
  Eigen::VectorXd b0;
};
/// rows r with r . (b, 1) >= 0
struct PolytopeSet {
  Eigen::MatrixXd E0;
};
/// {b : l_i(b) <= 0 for all i}
struct SemialgebraicSet {
  std::vector<Polynomial> polys;
};
using InitialSet = std::variant<PointSet, PolytopeSet, SemialgebraicSet>;

struct Horizon {
  std::optional<int> steps;  // nullopt = infinite
  bool infinite() const { return !steps.has_value(); }
};

struct PrivacySpec {
  std::vector<int> secret;
  double lambda = 0.0;
  InitialSet initial_set;
  Horizon horizon;
};

struct UnsafeHalfspace {
  Eigen::VectorXd w;
  double lambda = 0.0;
  bool contains(const Eigen::VectorXd& b) const { return w.dot(b) > lambda; }
};

inline UnsafeHalfspace unsafe_halfspace(const PrivacySpec& spec, const Model& model) {
  UnsafeHalfspace u;
  u.w = Eigen::VectorXd::Zero(model.n_states());
  for (int i : spec.secret) u.w[i] = 1.0;
  u.lambda = spec.lambda;
  return u;
}

/// Rows of b-bar = (b, 1) inequalities describing the initial set.
/// A point belief becomes 2n opposing half-spaces.
inline Eigen::MatrixXd initial_polytope_matrix(const PrivacySpec& spec, const Model& model) {
  const int n = model.n_states();
  if (const auto* p = std::get_if<PointSet>(&spec.initial_set)) {
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(2 * n, n + 1);
    for (int i = 0; i < n; ++i) {
      E(2 * i, i) = 1.0;
      E(2 * i, n) = -p->b0[i];
      E(2 * i + 1, i) = -1.0;
      E(2 * i + 1, n) = p->b0[i];
    }
    return E;
  }
  if (const auto* p = std::get_if<PolytopeSet>(&spec.initial_set)) {
    if (p->E0.cols() != n + 1)
      throw ValidationError("polytope rows must have n+1 = " + std::to_string(n + 1) + " entries");
    return p->E0;
  }
  throw UnsupportedEncoding("semialgebraic initial set has no polytope encoding");
}

/// {b : |b - c|_inf <= r} as rows over (b, 1); nonnegativity faces are added
/// only where the box reaches outside the orthant.
inline Eigen::MatrixXd box_polytope(const Eigen::VectorXd& center, double radius) {
  const int n = static_cast<int>(center.size());
  std::vector<Eigen::VectorXd> rows;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd lo = Eigen::VectorXd::Zero(n + 1), hi = Eigen::VectorXd::Zero(n + 1);
    lo[i] = 1.0;
    lo[n] = -(center[i] - radius);
    hi[i] = -1.0;
    hi[n] = center[i] + radius;
    if (center[i] - radius < 0.0) lo[n] = 0.0;  // b_i >= 0 is the binding face
    rows.push_back(lo);
    rows.push_back(hi);
  }
  Eigen::MatrixXd E(static_cast<Eigen::Index>(rows.size()), n + 1);
  for (std::size_t r = 0; r < rows.size(); ++r) E.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
  return E;
}

/// Vertices of {b : E (b,1) >= 0, b >= 0, sum b = mass}.
inline std::vector<Eigen::VectorXd> polytope_vertices(const Eigen::MatrixXd& E, double mass = 1.0, double tol = 1e-9) {
  const int n = static_cast<int>(E.cols()) - 1;
  std::vector<Eigen::VectorXd> rows;
  for (int r = 0; r < E.rows(); ++r) rows.push_back(E.row(r).transpose());
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n + 1);
    e[i] = 1.0;
    rows.push_back(e);
  }
  const int m = static_cast<int>(rows.size());
  std::vector<Eigen::VectorXd> out;
  if (n == 1) {
    Eigen::VectorXd b = Eigen::VectorXd::Constant(1, mass);
    for (const auto& r : rows)
      if (r.head(1).dot(b) + r[1] < -tol) return out;
    out.push_back(b);
    return out;
  }
  std::vector<int> pick(static_cast<std::size_t>(n - 1));
  for (int i = 0; i < n - 1; ++i) pick[static_cast<std::size_t>(i)] = i;
  if (m < n - 1) return out;
  while (true) {
    Eigen::MatrixXd A(n, n);
    Eigen::VectorXd rhs(n);
    for (int k = 0; k < n - 1; ++k) {
      const auto& r = rows[static_cast<std::size_t>(pick[static_cast<std::size_t>(k)])];
      A.row(k) = r.head(n).transpose();
      rhs[k] = -r[n];
    }
    A.row(n - 1) = Eigen::RowVectorXd::Ones(n);
    rhs[n - 1] = mass;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (lu.rank() == n) {
      Eigen::VectorXd b = lu.solve(rhs);
      bool inside = true;
      for (const auto& r : rows)
        if (r.head(n).dot(b) + r[n] < -tol) {
          inside = false;
          break;
        }
      if (inside) {
        bool dup = false;
        for (const auto& v : out)
          if ((v - b).cwiseAbs().maxCoeff() < 1e-9) dup = true;
        if (!dup) out.push_back(b);
      }
    }
    // next combination
    int k = n - 2;
    while (k >= 0 && pick[static_cast<std::size_t>(k)] == m - (n - 1) + k) --k;
    if (k < 0) break;
    ++pick[static_cast<std::size_t>(k)];
    for (int t = k + 1; t < n - 1; ++t) pick[static_cast<std::size_t>(t)] = pick[static_cast<std::size_t>(t - 1)] + 1;
  }
  return out;
}

/// Largest secret mass over the initial polytope (intersected with the sub-simplex
/// sum b <= 1, b >= 0); nullopt when the polytope is empty.
inline std::optional<double> max_secret_mass_on_polytope(const Eigen::MatrixXd& E, const Eigen::VectorXd& w) {
  const int n = static_cast<int>(w.size());
  ConicProgram lp;
  std::vector<VarId> b;
  for (int i = 0; i < n; ++i) b.push_back(lp.add_nonneg_variable("b" + std::to_string(i)));
  LinExpr sum(1.0);
  for (int i = 0; i < n; ++i) sum -= LinExpr::var(b[static_cast<std::size_t>(i)]);
  lp.add_inequality(sum, "mass");
  for (int r = 0; r < E.rows(); ++r) {
    LinExpr e(E(r, n));
    for (int i = 0; i < n; ++i) e += LinExpr::var(b[static_cast<std::size_t>(i)], E(r, i));
    lp.add_inequality(e, "E0 row " + std::to_string(r));
  }
  LinExpr obj;
  for (int i = 0; i < n; ++i) obj += LinExpr::var(b[static_cast<std::size_t>(i)], w[i]);
  lp.set_objective(obj, true);
  ConicSolution s = solve(lp);
  if (s.status == SolveStatus::Infeasible) return std::nullopt;
  if (s.status == SolveStatus::NumericalFailure) throw NumericalFailure("overlap LP failed: " + s.message);
  return s.objective_value;
}

struct SpecParseOptions {
  int overlap_samples = 10000;
  unsigned seed = 0;
};

/// Dirichlet(1,...,1) sample scaled to `mass`.
template <class Rng>
Eigen::VectorXd sample_simplex(Rng& rng, int n, double mass = 1.0) {
  std::exponential_distribution<double> ex(1.0);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) b[i] = ex(rng);
  return mass * b / b.sum();
}

inline bool in_semialgebraic(const SemialgebraicSet& s, const Eigen::VectorXd& b) {
  std::span<const double> pt(b.data(), static_cast<std::size_t>(b.size()));
  for (const auto& l : s.polys)
    if (eval(l, pt) > 0.0) return false;
  return true;
}

/// Throws ValidationError when the initial set meets the unsafe half-space.
inline void check_initial_unsafe_disjoint(const PrivacySpec& spec, const Model& model, const SpecParseOptions& opt = {}) {
  const UnsafeHalfspace u = unsafe_halfspace(spec, model);
  if (const auto* p = std::get_if<PointSet>(&spec.initial_set)) {
    if (u.contains(p->b0))
      throw ValidationError("initial belief already has secret mass " + std::to_string(u.w.dot(p->b0)) + " > lambda");
    return;
  }
  if (const auto* p = std::get_if<PolytopeSet>(&spec.initial_set)) {
    auto mx = max_secret_mass_on_polytope(p->E0, u.w);
    if (!mx) throw ValidationError("initial polytope is empty");
    if (*mx > u.lambda + 1e-7)
      throw ValidationError("initial polytope intersects the unsafe set (secret mass up to " + std::to_string(*mx) + ")");
    return;
  }
  const auto& s = std::get<SemialgebraicSet>(spec.initial_set);
  std::mt19937_64 rng(opt.seed);
  for (int k = 0; k < opt.overlap_samples; ++k) {
    Eigen::VectorXd b = sample_simplex(rng, model.n_states());
    if (in_semialgebraic(s, b) && u.contains(b))
      throw ValidationError("initial set intersects the unsafe set (sampled witness found)");
  }
}

inline PrivacySpec spec_from_json(const nlohmann::json& j, const Model& model, const SpecParseOptions& opt = {}) {
  using namespace detail;
  if (!j.is_object()) throw ValidationError("spec document must be a JSON object");
  const int n = model.n_states();
  PrivacySpec s;
  std::set<int> seen;
  for (const auto& name : string_list(j, "secret")) {
    const int i = model.state_index(name);
    if (!seen.insert(i).second) throw ValidationError("secret state '" + name + "' listed twice");
    s.secret.push_back(i);
  }
  if (s.secret.empty()) throw ValidationError("secret set must be non-empty");
  if (static_cast<int>(s.secret.size()) >= n) throw ValidationError("secret set must be a proper subset of the states");
  const auto& lam = field(j, "lambda");
  if (!lam.is_number()) throw ValidationError("lambda must be a number");
  s.lambda = lam.get<double>();
  if (!(s.lambda >= 0.0 && s.lambda <= 1.0)) throw ValidationError("lambda must lie in [0,1]");

  if (!j.contains("initial_set")) {
    s.initial_set = PointSet{model.initial};
  } else {
    const auto& is = j.at("initial_set");
    if (!is.is_object() || is.size() != 1) throw ValidationError("initial_set must have exactly one of point/polytope/semialgebraic");
    if (is.contains("point")) {
      Eigen::VectorXd b = number_vector(is.at("point"), "initial_set.point");
      if (b.size() != n) throw ValidationError("initial_set.point needs " + std::to_string(n) + " entries");
      if (b.minCoeff() < 0.0 || b.sum() > 1.0 + kStochasticTol) throw ValidationError("initial_set.point is not a sub-probability vector");
      s.initial_set = PointSet{b};
    } else if (is.contains("polytope")) {
      Eigen::MatrixXd E = number_matrix(field(is.at("polytope"), "E0"), "initial_set.polytope.E0");
      if (E.cols() != n + 1) throw ValidationError("initial_set.polytope.E0 rows need n+1 = " + std::to_string(n + 1) + " entries");
      s.initial_set = PolytopeSet{E};
    } else if (is.contains("semialgebraic")) {
      const auto& ps = field(is.at("semialgebraic"), "polys");
      if (!ps.is_array() || ps.empty()) throw ValidationError("initial_set.semialgebraic.polys must be a non-empty array");
      SemialgebraicSet sa;
      for (const auto& p : ps) sa.polys.push_back(polynomial_from_json(p, n));
      s.initial_set = sa;
    } else {
      throw ValidationError("initial_set must have exactly one of point/polytope/semialgebraic");
    }
  }

  if (j.contains("horizon")) {
    const auto& h = j.at("horizon");
    if (h.is_string() && h.get<std::string>() == "infinite") {
      s.horizon.steps.reset();
    } else if (h.is_number_integer() && h.get<long long>() >= 1 && h.get<long long>() <= 1000000) {
      s.horizon.steps = h.get<int>();
    } else {
      throw ValidationError("horizon must be \"infinite\" or a positive integer");
    }
  }
  check_initial_unsafe_disjoint(s, model, opt);
  return s;
}

inline PrivacySpec parse_spec(const std::string& text, const Model& model, const SpecParseOptions& opt = {}) {
  return spec_from_json(detail::parse_json(text), model, opt);
}

inline nlohmann::json to_json(const PrivacySpec& s, const Model& model) {
  nlohmann::json j;
  std::vector<std::string> sec;
  for (int i : s.secret) sec.push_back(model.states[static_cast<std::size_t>(i)]);
  j["secret"] = sec;
  j["lambda"] = s.lambda;
  if (const auto* p = std::get_if<PointSet>(&s.initial_set)) {
    j["initial_set"] = {{"point", detail::vector_json(p->b0)}};
  } else if (const auto* p = std::get_if<PolytopeSet>(&s.initial_set)) {
    j["initial_set"] = {{"polytope", {{"E0", detail::matrix_json(p->E0)}}}};
  } else {
    nlohmann::json ps = nlohmann::json::array();
    for (const auto& l : std::get<SemialgebraicSet>(s.initial_set).polys) ps.push_back(to_json(l));
    j["initial_set"] = {{"semialgebraic", {{"polys", ps}}}};
  }
  if (s.horizon.infinite())
    j["horizon"] = "infinite";
  else
    j["horizon"] = *s.horizon.steps;
  return j;
}

}  // namespace privbarrier
