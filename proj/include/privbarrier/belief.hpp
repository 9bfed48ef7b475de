#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "privbarrier/error.hpp"
#include "privbarrier/model.hpp"

namespace privbarrier {

inline constexpr double kClampTol = 1e-12;
inline constexpr double kBranchTol = 1e-12;

/// Sub-probability vector over states. The total mass is normally 1; models whose
/// initial distribution was not renormalised carry their original mass, which the
/// MDP update preserves.
struct Belief {
  Eigen::VectorXd values;

  Belief() = default;
  explicit Belief(Eigen::VectorXd v) : values(std::move(v)) { sanitize(); }

  int size() const { return static_cast<int>(values.size()); }
  double mass() const { return values.sum(); }
  double operator[](int i) const { return values[i]; }

 private:
  void sanitize() {
    if (values.size() == 0) throw PreconditionError("empty belief");
    const double before = values.sum();
    bool clamped = false;
    for (int i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) throw PreconditionError("belief has a non-finite entry");
      if (values[i] < 0.0) {
        if (values[i] < -kClampTol)
          throw PreconditionError("belief entry " + std::to_string(i) + " is negative (" + std::to_string(values[i]) + ")");
        values[i] = 0.0;
        clamped = true;
      }
    }
    if (clamped && values.sum() > 0.0) values *= before / values.sum();
    if (values.sum() > 1.0 + kStochasticTol) throw PreconditionError("belief mass exceeds 1");
  }
};

/// b' = H_a b
inline Belief mdp_update(const Model& model, const Belief& b, int action) {
  if (action < 0 || action >= model.n_actions()) throw UnknownActionError("action index " + std::to_string(action) + " out of range");
  if (b.size() != model.n_states()) throw PreconditionError("belief dimension does not match the model");
  return Belief(model.transitions[static_cast<std::size_t>(action)] * b.values);
}

inline Belief mdp_update(const Model& model, const Belief& b, const std::string& action) {
  return mdp_update(model, b, model.action_index(action));
}

/// Unnormalised Bayes numerator: O(q', a, z) (H_a b)_{q'}.
inline Eigen::VectorXd pomdp_numerator(const Model& model, const Eigen::VectorXd& b, int action, int obs) {
  const auto& H = model.transitions[static_cast<std::size_t>(action)];
  const auto& O = model.observation_fn[static_cast<std::size_t>(action)];
  return O.col(obs).cwiseProduct(H * b);
}

inline Belief pomdp_update(const Model& model, const Belief& b, int action, int obs) {
  if (!model.is_pomdp()) throw PreconditionError("pomdp_update needs a model with observations");
  if (action < 0 || action >= model.n_actions()) throw UnknownActionError("action index " + std::to_string(action) + " out of range");
  if (obs < 0 || obs >= model.n_observations()) throw PreconditionError("observation index " + std::to_string(obs) + " out of range");
  if (b.size() != model.n_states()) throw PreconditionError("belief dimension does not match the model");
  Eigen::VectorXd num = pomdp_numerator(model, b.values, action, obs);
  const double z = num.sum();
  if (z <= kBranchTol)
    throw ZeroProbabilityObservation("observation '" + model.observations[static_cast<std::size_t>(obs)] + "' after action '" +
                                     model.actions[static_cast<std::size_t>(action)] + "' has probability " + std::to_string(z));
  return Belief(num / z);
}

inline Belief pomdp_update(const Model& model, const Belief& b, const std::string& action, const std::string& obs) {
  return pomdp_update(model, b, model.action_index(action), model.observation_index(obs));
}

inline double secret_mass(const Belief& b, const PrivacySpec& spec) {
  double s = 0.0;
  for (int i : spec.secret) s += b.values[i];
  return s;
}

struct Label {
  int action = 0;
  std::optional<int> observation;
};

struct Trajectory {
  std::vector<Belief> beliefs;
  std::vector<Label> labels;
  std::vector<double> secret_mass_series;

  nlohmann::json to_json(const Model& model) const {
    nlohmann::json bs = nlohmann::json::array();
    for (const auto& b : beliefs) bs.push_back(std::vector<double>(b.values.data(), b.values.data() + b.values.size()));
    nlohmann::json ls = nlohmann::json::array();
    for (const auto& l : labels) {
      nlohmann::json e{{"action", model.actions[static_cast<std::size_t>(l.action)]}};
      if (l.observation) e["observation"] = model.observations[static_cast<std::size_t>(*l.observation)];
      ls.push_back(e);
    }
    return {{"beliefs", bs}, {"labels", ls}, {"secret_mass", secret_mass_series}};
  }
};

inline Belief step(const Model& model, const Belief& b, const Label& l) {
  if (model.is_pomdp()) {
    if (!l.observation) throw PreconditionError("POMDP step needs an observation");
    return pomdp_update(model, b, l.action, *l.observation);
  }
  if (l.observation) throw PreconditionError("MDP step cannot carry an observation");
  return mdp_update(model, b, l.action);
}

namespace detail {
template <class E>
[[noreturn]] void rethrow_at_step(const E& e, std::size_t k) {
  throw E("step " + std::to_string(k) + ": " + e.what());
}
}  // namespace detail

inline Trajectory simulate(const Model& model, const Belief& b0, const std::vector<Label>& labels, const PrivacySpec* spec = nullptr) {
  Trajectory t;
  t.beliefs.push_back(b0);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    try {
      t.beliefs.push_back(step(model, t.beliefs.back(), labels[k]));
    } catch (const ZeroProbabilityObservation& e) {
      detail::rethrow_at_step(e, k + 1);
    } catch (const UnknownActionError& e) {
      detail::rethrow_at_step(e, k + 1);
    } catch (const PreconditionError& e) {
      detail::rethrow_at_step(e, k + 1);
    }
    t.labels.push_back(labels[k]);
  }
  if (spec)
    for (const auto& b : t.beliefs) t.secret_mass_series.push_back(secret_mass(b, *spec));
  return t;
}

/// Parses labels of the form "a" (MDP) or "a/z" (POMDP).
inline Label parse_label(const Model& model, const std::string& s) {
  Label l;
  const auto slash = s.find('/');
  l.action = model.action_index(s.substr(0, slash));
  if (slash != std::string::npos) l.observation = model.observation_index(s.substr(slash + 1));
  return l;
}

// ---- falsification ----------------------------------------------------------

struct FalsificationWitness {
  Trajectory trajectory;
  int violation_time = 0;
  double attained_mass = 0.0;
};

struct FalsifyResult {
  double lower_bound = 0.0;
  std::optional<FalsificationWitness> witness;
  long long nodes = 0;
  int depth = 0;
  /// The path reaching lower_bound (always present, witness or not).
  Trajectory best;
  int best_time = 0;

  nlohmann::json to_json(const Model& model) const {
    nlohmann::json j{{"lower_bound", lower_bound}, {"nodes", nodes}, {"depth", depth}};
    j["best"] = best.to_json(model);
    j["best_time"] = best_time;
    if (witness)
      j["witness"] = {{"trajectory", witness->trajectory.to_json(model)},
                      {"violation_time", witness->violation_time},
                      {"attained_mass", witness->attained_mass}};
    else
      j["witness"] = nullptr;
    return j;
  }
};

struct FalsifyOptions {
  long long node_cap = 10000000;
  int threads = 1;
};

namespace detail {

struct SearchBest {
  double mass = -1.0;
  std::vector<Label> path;
  int grid_index = 0;
};

class Falsifier {
 public:
  Falsifier(const Model& m, const PrivacySpec& s, int depth, long long cap, std::atomic<long long>& nodes)
      : m_(m), w_(unsafe_halfspace(s, m).w), depth_(depth), cap_(cap), nodes_(nodes) {}

  void run(const Eigen::VectorXd& b, int t, std::vector<Label>& path, SearchBest& best, int grid_index) {
    if (nodes_.fetch_add(1, std::memory_order_relaxed) + 1 > cap_)
      throw BudgetExceeded("falsification tree exceeds the node cap of " + std::to_string(cap_));
    const double mass = w_.dot(b);
    if (mass > best.mass) {
      best.mass = mass;
      best.path = path;
      best.grid_index = grid_index;
    }
    if (t == depth_) return;
    for (int a = 0; a < m_.n_actions(); ++a) {
      if (!m_.is_pomdp()) {
        path.push_back({a, std::nullopt});
        run(m_.transitions[static_cast<std::size_t>(a)] * b, t + 1, path, best, grid_index);
        path.pop_back();
        continue;
      }
      const Eigen::VectorXd hb = m_.transitions[static_cast<std::size_t>(a)] * b;
      for (int z = 0; z < m_.n_observations(); ++z) {
        Eigen::VectorXd num = m_.observation_fn[static_cast<std::size_t>(a)].col(z).cwiseProduct(hb);
        const double p = num.sum();
        if (p <= kBranchTol) continue;
        path.push_back({a, z});
        run(num / p, t + 1, path, best, grid_index);
        path.pop_back();
      }
    }
  }

 private:
  const Model& m_;
  Eigen::VectorXd w_;
  int depth_;
  long long cap_;
  std::atomic<long long>& nodes_;
};

}  // namespace detail

/// Exhaustive search over every action (and positive-probability observation)
/// sequence up to `depth` from every grid belief. lower_bound is the largest
/// secret mass seen; a witness is attached when it exceeds lambda.
inline FalsifyResult falsify(const Model& model, const PrivacySpec& spec, int depth, const std::vector<Belief>& grid,
                             const FalsifyOptions& opt = {}) {
  if (depth < 0) throw PreconditionError("falsification depth must be nonnegative");
  if (grid.empty()) throw PreconditionError("falsification grid is empty");
  for (const auto& b : grid)
    if (b.size() != model.n_states()) throw PreconditionError("grid belief has wrong dimension");

  std::atomic<long long> nodes{0};
  const int jobs = static_cast<int>(grid.size());
  std::vector<detail::SearchBest> bests(static_cast<std::size_t>(jobs));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int g = next.fetch_add(1); g < jobs; g = next.fetch_add(1)) {
      try {
        detail::Falsifier f(model, spec, depth, opt.node_cap, nodes);
        std::vector<Label> path;
        f.run(grid[static_cast<std::size_t>(g)].values, 0, path, bests[static_cast<std::size_t>(g)], g);
      } catch (...) {
        errors[static_cast<std::size_t>(g)] = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min(opt.threads, jobs));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  // first grid point wins ties, independent of scheduling
  const detail::SearchBest* best = &bests[0];
  for (const auto& b : bests)
    if (b.mass > best->mass) best = &b;

  FalsifyResult r;
  r.depth = depth;
  r.nodes = nodes.load();
  r.lower_bound = best->mass;
  r.best = simulate(model, grid[static_cast<std::size_t>(best->grid_index)], best->path, &spec);
  r.best_time = static_cast<int>(best->path.size());
  if (r.lower_bound > spec.lambda) r.witness = FalsificationWitness{r.best, r.best_time, r.lower_bound};
  return r;
}

/// Initial beliefs used by the falsifier: the point itself, or polytope vertices
/// plus Dirichlet-weighted mixtures of them, or rejection samples of a
/// semialgebraic set. POMDP beliefs are normalised.
inline std::vector<Belief> default_grid(const Model& model, const PrivacySpec& spec, int interior_samples = 64,
                                        unsigned seed = 0) {
  std::vector<Belief> grid;
  const bool normalize = model.is_pomdp();
  auto push = [&](Eigen::VectorXd b) {
    if (normalize && b.sum() > 0) b /= b.sum();
    grid.emplace_back(std::move(b));
  };
  std::mt19937_64 rng(seed);
  if (const auto* p = std::get_if<PointSet>(&spec.initial_set)) {
    push(p->b0);
    return grid;
  }
  if (const auto* p = std::get_if<PolytopeSet>(&spec.initial_set)) {
    auto verts = polytope_vertices(p->E0, 1.0);
    if (verts.empty()) throw ValidationError("initial polytope has no vertex on the simplex");
    for (const auto& v : verts) push(v);
    for (int k = 0; k < interior_samples; ++k) {
      Eigen::VectorXd lam = sample_simplex(rng, static_cast<int>(verts.size()));
      Eigen::VectorXd b = Eigen::VectorXd::Zero(model.n_states());
      for (std::size_t i = 0; i < verts.size(); ++i) b += lam[static_cast<Eigen::Index>(i)] * verts[i];
      push(b);
    }
    return grid;
  }
  const auto& s = std::get<SemialgebraicSet>(spec.initial_set);
  for (int attempts = 0; attempts < 1000000 && static_cast<int>(grid.size()) < std::max(1, interior_samples); ++attempts) {
    Eigen::VectorXd b = sample_simplex(rng, model.n_states());
    if (in_semialgebraic(s, b)) push(b);
  }
  if (grid.empty()) throw ValidationError("no sample found inside the semialgebraic initial set");
  return grid;
}

}  // namespace privbarrier
