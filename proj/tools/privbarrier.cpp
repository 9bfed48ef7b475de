// privbarrier: command-line front end.
//
//   privbarrier verify   --model M --spec S [--gamma G] [--degree D] [--horizon T|infinite] ...
//   privbarrier falsify  --model M --spec S [--depth K]
//   privbarrier bound    --model M --spec S [--tol E] [--depth K]
//   privbarrier sweep    --model M --spec S --degrees 2,4,6
//   privbarrier simulate --model M --labels '["a/z", ...]' [--b0 '[...]'] [--spec S]
//
// Reports go to stdout as JSON, progress to stderr.
// Exit codes: 0 certified / no witness / ok, 1 unknown, 2 witness found, 3 input error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "privbarrier/verifier.hpp"

using namespace privbarrier;

namespace {

enum Exit { kOk = 0, kUnknown = 1, kWitness = 2, kInputError = 3 };

struct Args {
  std::string model_path;
  std::string spec_path;
  std::optional<double> gamma;
  std::optional<std::string> horizon;
  std::string method = "auto";
  int degree = 2;
  double tol = 0.01;
  int depth = -1;
  std::string dump_sdp;
  bool localize_simplex = true;
  bool renormalize = false;
  bool time_polynomial = false;
  unsigned seed = 0;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  int samples = 10000;
  int grid = 64;
  bool quiet = false;
  std::vector<int> degrees{2, 4};
  std::string labels;
  std::string b0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Model load_model(const Args& a) {
  ParseOptions po;
  po.renormalize = a.renormalize;
  return parse_model(read_file(a.model_path), po);
}

PrivacySpec load_spec(const Args& a, const Model& m) {
  SpecParseOptions so;
  so.seed = a.seed;
  PrivacySpec s = parse_spec(read_file(a.spec_path), m, so);
  if (a.gamma) s = with_lambda(s, *a.gamma);
  if (a.horizon) {
    if (*a.horizon == "infinite") {
      s.horizon.steps.reset();
    } else {
      std::size_t used = 0;
      int t = 0;
      try {
        t = std::stoi(*a.horizon, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != a.horizon->size() || t < 1) throw ValidationError("--horizon must be a positive integer or 'infinite'");
      s.horizon.steps = t;
    }
  }
  return s;
}

Method pick_method(const Args& a, const Model& m, const PrivacySpec& s) {
  if (a.method == "auto") return default_method(m, s);
  if (a.method == "mdp") return Method::MdpSdp;
  if (a.method == "pomdp") return s.horizon.infinite() ? Method::PomdpInfiniteSos : Method::PomdpFiniteSos;
  throw ValidationError("--method must be auto, mdp or pomdp");
}

VerifyOptions verify_options(const Args& a) {
  VerifyOptions o;
  o.degree = a.degree;
  o.localize_simplex = a.localize_simplex;
  o.time_polynomial = a.time_polynomial;
  o.seed = a.seed;
  o.jobs = a.jobs;
  o.validation_samples = a.samples;
  if (!a.quiet) o.log = [](const std::string& s) { std::cerr << s << "\n"; };
  return o;
}

void emit(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

int run_verify(const Args& a) {
  Model m = load_model(a);
  PrivacySpec s = load_spec(a, m);
  VerifyOptions o = verify_options(a);
  nlohmann::json programs = nlohmann::json::array();
  std::mutex mu;
  if (!a.dump_sdp.empty())
    o.program_sink = [&](const ConicProgram& p, double kappa) {
      nlohmann::json j{{"kappa", kappa}, {"program", p.to_json()}};
      std::lock_guard<std::mutex> lock(mu);
      programs.push_back(std::move(j));
    };
  VerificationOutcome out = verify_with(m, s, pick_method(a, m, s), o);
  if (!a.dump_sdp.empty()) {
    std::sort(programs.begin(), programs.end(), [](const auto& x, const auto& y) { return x["kappa"] > y["kappa"]; });
    std::ofstream f(a.dump_sdp);
    if (!f) throw ValidationError("cannot write " + a.dump_sdp);
    f << programs.dump(1) << "\n";
  }
  emit(out.to_json(m));
  if (out.status == Status::Certified) return kOk;
  return out.cross_check && out.cross_check->witness ? kWitness : kUnknown;
}

int run_falsify(const Args& a) {
  Model m = load_model(a);
  PrivacySpec s = load_spec(a, m);
  const int depth = a.depth >= 0 ? a.depth : (m.is_pomdp() ? 8 : 12);
  FalsifyOptions fo;
  fo.threads = a.jobs;
  FalsifyResult r = falsify(m, s, depth, default_grid(m, s, a.grid, a.seed), fo);
  nlohmann::json j = r.to_json(m);
  j["gamma"] = s.lambda;
  emit(j);
  return r.witness ? kWitness : kOk;
}

int run_bound(const Args& a) {
  Model m = load_model(a);
  PrivacySpec s = load_spec(a, m);
  GammaBound g = min_certified_gamma(m, s, pick_method(a, m, s), verify_options(a), a.tol, a.depth);
  emit(g.to_json(m));
  return g.gamma_star ? kOk : kUnknown;
}

int run_sweep(const Args& a) {
  Model m = load_model(a);
  PrivacySpec s = load_spec(a, m);
  if (!m.is_pomdp()) throw ValidationError("sweep needs a model with observations");
  std::vector<SweepRow> rows = degree_sweep(m, s, a.degrees, verify_options(a), a.tol);
  emit({{"method", to_string(default_method(m, s))}, {"rows", to_json(rows)}});
  for (const auto& r : rows)
    if (!r.gamma_star) return kUnknown;
  return kOk;
}

int run_simulate(const Args& a) {
  Model m = load_model(a);
  std::optional<PrivacySpec> s;
  if (!a.spec_path.empty()) s = load_spec(a, m);
  std::vector<Label> labels;
  const nlohmann::json lj = detail::parse_json(a.labels);
  if (!lj.is_array()) throw ValidationError("--labels must be a JSON array of strings");
  for (const auto& l : lj) {
    if (!l.is_string()) throw ValidationError("--labels must be a JSON array of strings");
    labels.push_back(parse_label(m, l.get<std::string>()));
  }
  Eigen::VectorXd b = m.initial;
  if (!a.b0.empty()) {
    nlohmann::json j = detail::parse_json(a.b0);
    if (!j.is_array() || static_cast<int>(j.size()) != m.n_states())
      throw ValidationError("--b0 must be an array of " + std::to_string(m.n_states()) + " numbers");
    for (int i = 0; i < m.n_states(); ++i) {
      if (!j[static_cast<std::size_t>(i)].is_number()) throw ValidationError("--b0 entries must be numbers");
      b[i] = j[static_cast<std::size_t>(i)].get<double>();
      if (b[i] < 0.0) throw ValidationError("--b0 entries must be nonnegative");
    }
  }
  if (m.is_pomdp()) {
    if (!(b.sum() > 0.0)) throw ValidationError("--b0 has no mass");
    b /= b.sum();
  }
  Trajectory t = simulate(m, Belief(b), labels, s ? &*s : nullptr);
  emit(t.to_json(m));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  Args a;
  CLI::App app{"Barrier-certificate privacy verification for MDPs and POMDPs"};
  app.require_subcommand(1);

  auto common = [&](CLI::App* c, bool need_spec) {
    c->add_option("--model", a.model_path, "model JSON")->required();
    auto* sp = c->add_option("--spec", a.spec_path, "privacy spec JSON");
    if (need_spec) sp->required();
    c->add_flag("--renormalize", a.renormalize, "scale the initial distribution to sum 1");
    c->add_option("--seed", a.seed, "seed for all sampling");
    c->add_option("--jobs", a.jobs, "worker threads")->check(CLI::PositiveNumber);
    c->add_flag("--quiet", a.quiet, "no progress on stderr");
  };
  auto threshold = [&](CLI::App* c) {
    c->add_option("--gamma", a.gamma, "override the spec threshold")->check(CLI::Range(0.0, 1.0));
    c->add_option("--horizon", a.horizon, "override the spec horizon: T or 'infinite'");
  };
  auto solver = [&](CLI::App* c) {
    c->add_option("--method", a.method, "auto, mdp or pomdp");
    c->add_option("--degree", a.degree, "barrier degree (POMDP)");
    c->add_flag("--localize-simplex,!--no-localize-simplex", a.localize_simplex,
                "restrict conditions to the belief simplex (default on)");
    c->add_flag("--time-polynomial", a.time_polynomial, "finite horizon: one polynomial in (t, b)");
    c->add_option("--samples", a.samples, "validation samples")->check(CLI::PositiveNumber);
  };

  CLI::App* verify = app.add_subcommand("verify", "search for a barrier certificate");
  common(verify, true);
  threshold(verify);
  solver(verify);
  verify->add_option("--dump-sdp", a.dump_sdp, "write the conic programs to this file");

  CLI::App* fals = app.add_subcommand("falsify", "exhaustive search for a violating trajectory");
  common(fals, true);
  threshold(fals);
  fals->add_option("--depth", a.depth, "search depth (default 12 MDP, 8 POMDP)")->check(CLI::NonNegativeNumber);
  fals->add_option("--grid", a.grid, "interior samples of a set-valued initial condition")->check(CLI::NonNegativeNumber);

  CLI::App* bound = app.add_subcommand("bound", "smallest certifiable threshold by bisection");
  common(bound, true);
  threshold(bound);
  solver(bound);
  bound->add_option("--tol", a.tol, "bisection tolerance")->check(CLI::PositiveNumber);
  bound->add_option("--depth", a.depth, "falsifier depth for the lower end")->check(CLI::NonNegativeNumber);

  CLI::App* sweep = app.add_subcommand("sweep", "bound for several barrier degrees");
  common(sweep, true);
  threshold(sweep);
  solver(sweep);
  sweep->add_option("--degrees", a.degrees, "even degrees, ascending")->delimiter(',');
  sweep->add_option("--tol", a.tol, "bisection tolerance")->check(CLI::PositiveNumber);

  CLI::App* sim = app.add_subcommand("simulate", "belief trajectory along a label sequence");
  common(sim, false);
  sim->add_option("--labels", a.labels, R"(JSON array such as ["a", "a/z"])")->required();
  sim->add_option("--b0", a.b0, "starting belief as a JSON array (default: model initial)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "privbarrier: " << e.what() << "\n";
    emit({{"error", e.what()}});
    return kInputError;
  }

  try {
    if (verify->parsed()) return run_verify(a);
    if (fals->parsed()) return run_falsify(a);
    if (bound->parsed()) return run_bound(a);
    if (sweep->parsed()) return run_sweep(a);
    return run_simulate(a);
  } catch (const Error& e) {
    std::cerr << "privbarrier: " << e.what() << "\n";
    emit({{"error", e.what()}});
    return kInputError;
  }
}
