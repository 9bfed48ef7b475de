// Walk through Example I: a few belief updates, the falsifier bound, a
// certificate at gamma = 0.85, and the bisection for the tightest threshold.
//
//   privbarrier_demo [fixtures-dir]

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "privbarrier/verifier.hpp"

using namespace privbarrier;

static std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : PB_FIXTURES;
  try {
    Model raw = parse_model(slurp(dir + "/example1_mdp.json"));
    ParseOptions po;
    po.renormalize = true;
    Model m = parse_model(slurp(dir + "/example1_mdp.json"), po);
    PrivacySpec s = parse_spec(slurp(dir + "/example1_gamma085.json"), m);
    std::cout << std::fixed << std::setprecision(4);

    std::cout << "belief trajectory under sigma1, sigma2, sigma1:\n";
    std::vector<Label> labels{parse_label(m, "sigma1"), parse_label(m, "sigma2"), parse_label(m, "sigma1")};
    Trajectory t = simulate(m, Belief(m.initial), labels, &s);
    for (std::size_t k = 0; k < t.beliefs.size(); ++k)
      std::cout << "  t=" << k << "  b = " << t.beliefs[k].values.transpose() << "   secret mass " << t.secret_mass_series[k]
                << "\n";

    FalsifyResult f = falsify(m, s, 12, default_grid(m, s));
    std::cout << "\nlargest secret mass over all 2^12 action sequences: " << f.lower_bound << "\n";

    VerificationOutcome out = verify_mdp(m, s);
    std::cout << "\ngamma = 0.85: " << to_string(out.status) << "\n";
    if (out.certificate) {
      std::cout << "  decrease factor " << out.certificate->kappa << ", margin " << out.attempts.back().margin << "\n";
      std::cout << "  V =\n" << *out.certificate->V << "\n";
      std::cout << "  B(pi) = " << out.certificate->eval(m.initial) << "\n";
      std::cout << "  sampled checks: " << out.validation->unsafe_samples << " unsafe, " << out.validation->initial_samples
                << " initial, " << out.validation->decrease_samples << " transitions, worst decrease "
                << std::scientific << out.validation->worst_decrease << std::fixed << "\n";
    }

    for (const auto& [name, model] : {std::pair<const char*, const Model*>{"normalised", &m}, {"raw (mass 0.5)", &raw}}) {
      PrivacySpec sp = parse_spec(slurp(dir + "/example1_gamma085.json"), *model);
      GammaBound g = min_certified_gamma(*model, sp, Method::MdpSdp);
      std::cout << "\n" << name << " initial distribution: falsifier bound " << g.lower_bound << ", certified down to "
                << (g.gamma_star ? std::to_string(*g.gamma_star) : std::string("none")) << " (" << g.trace.size()
                << " solves)\n";
    }
  } catch (const Error& e) {
    std::cerr << "demo: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
