#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "privbarrier/belief.hpp"

using namespace privbarrier;

namespace {

std::string slurp(const std::string& name) {
  std::ifstream in(std::string(PB_FIXTURES) + "/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Model ex1() { return parse_model(slurp("example1_mdp.json")); }
Model ex2() { return parse_model(slurp("example2_pomdp.json")); }

PrivacySpec secret23(const Model& m, double lambda, const char* point = nullptr) {
  std::string s = R"({"secret": ["q2","q3"], "lambda": )" + std::to_string(lambda);
  if (point) s += std::string(R"(, "initial_set": {"point": )") + point + "}";
  return parse_spec(s + "}", m);
}

}  // namespace

TEST(MdpUpdate, FirstColumn) {
  Belief b = mdp_update(ex1(), Belief(Eigen::Vector3d(1, 0, 0)), "sigma1");
  EXPECT_EQ(b.values, Eigen::Vector3d(0.15, 0.45, 0.4));
}

TEST(MdpUpdate, IdentityTransition) {
  Model m = parse_model(R"({"states": ["a","b"], "initial": [0.3, 0.7], "actions": ["id"],
                            "transitions": {"id": [[1,0],[0,1]]}})");
  Belief b(Eigen::Vector2d(0.3, 0.7));
  EXPECT_EQ(mdp_update(m, b, 0).values, b.values);
}

TEST(MdpUpdate, HandProduct) {
  // 0.25*0.2 + 0.35*0.4 + 0.1*0.4, 0.25*0.2 + 0.1*0.4 + 0.5*0.4, 0.5*0.2 + 0.55*0.4 + 0.4*0.4
  Belief b = mdp_update(ex1(), Belief(Eigen::Vector3d(0.2, 0.4, 0.4)), "sigma2");
  EXPECT_NEAR(b[0], 0.23, 1e-15);
  EXPECT_NEAR(b[1], 0.29, 1e-15);
  EXPECT_NEAR(b[2], 0.48, 1e-15);
}

TEST(MdpUpdate, UnknownAction) {
  EXPECT_THROW(mdp_update(ex1(), Belief(Eigen::Vector3d(1, 0, 0)), "sigma3"), UnknownActionError);
  EXPECT_THROW(mdp_update(ex1(), Belief(Eigen::Vector3d(1, 0, 0)), 7), UnknownActionError);
}

TEST(PomdpUpdate, HandBayes) {
  Belief b = pomdp_update(ex2(), Belief(Eigen::Vector3d(1, 0, 0)), "sigma1", "z0");
  const double u0 = 0.7 * 0.15, u1 = 0.5 * 0.45, u2 = 0.8 * 0.4;
  const double z = u0 + u1 + u2;
  EXPECT_NEAR(b[0], u0 / z, 1e-15);
  EXPECT_NEAR(b[1], u1 / z, 1e-15);
  EXPECT_NEAR(b[2], u2 / z, 1e-15);
}

TEST(PomdpUpdate, UninformativeObservationMatchesMdp) {
  Model m = ex2();
  for (auto& O : m.observation_fn) O.setConstant(0.5);
  std::mt19937_64 rng(9);
  for (int k = 0; k < 200; ++k) {
    Belief b(sample_simplex(rng, 3));
    for (int a = 0; a < 2; ++a)
      for (int z = 0; z < 2; ++z)
        EXPECT_LE((pomdp_update(m, b, a, z).values - mdp_update(m, b, a).values).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(PomdpUpdate, ZeroProbabilityObservation) {
  Model m = ex2();
  m.observation_fn[0].col(0).setZero();
  m.observation_fn[0].col(1).setOnes();
  EXPECT_THROW(pomdp_update(m, Belief(Eigen::Vector3d(1, 0, 0)), 0, 0), ZeroProbabilityObservation);
}

TEST(PomdpUpdate, SimplexPreservation) {
  Model m = ex2();
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> pick(0, 1);
  for (int k = 0; k < 1000; ++k) {
    Belief b(sample_simplex(rng, 3));
    Belief nb = pomdp_update(m, b, pick(rng), pick(rng));
    EXPECT_LE(std::abs(nb.mass() - 1.0), 1e-9);
    EXPECT_GE(nb.values.minCoeff(), 0.0);
  }
}

TEST(BeliefValues, ClampsRoundoffRejectsNegatives) {
  Belief b(Eigen::Vector3d(-1e-13, 0.5, 0.5));
  EXPECT_EQ(b[0], 0.0);
  EXPECT_NEAR(b.mass(), 1.0 - 1e-13, 1e-15);
  EXPECT_THROW(Belief(Eigen::Vector3d(-1e-6, 0.5, 0.5)), PreconditionError);
  EXPECT_THROW(Belief(Eigen::Vector3d(0.6, 0.5, 0.5)), PreconditionError);
}

TEST(SecretMass, Arithmetic) {
  Model m = ex1();
  PrivacySpec s = secret23(m, 0.95);
  EXPECT_DOUBLE_EQ(secret_mass(Belief(Eigen::Vector3d(0.1, 0.45, 0.45)), s), 0.9);
  EXPECT_EQ(secret_mass(Belief(Eigen::Vector3d(1, 0, 0)), s), 0.0);
  EXPECT_DOUBLE_EQ(secret_mass(Belief(Eigen::Vector3d(1.0 / 3, 1.0 / 3, 1.0 / 3)), s), 2.0 / 3);
  UnsafeHalfspace u = unsafe_halfspace(s, m);
  Belief b(Eigen::Vector3d(0.2, 0.3, 0.5));
  EXPECT_EQ(u.w.dot(b.values), secret_mass(b, s));
}

TEST(Simulate, EmptyAndRepeated) {
  Model m = ex1();
  Belief b0(Eigen::Vector3d(1, 0, 0));
  EXPECT_EQ(simulate(m, b0, {}).beliefs.size(), 1u);
  PrivacySpec s = secret23(m, 0.9, "[1,0,0]");
  Trajectory t = simulate(m, b0, {{0, {}}, {0, {}}}, &s);
  ASSERT_EQ(t.beliefs.size(), 3u);
  EXPECT_EQ(t.beliefs[1].values, Eigen::Vector3d(0.15, 0.45, 0.4));
  // H^2 e1 by hand
  EXPECT_NEAR(t.beliefs[2][0], 0.2325, 1e-15);
  EXPECT_NEAR(t.beliefs[2][1], 0.2375, 1e-15);
  EXPECT_NEAR(t.beliefs[2][2], 0.53, 1e-15);
  EXPECT_NEAR(t.secret_mass_series[2], 0.7675, 1e-15);
}

TEST(Simulate, PomdpNeedsObservations) {
  Model m = ex2();
  Belief b0(Eigen::Vector3d(0.2, 0.4, 0.4));
  try {
    simulate(m, b0, {{0, 1}, {1, std::nullopt}});
    FAIL();
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("step 2"), std::string::npos);
  }
  EXPECT_THROW(simulate(ex1(), Belief(Eigen::Vector3d(1, 0, 0)), {{0, 0}}), PreconditionError);
}

TEST(Falsify, DepthZeroWitness) {
  Model m = ex1();
  Belief b0(Eigen::Vector3d(0.1, 0.45, 0.45));
  PrivacySpec s = secret23(m, 0.95, "[0.1,0.45,0.45]");
  s.lambda = 0.85;
  FalsifyResult r = falsify(m, s, 0, {b0});
  EXPECT_DOUBLE_EQ(r.lower_bound, 0.9);
  ASSERT_TRUE(r.witness);
  EXPECT_EQ(r.witness->violation_time, 0);
}

TEST(Falsify, ExampleOneBounds) {
  // lower bounds from an independent breadth-first enumeration of all 2^12 sequences
  Model raw = ex1();
  PrivacySpec s = secret23(raw, 0.85);
  FalsifyResult r = falsify(raw, s, 12, default_grid(raw, s));
  EXPECT_NEAR(r.lower_bound, 0.4015, 1e-12);
  EXPECT_FALSE(r.witness);
  EXPECT_EQ(r.nodes, (1 << 13) - 1);

  ParseOptions norm;
  norm.renormalize = true;
  Model nm = parse_model(slurp("example1_mdp.json"), norm);
  PrivacySpec ns = secret23(nm, 0.85);
  FalsifyResult rn = falsify(nm, ns, 12, default_grid(nm, ns));
  EXPECT_NEAR(rn.lower_bound, 0.803, 1e-12);
  EXPECT_FALSE(rn.witness);

  PrivacySpec low = secret23(raw, 0.401);
  FalsifyResult w = falsify(raw, low, 12, default_grid(raw, low));
  ASSERT_TRUE(w.witness);
  EXPECT_GT(w.witness->attained_mass, 0.401);
  const auto& tr = w.witness->trajectory;
  EXPECT_EQ(tr.beliefs.size(), tr.labels.size() + 1);
  EXPECT_DOUBLE_EQ(tr.secret_mass_series[static_cast<std::size_t>(w.witness->violation_time)], w.witness->attained_mass);
}

TEST(Falsify, ExampleTwoDepthEight) {
  Model m = ex2();
  PrivacySpec s = secret23(m, 0.95);
  FalsifyOptions opt;
  opt.threads = 4;
  FalsifyResult r = falsify(m, s, 8, default_grid(m, s), opt);
  EXPECT_NEAR(r.lower_bound, 0.943025528037, 1e-11);
  EXPECT_EQ(r.nodes, 87381);
  EXPECT_FALSE(r.witness);
  // replaying the best path reproduces the bound
  Trajectory t = simulate(m, r.best.beliefs.front(), r.best.labels, &s);
  EXPECT_NEAR(t.secret_mass_series.back(), r.lower_bound, 1e-12);
}

TEST(Falsify, MonotoneInDepthAndBudget) {
  Model m = ex2();
  PrivacySpec s = secret23(m, 0.95);
  auto grid = default_grid(m, s);
  double prev = -1;
  for (int d = 0; d <= 6; ++d) {
    double lb = falsify(m, s, d, grid).lower_bound;
    EXPECT_GE(lb, prev);
    prev = lb;
  }
  FalsifyOptions tiny;
  tiny.node_cap = 100;
  EXPECT_THROW(falsify(m, s, 8, grid, tiny), BudgetExceeded);
}

TEST(Falsify, PolytopeGridUsesVerticesAndSamples) {
  Model m = ex1();
  PrivacySpec s = parse_spec(slurp("example1_box_gamma085.json"), m);
  auto grid = default_grid(m, s, 64, 3);
  EXPECT_EQ(grid.size(), 6u + 64u);
  Eigen::MatrixXd E = initial_polytope_matrix(s, m);
  for (const auto& b : grid) {
    Eigen::Vector4d bb(b[0], b[1], b[2], 1.0);
    EXPECT_GE((E * bb).minCoeff(), -1e-9);
  }
  FalsifyResult r = falsify(m, s, 6, grid);
  EXPECT_LT(r.lower_bound, 0.85);
  EXPECT_TRUE(r.to_json(m)["witness"].is_null());
}
