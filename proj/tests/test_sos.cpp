#include <gtest/gtest.h>

#include <random>

#include "privbarrier/sos.hpp"

using namespace privbarrier;

namespace {

Polynomial v(int n, int i) { return variable_poly(n, i); }
Polynomial k(int n, double c) { return Polynomial::constant(n, c); }

bool feasible(SolveStatus s) { return s == SolveStatus::Feasible; }

}  // namespace

TEST(SosVariable, GramSizes) {
  SosProgram p2(2);
  auto a = p2.new_sos_var(2, "a");
  ASSERT_EQ(a.basis.size(), 3u);
  EXPECT_EQ(a.gram.dim, 3);
  SosProgram p3(3);
  EXPECT_EQ(p3.new_sos_var(4).gram.dim, 10);
  SosProgram p1(1);
  auto c = p1.new_sos_var(0);
  EXPECT_EQ(c.basis.size(), 1u);
  EXPECT_EQ(c.gram.dim, 1);
  EXPECT_THROW(p1.new_sos_var(3), PreconditionError);
}

TEST(AssertSos, PerfectSquareDecomposes) {
  SosProgram p(2);
  Polynomial f = v(2, 0) * v(2, 0) + 2.0 * v(2, 0) * v(2, 1) + v(2, 1) * v(2, 1);
  p.assert_sos(lift(f), "square");
  ConicSolution s = p.solve();
  ASSERT_TRUE(feasible(s.status)) << to_string(s.status);
  EXPECT_LE(s.max_eq_residual, 1e-7);
  SosCertificate c = p.extract_certificate(s);
  ASSERT_EQ(c.grams.size(), 1u);
  const GramFactor& g = c.grams[0];
  EXPECT_LE(g.residual, 1e-6);
  // one dominant factor proportional to (x + y)
  ASSERT_GE(g.factor.rows(), 1);
  Eigen::Index best;
  g.factor.rowwise().norm().maxCoeff(&best);
  Eigen::VectorXd row = g.factor.row(best).transpose();
  for (std::size_t i = 0; i < g.basis.size(); ++i) {
    if (g.basis[i].degree() != 1) {
      EXPECT_NEAR(row[static_cast<Eigen::Index>(i)], 0.0, 1e-4);
    }
  }
  double rx = 0, ry = 0;
  for (std::size_t i = 0; i < g.basis.size(); ++i) {
    if (g.basis[i] == Monomial::variable(2, 0)) rx = row[static_cast<Eigen::Index>(i)];
    if (g.basis[i] == Monomial::variable(2, 1)) ry = row[static_cast<Eigen::Index>(i)];
  }
  EXPECT_NEAR(std::abs(rx), 1.0, 1e-4);
  EXPECT_NEAR(rx, ry, 1e-4);
}

TEST(AssertSos, NegativeSquareIsInfeasible) {
  SosProgram p(1);
  p.assert_sos(lift(-1.0 * v(1, 0) * v(1, 0)));
  EXPECT_EQ(p.solve().status, SolveStatus::Infeasible);
}

TEST(AssertSos, MotzkinIsNotSos) {
  SosProgram p(2);
  Polynomial x = v(2, 0), y = v(2, 1);
  Polynomial m = x * x * x * x * y * y + x * x * y * y * y * y - 3.0 * x * x * y * y + k(2, 1.0);
  p.assert_sos(lift(m), "motzkin");
  EXPECT_EQ(p.solve().status, SolveStatus::Infeasible);
}

TEST(AssertSos, OddFixedLeadingDegreeThrows) {
  SosProgram p(1);
  EXPECT_THROW(p.assert_sos(lift(v(1, 0) * v(1, 0) * v(1, 0))), PreconditionError);
}

TEST(AssertSos, RandomSumsOfSquaresAreFeasible) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto basis = monomial_basis(3, 3);
  for (int trial = 0; trial < 5; ++trial) {
    Polynomial p(3);
    for (int q = 0; q < 3; ++q) {
      Polynomial r(3);
      for (const auto& m : basis) r.add_term(m, u(rng));
      p += r * r;
    }
    SosProgram prog(3);
    prog.assert_sos(lift(p));
    ConicSolution s = prog.solve();
    EXPECT_TRUE(s.status == SolveStatus::Feasible || s.status == SolveStatus::MarginalFeasible) << to_string(s.status);
    EXPECT_LE(s.max_eq_residual, 1e-7);
    SosCertificate c = prog.extract_certificate(s);
    EXPECT_LE(c.max_gram_residual(), 1e-6);

    // subtracting more than the sampled minimum must break it
    std::uniform_real_distribution<double> g(-1.5, 1.5);
    double mn = 1e300;
    for (int i = 0; i < 2000; ++i) {
      std::vector<double> pt{g(rng), g(rng), g(rng)};
      mn = std::min(mn, eval(p, pt));
    }
    SosProgram shifted(3);
    shifted.assert_sos(lift(p - k(3, mn + 0.05)));
    SolveStatus st = shifted.solve().status;
    EXPECT_TRUE(st == SolveStatus::Infeasible || st == SolveStatus::MarginalFeasible) << to_string(st);
  }
}

TEST(AssertSos, NewtonPruningShrinksSparseBasis) {
  Polynomial x = v(2, 0), y = v(2, 1);
  Polynomial p = x * x * x * x + y * y * y * y;
  std::vector<Monomial> supp;
  for (const auto& [m, c] : p.terms()) supp.push_back(m);
  auto pruned = newton_basis(supp, 2, 2, true);
  auto full = newton_basis(supp, 2, 2, false);
  EXPECT_EQ(full.size(), 6u);
  EXPECT_EQ(pruned.size(), 3u);  // x^2, xy, y^2
  for (const auto& m : pruned) EXPECT_EQ(m.degree(), 2);
}

TEST(PositiveOnSet, AffineIdentity) {
  // x = 1*(x - 1) + 1 on {x >= 1}
  SosProgram p(1);
  PositivityOptions opt;
  opt.multiplier_degree = 0;
  opt.margin = MarginKind::Variable;
  opt.margin_name = "s";
  p.assert_positive_on_set(lift(v(1, 0)), {v(1, 0) - k(1, 1.0)}, {}, opt, "pos");
  ConicSolution s = p.solve();
  ASSERT_EQ(s.status, SolveStatus::Feasible);
  SosCertificate c = p.extract_certificate(s);
  EXPECT_GT(c.scalars.at("s"), 0.0);
  EXPECT_LE(c.max_gram_residual(), 1e-6);
}

TEST(PositiveOnSet, BoundaryZeroBlocksFixedMargin) {
  SosProgram p(1);
  PositivityOptions opt;
  opt.margin = MarginKind::Fixed;
  opt.fixed_margin = 0.1;
  p.assert_positive_on_set(lift(v(1, 0) * v(1, 0)), {v(1, 0)}, {}, opt);
  EXPECT_EQ(p.solve().status, SolveStatus::Infeasible);
}

TEST(PositiveOnSet, SimplexAtDegreeZero) {
  SosProgram p(2);
  Polynomial b1 = v(2, 0), b2 = v(2, 1);
  PositivityOptions opt;
  opt.multiplier_degree = 0;
  opt.margin = MarginKind::Variable;
  p.assert_positive_on_set(lift(k(2, 2.0) - b1 - b2), {b1, b2, k(2, 1.0) - b1 - b2}, {}, opt, "simplex");
  ConicSolution s = p.solve();
  EXPECT_EQ(s.status, SolveStatus::Feasible);
  EXPECT_LE(p.extract_certificate(s).max_gram_residual(), 1e-6);
}

TEST(PositiveOnSet, EqualityMultipliers) {
  // 1 - x^2 - y^2 + 0.5 >= 0 on the circle x^2 + y^2 = 1
  SosProgram p(2);
  Polynomial x = v(2, 0), y = v(2, 1);
  PositivityOptions opt;
  opt.margin = MarginKind::Variable;
  p.assert_positive_on_set(lift(k(2, 1.5) - x * x - y * y), {}, {x * x + y * y - k(2, 1.0)}, opt);
  EXPECT_EQ(p.solve().status, SolveStatus::Feasible);
}

TEST(PositiveOnSet, DegreeCap) {
  SosProgram p(1);
  EXPECT_THROW(p.free_polynomial(41), DegreeOverflow);
}

TEST(FreePolynomial, NamedExpressionIsExtracted) {
  SosProgram p(1);
  PolyExpression b = p.free_polynomial(2, "B");
  // B - x^2 - 1 is SOS and B(0) <= 1  ->  B = x^2 + 1 + (SOS with zero constant)
  p.assert_sos(b - lift(v(1, 0) * v(1, 0) + k(1, 1.0)), "gap");
  LinExpr at0 = b.coefficient(Monomial(1));
  p.conic().add_inequality(LinExpr(1.0) - at0);
  for (const auto& [m, c] : b.terms()) {
    p.conic().add_inequality(LinExpr(5.0) - c);
    p.conic().add_inequality(LinExpr(5.0) + c);
  }
  ConicSolution s = p.solve();
  ASSERT_TRUE(s.status == SolveStatus::Feasible || s.status == SolveStatus::MarginalFeasible);
  SosCertificate c = p.extract_certificate(s);
  ASSERT_TRUE(c.polynomials.count("B"));
  EXPECT_NEAR(c.polynomials.at("B").coefficient(Monomial(1)), 1.0, 1e-5);
  auto j = c.to_json();
  EXPECT_TRUE(j["polynomials"].contains("B"));
  EXPECT_EQ(j["gram_factors"].size(), 1u);
}
