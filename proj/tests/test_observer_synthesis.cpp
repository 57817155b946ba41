#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "optcon/linalg.hpp"
#include "optcon/observer_synthesis.hpp"
#include "test_util.hpp"

using namespace optcon;
using namespace optcon::testing;

namespace {

// Agent 1 listens to agent 2; both measure the single error block, so the
// observer gains are two scalars and A_ec is 2x2.
struct TwoScalar {
  RandomInstance inst;
  ErrorDesign d;
};

TwoScalar two_scalar() {
  RandomInstance r;
  r.dyn.A = Matrix::Constant(1, 1, 1.2);
  r.dyn.B = {Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 0.5)};
  r.adjacency = Matrix::Zero(2, 2);
  r.adjacency(0, 1) = 1.0;
  r.w.Q = Matrix::Identity(1, 1);
  r.w.R = {Matrix::Identity(1, 1), Matrix::Identity(1, 1)};
  std::vector<Matrix> plan(2, Matrix::Ones(1, 1));
  return {r, error_design(r, plan)};
}

double sigma2x2(double a, double b, double c, double d) {
  const double s = a * a + b * b + c * c + d * d;
  const double det = a * d - b * c;
  return std::sqrt(0.5 * (s + std::sqrt(std::max(0.0, s * s - 4.0 * det * det))));
}

ObserverGains random_gains(std::mt19937_64& rng, GainForm form, std::span<const GainShape> shapes) {
  ObserverGains g{form, {}};
  for (const auto& s : shapes) g.gains.push_back(random_matrix(rng, s.rows, s.cols));
  return g;
}

}  // namespace

TEST(ObserverSynthesis, BlockStructureByHand) {
  std::mt19937_64 rng(4);
  const auto inst = random_instance(rng, 3, 2, 0.95);
  const auto d = error_design(inst);
  const auto gains = random_gains(rng, GainForm::kError, error_gain_shapes(d.sys));
  const Matrix Aec = assemble_A_ec(d.sys, d.K, gains);
  const int n = d.sys.dimension();
  ASSERT_EQ(Aec.rows(), 3 * n);
  const Matrix closed = d.sys.A_tilde + d.sys.B_bar * d.dare.gain;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      Matrix expect = -d.sys.B_bar_list[j] * d.K[j];
      if (i == j) expect = closed - d.sys.B_bar_list[i] * d.K[i] - gains.gains[i] * d.sys.H_list[i];
      EXPECT_LT((Aec.block(i * n, j * n, n, n) - expect).norm(), 1e-12) << i << "," << j;
    }
  }

  const auto sd = state_design(inst);
  const auto sg = random_gains(rng, GainForm::kState, state_gain_shapes(sd.sys));
  const Matrix Ac = assemble_A_c(sd.sys, sd.K, sg);
  const int m = sd.sys.dimension();
  const Matrix W0 = sd.sys.A_tilde + sd.sys.B_tilde * sd.dare.gain - sd.sys.B_tilde_list[1] * sd.K[1] -
                    sg.gains[1] * sd.sys.C_list[1];
  EXPECT_LT((Ac.block(m, m, m, m) - W0).norm(), 1e-12);
  EXPECT_LT((Ac.block(0, 2 * m, m, m) + sd.sys.B_tilde_list[2] * sd.K[2]).norm(), 1e-12);
}

TEST(ObserverSynthesis, AffineMapRoundTrip) {
  std::mt19937_64 rng(8);
  const auto d = error_design(random_instance(rng, 3, 2, 1.05, true));
  const auto shapes = error_gain_shapes(d.sys);
  GainAssembler asm_fn = [&](const ObserverGains& g) { return assemble_A_ec(d.sys, d.K, g); };
  const auto map = AffineGainMap::probe(asm_fn, GainForm::kError, shapes);

  for (int t = 0; t < 5; ++t) {
    const auto g = random_gains(rng, GainForm::kError, shapes);
    const Vector theta = map.pack(g);
    EXPECT_LT((map.evaluate(theta) - asm_fn(g)).norm(), 1e-11);
    const auto back = map.unpack(theta);
    for (std::size_t i = 0; i < g.gains.size(); ++i) EXPECT_EQ(back.gains[i], g.gains[i]);

    // ⟨G, M(θ) - M(0)⟩ = ⟨adjoint(G), θ⟩
    const Matrix G = random_matrix(rng, map.rows(), map.cols());
    const double lhs = (G.array() * (map.evaluate(theta) - map.evaluate(Vector::Zero(theta.size()))).array()).sum();
    EXPECT_NEAR(lhs, map.adjoint(G).dot(theta), 1e-9 * (1.0 + std::abs(lhs)));
  }
}

TEST(ObserverSynthesis, RejectsNonAffineAssembler) {
  const auto ts = two_scalar();
  GainAssembler bent = [&](const ObserverGains& g) {
    Matrix m = assemble_A_ec(ts.d.sys, ts.d.K, g);
    m(0, 0) += g.gains[0](0, 0) * g.gains[1](0, 0);
    return m;
  };
  const auto init = zero_gains(GainForm::kError, error_gain_shapes(ts.d.sys));
  EXPECT_THROW(minimize_spectral_norm(bent, init), InvalidArgument);
}

TEST(ObserverSynthesis, LmiFeasibility) {
  const Matrix A = (Matrix(2, 2) << 0.5, 0.2, 0.0, 0.3).finished();
  const double s = linalg::sigma_max(A);
  EXPECT_TRUE(lmi_feasible(A, s * s));
  EXPECT_TRUE(lmi_feasible(A, 1.0));
  EXPECT_FALSE(lmi_feasible(A, 0.99 * s * s));
}

// Exhaustive grid over the two scalar gains is the oracle for the convex
// minimum; a local refinement removes the grid resolution error.
TEST(ObserverSynthesis, MatchesGridOnTwoScalarInstance) {
  const auto ts = two_scalar();
  const auto shapes = error_gain_shapes(ts.d.sys);
  ASSERT_EQ(shapes.size(), 2u);
  const Matrix M0 = assemble_A_ec(ts.d.sys, ts.d.K, zero_gains(GainForm::kError, shapes));
  ASSERT_EQ(M0.rows(), 2);

  // Υ_i H_i enters only the (i,i) entry with a minus sign.
  ObserverGains probe = zero_gains(GainForm::kError, shapes);
  probe.gains[0](0, 0) = 0.3;
  probe.gains[1](0, 0) = -0.7;
  Matrix expect = M0;
  expect(0, 0) -= 0.3;
  expect(1, 1) += 0.7;
  ASSERT_LT((assemble_A_ec(ts.d.sys, ts.d.K, probe) - expect).norm(), 1e-14);

  auto f = [&](double t1, double t2) { return sigma2x2(M0(0, 0) - t1, M0(0, 1), M0(1, 0), M0(1, 1) - t2); };
  double best = INFINITY, b1 = 0, b2 = 0;
  for (int i = 0; i <= 1000; ++i) {
    for (int j = 0; j <= 1000; ++j) {
      const double t1 = -5.0 + 0.01 * i, t2 = -5.0 + 0.01 * j;
      const double v = f(t1, t2);
      if (v < best) best = v, b1 = t1, b2 = t2;
    }
  }
  double fine = best;
  for (int i = -100; i <= 100; ++i)
    for (int j = -100; j <= 100; ++j) fine = std::min(fine, f(b1 + 1e-4 * i, b2 + 1e-4 * j));

  const auto t0 = std::chrono::steady_clock::now();
  const auto res = synthesize_error_observers(ts.d.sys, ts.d.K);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_NEAR(res.report.rho_star, fine, 1e-3);
  EXPECT_LE(res.report.rho_star, best + 1e-9);
  EXPECT_LT(secs, 5.0);
  EXPECT_NEAR(res.report.rho_star, f(res.gains.gains[0](0, 0), res.gains.gains[1](0, 0)), 1e-12);
}

TEST(ObserverSynthesis, HistoryMonotoneAndReportConsistent) {
  std::mt19937_64 rng(21);
  const auto d = error_design(random_instance(rng, 3, 2, 1.05, true));
  const auto res = synthesize_error_observers(d.sys, d.K);
  ASSERT_GE(res.report.history.size(), 2u);
  for (std::size_t k = 1; k < res.report.history.size(); ++k)
    EXPECT_LE(res.report.history[k], res.report.history[k - 1] + 1e-15);
  const Matrix Aec = assemble_A_ec(d.sys, d.K, res.gains);
  EXPECT_NEAR(res.report.rho_star, linalg::sigma_max(Aec), 1e-12);
  EXPECT_NEAR(res.report.spectral_radius, linalg::spectral_radius(Aec), 1e-12);
  EXPECT_LE(res.report.spectral_radius, res.report.rho_star + 1e-12);
  EXPECT_EQ(res.report.stable, res.report.spectral_radius < 1.0);
}

TEST(ObserverSynthesis, SubgradientAlsoDescends) {
  std::mt19937_64 rng(31);
  const auto d = state_design(random_instance(rng, 3, 2));
  SynthesisOptions o;
  o.direction = SearchDirection::kSubgradient;
  o.max_iters = 20000;
  const auto sub = synthesize_state_observers(d.sys, d.K, o);
  const auto qn = synthesize_state_observers(d.sys, d.K);
  EXPECT_LT(sub.report.rho_star, sub.report.history.front());
  // The quasi-Newton path is the reference; subgradient is slower, not wrong.
  EXPECT_LE(qn.report.rho_star, sub.report.rho_star + 1e-6);
}

TEST(ObserverSynthesis, IterationCapCarriesBest) {
  std::mt19937_64 rng(41);
  const auto d = error_design(random_instance(rng, 4, 2, 1.05, true));
  SynthesisOptions o;
  o.max_iters = 2;
  o.patience = 1000;
  try {
    synthesize_error_observers(d.sys, d.K, o);
    FAIL() << "expected SynthesisNonConvergence";
  } catch (const SynthesisNonConvergence& e) {
    const auto& r = e.best().report;
    EXPECT_FALSE(r.converged);
    EXPECT_LE(r.rho_star, r.history.front());
    EXPECT_EQ(e.best().gains.gains.size(), 4u);
  }
}

TEST(ObserverSynthesis, DeterministicForSeed) {
  std::mt19937_64 rng(51);
  const auto d = error_design(random_instance(rng, 3, 2, 1.05, true));
  const auto a = synthesize_error_observers(d.sys, d.K);
  const auto b = synthesize_error_observers(d.sys, d.K);
  EXPECT_EQ(a.report.rho_star, b.report.rho_star);
  for (std::size_t i = 0; i < a.gains.gains.size(); ++i) EXPECT_EQ(a.gains.gains[i], b.gains.gains[i]);
}

// With every agent measuring the full error vector the deadbeat heuristic
// zeroes each diagonal block.
TEST(ObserverSynthesis, DeadbeatWithFullMeasurement) {
  std::mt19937_64 rng(61);
  const auto inst = random_instance(rng, 3, 2, 1.05, true);
  const auto probe = build_error_system(inst.dyn, inst.graph(), inst.w);
  std::vector<Matrix> full(3, Matrix::Identity(probe.dimension(), probe.dimension()));
  const auto d = error_design(inst, full);
  const Matrix Aec = assemble_A_ec(d.sys, d.K, deadbeat_gains(d.sys, d.K));
  const int n = d.sys.dimension();
  for (int i = 0; i < 3; ++i) EXPECT_LT(Aec.block(i * n, i * n, n, n).norm(), 1e-10);
}

TEST(ObserverSynthesis, OptionValidation) {
  const auto ts = two_scalar();
  SynthesisOptions o;
  o.tol = 0.0;
  EXPECT_THROW(synthesize_error_observers(ts.d.sys, ts.d.K, o), InvalidArgument);
  o = {};
  o.max_iters = 0;
  EXPECT_THROW(synthesize_error_observers(ts.d.sys, ts.d.K, o), InvalidArgument);
  std::vector<Matrix> wrong(1, Matrix::Zero(1, 1));
  EXPECT_THROW(synthesize_error_observers(ts.d.sys, wrong), DimensionError);
}
