#include <gtest/gtest.h>

#include <cmath>

#include "optcon/cost_analysis.hpp"
#include "optcon/linalg.hpp"
#include "test_util.hpp"

using namespace optcon;
using namespace optcon::testing;

namespace {

constexpr int kLongHorizon = 3000;
// Random identity checks use a marginally stable A: with an unstable common
// mode the absolute states grow until x_i - x_j is pure cancellation noise
// long before the stage costs reach the tail tolerance.
constexpr double kRandomRadius = 0.98;

SimulationConfig config(Method m, std::vector<Vector> x0, int horizon) {
  SimulationConfig c;
  c.method = m;
  c.x0 = std::move(x0);
  c.horizon = horizon;
  return c;
}

void expect_identity(const Trajectory& tr, const Matrix& P, const CostDiffMatrices& mats, const char* tag) {
  for (int s : {0, 3, 7}) {
    const auto chk = verify_cost_identity(tr, P, mats, s);
    EXPECT_TRUE(chk.within_contract()) << tag << " s=" << s << " J=" << chk.J_simulated
                                       << " predicted=" << chk.J_predicted << " residual=" << chk.residual;
  }
}

}  // namespace

TEST(CostAnalysis, SumStageCostsAndTail) {
  std::vector<double> stages;
  for (int k = 0; k <= 30; ++k) stages.push_back(std::pow(0.1, k));
  const auto c = sum_stage_costs(stages, 0);
  EXPECT_NEAR(c.value, 1.0 / 0.9, 1e-14);
  EXPECT_NEAR(c.truncation_bound, stages.back() * 0.1 / 0.9, 1e-40);
  EXPECT_NEAR(sum_stage_costs(stages, 2).value, 0.01 / 0.9, 1e-15);

  std::vector<double> slow(31, 1.0);
  EXPECT_THROW(sum_stage_costs(slow, 0), TailNotConverged);
  EXPECT_THROW(sum_stage_costs(stages, 25), TailNotConverged);
  EXPECT_THROW(sum_stage_costs(stages, 31), InvalidArgument);
}

// Recorded, pairwise and stacked stage costs describe the same number.
TEST(CostAnalysis, CostFormsAgree) {
  std::mt19937_64 rng(100);
  for (int t = 0; t < 100; ++t) {
    const auto inst = random_instance(rng, 2 + t % 3, 1 + t % 3, 0.9, t % 2 == 0);
    const auto d = error_design(inst);
    const auto tr = simulate_centralized(inst.dyn, d.sys, d.dare.gain,
                                         config(Method::kCentralizedError, random_states(rng, inst.dyn.num_agents(), inst.dyn.state_dim()), 800));
    const double rec = evaluate_cost(tr, d.sys, 0, CostForm::kRecorded).value;
    EXPECT_NEAR(evaluate_cost(tr, d.sys, 0, CostForm::kPairwise).value, rec, 1e-10 * (1.0 + rec));
    EXPECT_NEAR(evaluate_cost(tr, d.sys, 0, CostForm::kQuadratic).value, rec, 1e-10 * (1.0 + rec));
  }
}

// Scalar two-agent case written out: B̄ = [1, -0.5].
TEST(CostAnalysis, MatricesByHand) {
  RandomInstance r;
  r.dyn.A = Matrix::Constant(1, 1, 1.2);
  r.dyn.B = {Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 0.5)};
  r.adjacency = Matrix::Zero(2, 2);
  r.adjacency(0, 1) = 1.0;
  r.w.Q = Matrix::Identity(1, 1);
  r.w.R = {Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 3.0)};
  const auto d = error_design(r);
  const double p = d.dare.P(0, 0), k1 = d.K[0](0, 0), k2 = d.K[1](0, 0);
  const double b1 = 1.0, b2 = -0.5;
  const auto m = cost_difference_matrices(d.sys, d.dare.P, d.K);
  const double o1 = -b1 * k1, o2 = -b2 * k2;
  const double acl = 1.2 + b1 * k1 + b2 * k2;
  EXPECT_NEAR(m.Omega(0, 0), o1, 1e-15);
  EXPECT_NEAR(m.Omega(0, 1), o2, 1e-15);
  EXPECT_NEAR(m.Omega1(0, 0), 2.0 * k1 * k1, 1e-14);
  EXPECT_NEAR(m.Omega1(0, 1), 3.0 * k2 * k2, 1e-14);
  EXPECT_NEAR(m.M1(0, 0), acl * p * o1 - 2.0 * k1 * k1, 1e-13);
  EXPECT_NEAR(m.M1(0, 1), acl * p * o2 - 3.0 * k2 * k2, 1e-13);
  EXPECT_NEAR(m.M2(0, 0), 2.0 * k1 * k1 + o1 * p * o1, 1e-13);
  EXPECT_NEAR(m.M2(0, 1), o1 * p * o2, 1e-13);
  EXPECT_NEAR(m.M2(1, 1), 3.0 * k2 * k2 + o2 * p * o2, 1e-13);
}

TEST(CostAnalysis, ZeroGainsGiveZeroMatrices) {
  const auto inst = example1_instance();
  const auto sys = build_error_system(inst.dyn, inst.graph(), inst.w);
  std::vector<Matrix> zero(4, Matrix::Zero(1, sys.dimension()));
  const Matrix P = Matrix::Identity(sys.dimension(), sys.dimension());
  const auto m = cost_difference_matrices(sys, P, zero);
  EXPECT_EQ(m.Omega.norm(), 0.0);
  EXPECT_EQ(m.M1.norm(), 0.0);
  EXPECT_EQ(m.M2.norm(), 0.0);
  EXPECT_EQ(m.joint().rows(), 5 * sys.dimension());
}

TEST(CostAnalysis, M2SymmetricAndPsd) {
  std::mt19937_64 rng(101);
  for (int t = 0; t < 10; ++t) {
    const auto d = error_design(random_instance(rng, 3, 2, 1.05, true));
    const auto m = cost_difference_matrices(d.sys, d.dare.P, d.K);
    EXPECT_TRUE(linalg::is_symmetric(m.M2, 1e-10 * (1.0 + m.M2.norm())));
    EXPECT_GE(linalg::min_symmetric_eigenvalue(m.M2), -1e-9 * (1.0 + m.M2.norm()));
    EXPECT_TRUE(linalg::is_symmetric(m.joint(), 1e-10 * (1.0 + m.M2.norm())));
  }
}

// Example 1 plant with every agent measuring its own error blocks and the
// observers started at zero.
TEST(CostAnalysis, IdentityOnExampleOneStyle) {
  const auto inst = example1_instance();
  const auto d = error_design(inst);
  const auto syn = synthesize_error_observers(d.sys, d.K);
  ASSERT_LT(syn.report.spectral_radius, 1.0);
  const std::vector<Vector> x0{Vector::Ones(2), Vector::Zero(2), -2.0 * Vector::Ones(2), Vector::Zero(2)};
  const auto tr = simulate_distributed_error(inst.dyn, d.sys, d.K, syn.gains,
                                             config(Method::kDistributedError, x0, kLongHorizon));
  expect_identity(tr, d.dare.P, cost_difference_matrices(d.sys, d.dare.P, d.K), "example1");
}

TEST(CostAnalysis, IdentityOnRandomScenarios) {
  std::mt19937_64 rng(102);
  int checked = 0;
  for (int attempt = 0; attempt < 60 && checked < 10; ++attempt) {
    const int N = 2 + attempt % 3;
    const auto inst = random_instance(rng, N, 1 + attempt % 3, kRandomRadius, true);
    const auto d = error_design(inst);
    const auto syn = synthesize_error_observers(d.sys, d.K);
    if (syn.report.spectral_radius >= 0.97) continue;  // slow tails need absurd horizons
    const auto tr = simulate_distributed_error(inst.dyn, d.sys, d.K, syn.gains,
                                               config(Method::kDistributedError, random_states(rng, N, inst.dyn.state_dim()), kLongHorizon));
    expect_identity(tr, d.dare.P, cost_difference_matrices(d.sys, d.dare.P, d.K), "random");
    ++checked;
  }
  EXPECT_EQ(checked, 10);
}

TEST(CostAnalysis, IdentityStateTwin) {
  std::mt19937_64 rng(103);
  int checked = 0;
  for (int attempt = 0; attempt < 60 && checked < 5; ++attempt) {
    auto inst = random_instance(rng, 3, 2, kRandomRadius);
    inst.w.state_weight = complete_graph_weight(inst.w.Q, 3) + 0.5 * Matrix::Identity(6, 6);
    const auto d = state_design(inst);
    const auto syn = synthesize_state_observers(d.sys, d.K);
    if (syn.report.spectral_radius >= 0.97) continue;
    const auto tr = simulate_distributed_state(inst.dyn, d.sys, d.K, syn.gains,
                                               config(Method::kDistributedState, random_states(rng, 3, 2), kLongHorizon));
    expect_identity(tr, d.dare.P, cost_difference_matrices(d.sys, d.dare.P, d.K), "state");
    ++checked;
  }
  EXPECT_EQ(checked, 5);
}

TEST(CostAnalysis, IdentityNeedsObserverTrajectory) {
  const auto inst = example1_instance();
  const auto d = error_design(inst);
  const auto tr = simulate_centralized(inst.dyn, d.sys, d.dare.gain,
                                       config(Method::kCentralizedError, std::vector<Vector>(4, Vector::Ones(2)), 50));
  EXPECT_THROW(verify_cost_identity(tr, d.dare.P, cost_difference_matrices(d.sys, d.dare.P, d.K), 0),
               InvalidArgument);
}

TEST(CostAnalysis, DecayFitOnGeometricSeries) {
  std::vector<double> s;
  for (int k = 0; k <= 10; ++k) s.push_back(std::pow(0.5, 2 * k));
  const auto fit = decay_certificate(s);
  EXPECT_NEAR(fit.gamma, 0.5, 1e-9);
  EXPECT_NEAR(fit.a_bar, 1.0, 1e-9);
  EXPECT_LE(fit.max_violation, 1e-12);

  for (double& v : s) v *= 3.0;
  s[4] *= 1.5;  // a bump above the fitted line must be covered by ā
  const auto bumped = decay_certificate(s);
  for (std::size_t k = 0; k < s.size(); ++k)
    EXPECT_LE(s[k], bumped.a_bar * std::pow(bumped.gamma, 2.0 * k) * (1 + 1e-12));

  const std::vector<double> zero(8, 0.0);
  const auto z = decay_certificate(zero);
  EXPECT_EQ(z.a_bar, 0.0);
  EXPECT_EQ(z.gamma, 0.0);
  EXPECT_EQ(z.max_violation, 0.0);
  EXPECT_THROW(decay_certificate(std::vector<double>(5, 1.0)), InvalidArgument);
}

TEST(CostAnalysis, BreakdownSeriesAgreeAndNonNegative) {
  std::mt19937_64 rng(104);
  RandomInstance inst;
  ErrorDesign d;
  SynthesisResult syn;
  for (int attempt = 0;; ++attempt) {
    ASSERT_LT(attempt, 20) << "no instance with a fast observer";
    inst = random_instance(rng, 3, 2, kRandomRadius, true);
    d = error_design(inst);
    syn = synthesize_error_observers(d.sys, d.K);
    if (syn.report.spectral_radius < 0.97) break;
  }
  const auto x0 = random_states(rng, 3, 2);
  const auto tr = simulate_distributed_error(inst.dyn, d.sys, d.K, syn.gains,
                                             config(Method::kDistributedError, x0, kLongHorizon));
  const auto b = cost_breakdown(tr, d.dare.P, cost_difference_matrices(d.sys, d.dare.P, d.K), 10);
  ASSERT_EQ(b.series.size(), 11u);
  const Vector e0 = d.sys.ledger.stack_errors(x0);
  EXPECT_NEAR(b.J_star_centralized, e0.dot(d.dare.P * e0), 1e-9 * (1.0 + b.J_star_centralized));
  EXPECT_NEAR(b.delta_J, b.J_star_distributed - b.J_star_centralized, 1e-9 * (1.0 + b.J_star_distributed));
  for (std::size_t s = 0; s < b.series.size(); ++s) {
    EXPECT_GE(b.series[s], -1e-8 * (1.0 + b.J_star_distributed));
    EXPECT_NEAR(b.series[s], b.series_direct[s], 1e-6 * (1.0 + b.J_star_distributed));
  }
  for (double r : b.identity_residuals) EXPECT_LE(r, 1e-6 * (1.0 + b.J_star_distributed));
}

TEST(CostAnalysis, ShortHorizonReportsTail) {
  const auto inst = example1_instance();
  const auto d = error_design(inst);
  const auto syn = synthesize_error_observers(d.sys, d.K);
  const auto tr = simulate_distributed_error(inst.dyn, d.sys, d.K, syn.gains,
                                             config(Method::kDistributedError, std::vector<Vector>{Vector::Ones(2), Vector::Zero(2), Vector::Zero(2), Vector::Zero(2)}, 12));
  EXPECT_THROW(evaluate_cost(tr, 0), TailNotConverged);
  EXPECT_THROW(verify_cost_identity(tr, d.dare.P, cost_difference_matrices(d.sys, d.dare.P, d.K), 0),
               TailNotConverged);
}
