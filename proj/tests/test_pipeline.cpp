#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "optcon/pipeline.hpp"
#include "test_util.hpp"

using namespace optcon;
using namespace optcon::testing;
namespace fs = std::filesystem;

namespace {

bool has_warning(const RunReport& r, const std::string& needle) {
  for (const auto& w : r.warnings)
    if (w.find(needle) != std::string::npos) return true;
  return false;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

nlohmann::json scenario_json(const char* name) {
  return nlohmann::json::parse(slurp(scenario_path(name)));
}

// Reference K_i, rows stacked.
const Matrix& reference_K() {
  static const Matrix K = (Matrix(6, 3) << -0.3935, 0, 0,
                                           -0.1312, 0, 0,
                                           0, -0.2849, 0,
                                           0, -0.3561, 0,
                                           0, 0, -0.4871,
                                           0, 0, 0.0974).finished();
  return K;
}

}  // namespace

TEST(Pipeline, ExampleOneReport) {
  const auto rep = run_pipeline(load_scenario(scenario_path("example1.json")));
  ASSERT_TRUE(rep.error_design.has_value());
  EXPECT_FALSE(rep.state_design.has_value());
  EXPECT_TRUE(has_warning(rep, "not strongly connected"));
  EXPECT_TRUE(has_warning(rep, "LMI certificate not met"));
  ASSERT_TRUE(rep.baseline_F.has_value());

  const auto* dist = rep.find(Method::kDistributedError);
  const auto* trad = rep.find(Method::kTraditional);
  ASSERT_NE(dist, nullptr);
  ASSERT_NE(trad, nullptr);
  ASSERT_TRUE(dist->metrics.settling_step && trad->metrics.settling_step);
  EXPECT_GE(*trad->metrics.settling_step - *dist->metrics.settling_step, 8);
  EXPECT_LT(rep.error_design->rho_closed_loop, 1.0);
  EXPECT_LT(trad->rho, 1.0);

  const std::string csv = comparison_table_csv(rep);
  std::istringstream lines(csv);
  std::string header, row1, row2, extra;
  std::getline(lines, header);
  std::getline(lines, row1);
  std::getline(lines, row2);
  EXPECT_EQ(header, "method,rho,step1,step2,step4,step6,step8,step10,step12,step14,step16,step18,step20");
  // M1 is the traditional protocol, M2 the distributed observer design.
  EXPECT_EQ(row1.rfind("M1,", 0), 0u);
  EXPECT_EQ(row2.rfind("M2,", 0), 0u);
  EXPECT_FALSE(std::getline(lines, extra) && !extra.empty());
}

TEST(Pipeline, HalfWeightReproducesReferenceK) {
  const auto rep = run_pipeline(load_scenario(scenario_path("example2_half_weight.json")));
  ASSERT_TRUE(rep.state_design.has_value());
  Matrix K(6, 3);
  K << rep.state_design->K_blocks[0], rep.state_design->K_blocks[1], rep.state_design->K_blocks[2];
  EXPECT_LT((K - reference_K()).cwiseAbs().maxCoeff(), 2e-3);
  EXPECT_TRUE(rep.state_design->dare.positive_definite);

  const auto* run = rep.find(Method::kDistributedState);
  ASSERT_NE(run, nullptr);
  for (double v : run->metrics.state_norms[30]) EXPECT_LT(v, 1e-6);

  ASSERT_TRUE(run->costs.has_value());
  EXPECT_GE(run->costs->delta_J, -1e-8);
  for (double r : run->costs->identity_residuals) EXPECT_LE(r, 1e-6 * (1.0 + run->costs->J_star_distributed));
}

TEST(Pipeline, LaplacianReadingWarnsSemidefinite) {
  const auto rep = run_pipeline(load_scenario(scenario_path("example2.json")));
  EXPECT_TRUE(has_warning(rep, "only positive semidefinite"));
  EXPECT_LT(rep.state_design->rho_observer, 1.0);
}

TEST(Pipeline, HeterogeneousBaselineRefused) {
  auto j = scenario_json("example2.json");
  j["methods"].push_back("traditional");
  const auto rep = run_pipeline(parse_scenario(j.dump()));
  EXPECT_TRUE(has_warning(rep, "traditional baseline refused"));
  EXPECT_EQ(rep.find(Method::kTraditional), nullptr);
}

TEST(Pipeline, IterationCapWarns) {
  auto j = scenario_json("example2.json");
  j["synthesis"] = {{"max_iters", 1}, {"patience", 1000}};
  const auto rep = run_pipeline(parse_scenario(j.dump()));
  EXPECT_TRUE(has_warning(rep, "iteration cap reached"));
}

TEST(Pipeline, ShortHorizonSkipsCostCertificate) {
  auto j = scenario_json("example2_half_weight.json");
  j["horizon"] = 12;
  const auto rep = run_pipeline(parse_scenario(j.dump()));
  EXPECT_TRUE(has_warning(rep, "cost certificate skipped"));
  EXPECT_FALSE(rep.find(Method::kDistributedState)->costs.has_value());
}

TEST(Pipeline, UnmeasuredBlockMakesObserversDiverge) {
  // Nobody measures the third error block, so its open-loop mode (1.1) survives.
  auto j = scenario_json("example1.json");
  j["measurement_plan"]["H"] = nlohmann::json::parse("[[1], [2], [2], []]");
  const auto rep = run_pipeline(parse_scenario(j.dump()));
  EXPECT_TRUE(has_warning(rep, "observers do not converge"));
  EXPECT_GE(rep.error_design->rho_observer, 1.1 - 1e-9);
}

TEST(Pipeline, SynthesizeOnly) {
  PipelineOptions o;
  o.synthesize_only = true;
  const auto rep = run_pipeline(load_scenario(scenario_path("example1.json")), o);
  EXPECT_TRUE(rep.runs.empty());
  ASSERT_TRUE(rep.error_design && rep.error_design->synthesis);
}

// Closing the chain into a cycle makes the cycle sum of e an uncontrollable
// unstable mode: the error-form DARE has no stabilizing solution.
TEST(Pipeline, FailuresNameTheStage) {
  auto j = scenario_json("example1.json");
  j["graph"]["neighbors"] = nlohmann::json::parse("[[3], [4], [2], [1]]");
  j["measurement_plan"].erase("H");
  try {
    run_pipeline(parse_scenario(j.dump()));
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "dare");
  }
}

TEST(Pipeline, ExportIsByteIdentical) {
  const auto spec = load_scenario(scenario_path("example1.json"));
  const fs::path base = fs::temp_directory_path() / ("optcon_export_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  fs::remove_all(base);
  const auto a = export_report(run_pipeline(spec), base / "a");
  const auto b = export_report(run_pipeline(spec), base / "b");
  ASSERT_EQ(a.size(), b.size());
  ASSERT_GE(a.size(), 4u);  // report, table, one csv per method
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].filename(), b[i].filename());
    EXPECT_EQ(slurp(a[i]), slurp(b[i])) << a[i];
  }
  const auto report = nlohmann::json::parse(slurp(base / "a" / "report.json"));
  EXPECT_EQ(report["scenario"], "example1");
  fs::remove_all(base);
}

TEST(Pipeline, TrajectoryCsvLayout) {
  auto j = scenario_json("example1.json");
  j["horizon"] = 3;
  j["report_steps"] = {1, 2};
  const auto rep = run_pipeline(parse_scenario(j.dump()));
  const std::string csv = trajectory_csv(rep.find(Method::kTraditional)->trajectory);
  std::istringstream in(csv);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("k,agent,", 0), 0u);
  int rows = 0;
  for (std::string line; std::getline(in, line);) rows += !line.empty();
  EXPECT_EQ(rows, 4 * 4);
}
