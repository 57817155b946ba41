#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "optcon/cost_analysis.hpp"
#include "optcon/observer_synthesis.hpp"
#include "optcon/riccati.hpp"
#include "optcon/scenario.hpp"
#include "optcon/simulator.hpp"

namespace optcon {

/// Module error rethrown with the pipeline stage it came from.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Gains and spectral data of one design (error form or state form).
struct Design {
  DareSolution dare;
  std::vector<Matrix> K_blocks;
  std::optional<SynthesisResult> synthesis;
  /// ρ of the centralized closed loop (Ã + B̄K_e or Ã + B̃K).
  double rho_closed_loop = 0.0;
  /// ρ of the observer-error matrix (Ã_ec or Ã_c).
  double rho_observer = 0.0;
  /// σ_max of the observer-error matrix (the LMI bound ρ*).
  double sigma_bound = 0.0;
  /// ρ of the joint (z, z̃) closed loop.
  double rho_joint = 0.0;
  std::optional<CostDiffMatrices> cost_matrices;
};

struct MethodRun {
  Method method = Method::kDistributedError;
  Trajectory trajectory;
  ConsensusMetrics metrics;
  /// Observer methods: ρ of the observer-error matrix. Centralized: ρ of the
  /// closed loop. Traditional: ρ of its disagreement dynamics.
  double rho = 0.0;
  std::optional<CostBreakdown> costs;
};

struct RunReport {
  std::string scenario;
  std::vector<std::string> inferred;
  std::optional<Design> error_design;
  std::optional<Design> state_design;
  std::optional<Matrix> baseline_F;
  std::vector<MethodRun> runs;
  std::vector<int> report_steps;
  double consensus_threshold = 1e-3;
  std::vector<std::string> warnings;

  const MethodRun* find(Method m) const;
};

struct PipelineOptions {
  /// Stop after gains and observers (the `synth` subcommand).
  bool synthesize_only = false;
};

RunReport run_pipeline(const ScenarioSpec& spec, const PipelineOptions& opts = {});

/// Table-I layout: method label (M1 traditional, M2 distributed_error, else
/// the method name), ρ, then ‖x_1‖ at each report step.
std::string comparison_table_csv(const RunReport& report);

/// Full report as pretty-printed JSON (keys sorted, deterministic).
std::string report_json(const RunReport& report);

/// One row per (k, agent): k, agent, x…, u…, observer…, stage_cost.
std::string trajectory_csv(const Trajectory& traj);

/// Writes report.json, table.csv and <method>.csv into `dir` (created if
/// needed). Returns the written paths.
std::vector<std::filesystem::path> export_report(const RunReport& report,
                                                 const std::filesystem::path& dir);

}  // namespace optcon
