#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "optcon/graph.hpp"
#include "optcon/observer_synthesis.hpp"
#include "optcon/simulator.hpp"
#include "optcon/system_builder.hpp"
#include "optcon/types.hpp"

namespace optcon {

/// A validated scenario. All indices are 0-based here; scenario files use
/// 1-based agent and error-block numbers.
struct ScenarioSpec {
  std::string name;
  std::string description;
  /// Fields reconstructed rather than given (e.g. "graph", "x0").
  std::vector<std::string> inferred;

  AgentDynamics dynamics;
  Matrix adjacency;
  CostWeights weights;

  /// Per agent, the ledger blocks it measures (H_i) ...
  std::optional<std::vector<std::vector<int>>> measured_blocks;
  /// ... and the agents whose states it measures (C_i).
  std::optional<std::vector<std::vector<int>>> measured_agents;

  std::vector<Method> methods;
  int horizon = 200;
  std::vector<Vector> x0;
  ObserverStart observer_start = ObserverStart::kZero;
  std::vector<Vector> observer_init_error;
  std::vector<Vector> observer_init_state;

  SynthesisOptions synthesis;
  std::optional<Matrix> baseline_F;
  /// R_0 of the baseline DARE; defaults to R_1.
  std::optional<Matrix> baseline_R0;

  /// 1-based step labels (step s is k = s - 1).
  std::vector<int> report_steps;
  double consensus_threshold = 1e-3;
  /// ΔJ(s) is reported for s = 0..cost_steps.
  int cost_steps = 10;

  DirectedGraph graph() const { return DirectedGraph(adjacency); }
  int num_agents() const { return dynamics.num_agents(); }
  bool wants(Method m) const;

  /// H_i / C_i as selector matrices, or nullopt for the defaults.
  std::optional<std::vector<Matrix>> error_measurement_plan(const EdgeLedger& ledger) const;
  std::optional<std::vector<Matrix>> state_measurement_plan() const;

  SimulationConfig simulation_config(Method m) const;
};

/// Throws ParseError (with line/column or the offending field path) and
/// DimensionError (naming the offending matrix).
ScenarioSpec load_scenario(const std::filesystem::path& path);
ScenarioSpec parse_scenario(const std::string& text, const std::string& origin = "<string>");

}  // namespace optcon
