#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "optcon/graph.hpp"
#include "optcon/observer_synthesis.hpp"
#include "optcon/system_builder.hpp"
#include "optcon/types.hpp"

namespace optcon {

enum class Method {
  kDistributedError,
  kDistributedState,
  kCentralizedError,
  kCentralizedState,
  kTraditional,
};

std::string_view method_name(Method m);
/// Inverse of method_name; throws InvalidArgument on unknown names.
Method parse_method(std::string_view name);
bool uses_observers(Method m);

enum class ObserverStart {
  kZero,
  /// ê_i(0) = e(0) (resp. X̂_i(0) = X(0)): observers start exact.
  kTruth,
  /// Taken from SimulationConfig::observer_init.
  kGiven,
};

struct SimulationConfig {
  int horizon = 200;
  std::vector<Vector> x0;
  ObserverStart observer_start = ObserverStart::kZero;
  std::vector<Vector> observer_init;
  Method method = Method::kDistributedError;
};

/// Everything is recorded for k = 0..horizon (horizon + 1 samples). The
/// input at k = horizon is computed but never applied; it only closes the
/// last stage cost.
struct Trajectory {
  Method method = Method::kDistributedError;
  std::vector<std::vector<Vector>> states;           // [k][agent]
  std::vector<std::vector<Vector>> inputs;           // [k][agent]
  std::vector<std::vector<Vector>> observer_states;  // [k][agent], observer methods only
  std::vector<Vector> error_vector;                  // e(k), ledger order
  std::vector<Vector> observer_error;                // stacked ẽ(k), observer methods only
  std::vector<double> cost_increments;

  int horizon() const { return static_cast<int>(states.size()) - 1; }
  int num_agents() const { return states.empty() ? 0 : static_cast<int>(states[0].size()); }
  Vector stacked_state(int k) const;
  Vector stacked_input(int k) const;
};

struct ConsensusMetrics {
  /// 1-based step label (step s is k = s - 1) from which the largest pairwise
  /// distance stays <= threshold until the horizon.
  std::optional<int> settling_step;
  std::vector<double> max_pairwise_error;
  std::vector<std::vector<double>> state_norms;  // [k][agent]
};

Trajectory simulate_distributed_error(const AgentDynamics& dyn, const GlobalErrorSystem& sys,
                                      std::span<const Matrix> Ke_blocks,
                                      const ObserverGains& gains, const SimulationConfig& cfg);

Trajectory simulate_distributed_state(const AgentDynamics& dyn, const GlobalStateSystem& sys,
                                      std::span<const Matrix> K_blocks,
                                      const ObserverGains& gains, const SimulationConfig& cfg);

/// u = K_e e(k).
Trajectory simulate_centralized(const AgentDynamics& dyn, const GlobalErrorSystem& sys,
                                const Matrix& Ke, const SimulationConfig& cfg);
/// u = K X(k).
Trajectory simulate_centralized(const AgentDynamics& dyn, const GlobalStateSystem& sys,
                                const Matrix& K, const SimulationConfig& cfg);

/// u_i = F Σ_j a_ij (x_j - x_i). Stage cost is the pairwise error cost over
/// the graph's edges. Throws InvalidArgument for heterogeneous B_i.
Trajectory simulate_traditional(const AgentDynamics& dyn, const DirectedGraph& g, const Matrix& F,
                                const CostWeights& w, const SimulationConfig& cfg);

/// F = c (R_0 + BᵀP_0B)⁻¹BᵀP_0A, P_0 from the single-agent DARE (A, B, Q, R_0),
/// c = 2 / (λ_2 + λ_N) of the Laplacian of the undirected graph (𝒜 + 𝒜ᵀ)/2. Each Laplacian mode then
/// sees A - λ c B(...)⁻¹BᵀP_0A = A + λc K_lqr.
Matrix baseline_gain(const AgentDynamics& dyn, const DirectedGraph& g, const Matrix& Q,
                     const Matrix& R0);

/// max over nonzero Laplacian eigenvalues λ of ρ(A - λBF): the rate of the
/// disagreement dynamics under the traditional protocol.
double traditional_consensus_radius(const AgentDynamics& dyn, const DirectedGraph& g,
                                    const Matrix& F);

/// Pairs are all i < j (not only graph edges).
ConsensusMetrics consensus_metrics(const Trajectory& traj, double threshold = 1e-3);

}  // namespace optcon
