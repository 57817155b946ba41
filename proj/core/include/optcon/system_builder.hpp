#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "optcon/graph.hpp"
#include "optcon/types.hpp"

namespace optcon {

/// x_i(k+1) = A x_i(k) + B_i u_i(k): shared state matrix, per-agent inputs.
struct AgentDynamics {
  Matrix A;
  std::vector<Matrix> B;

  int num_agents() const { return static_cast<int>(B.size()); }
  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim(int agent) const { return static_cast<int>(B.at(agent).cols()); }
  std::vector<int> input_dims() const;
  int total_input_dim() const;
  /// True when every B_i equals B_0.
  bool homogeneous() const;

  void validate() const;
};

/// Q >= 0 on pairwise errors, R_i > 0 per agent. `state_weight` optionally
/// replaces the complete-graph weight 𝒬 used by the stacked-state system.
struct CostWeights {
  Matrix Q;
  std::vector<Matrix> R;
  std::optional<Matrix> state_weight;

  void validate(const AgentDynamics& dyn) const;
};

/// Ordered error components e_ij = x_i - x_j. Entries are grouped by owner i
/// ascending, then neighbor j ascending.
struct EdgeLedger {
  std::vector<std::pair<int, int>> entries;
  /// offsets[i] is the first entry owned by agent i; offsets[N] == size().
  std::vector<int> offsets;
  int state_dim = 0;

  int size() const { return static_cast<int>(entries.size()); }
  int dimension() const { return state_dim * size(); }
  int owned_count(int agent) const { return offsets[agent + 1] - offsets[agent]; }

  /// e(k) for the given per-agent states.
  Vector stack_errors(std::span<const Vector> states) const;
};

EdgeLedger build_ledger(const DirectedGraph& g, int state_dim);

/// e(k+1) = Ã e(k) + Σ_i B̄_i u_i(k),  𝒴_i(k) = H_i e(k).
struct GlobalErrorSystem {
  Matrix A_tilde;
  std::vector<Matrix> B_bar_list;
  Matrix B_bar;
  std::vector<Matrix> H_list;
  Matrix Q;
  Matrix Q_tilde;
  std::vector<Matrix> R_list;
  Matrix R_blk;
  EdgeLedger ledger;
  std::vector<int> input_dims;
  std::vector<std::string> warnings;

  int num_agents() const { return static_cast<int>(B_bar_list.size()); }
  int dimension() const { return static_cast<int>(A_tilde.rows()); }
};

/// X(k+1) = Ã X(k) + Σ_i B̃_i u_i(k),  Y_i(k) = C_i X(k).
struct GlobalStateSystem {
  Matrix A_tilde;
  Matrix B_tilde;
  std::vector<Matrix> B_tilde_list;
  std::vector<Matrix> C_list;
  Matrix Q_cal;
  std::vector<Matrix> R_list;
  Matrix R_blk;
  EdgeLedger ledger;
  std::vector<int> input_dims;
  std::vector<std::string> warnings;

  int num_agents() const { return static_cast<int>(B_tilde_list.size()); }
  int dimension() const { return static_cast<int>(A_tilde.rows()); }
};

/// 0/I row selector picking the listed n-blocks out of `num_blocks`.
Matrix block_selector(std::span<const int> blocks, int num_blocks, int block_size);

/// Builds the stacked error system. Without a measurement plan agent i
/// measures its own δ_i block. Not strongly connected graphs are accepted
/// with a warning.
GlobalErrorSystem build_error_system(const AgentDynamics& dyn, const DirectedGraph& g,
                                     const CostWeights& w,
                                     std::optional<std::vector<Matrix>> measurement_plan = {});

/// Builds the stacked state system. Without a measurement plan agent i
/// measures its own state and the states of its in-neighbors.
GlobalStateSystem build_state_system(const AgentDynamics& dyn, const DirectedGraph& g,
                                     const CostWeights& w,
                                     std::optional<std::vector<Matrix>> measurement_plan = {});

/// 𝒬 with 𝒬_ii = (N-1)Q and 𝒬_ij = -Q.
Matrix complete_graph_weight(const Matrix& Q, int num_agents);

/// max_k |Σ_i Σ_{j∈𝒩_i} e_ijᵀQe_ij + Σ_i u_iᵀR_iu_i - (eᵀQ̃e + uᵀRu)|,
/// the left side evaluated block by block from the ledger.
double error_cost_equivalence_check(const GlobalErrorSystem& sys, std::span<const Vector> errors,
                                    std::span<const Vector> inputs);

}  // namespace optcon
