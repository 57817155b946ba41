#pragma once

#include <span>
#include <vector>

#include "optcon/simulator.hpp"
#include "optcon/system_builder.hpp"
#include "optcon/types.hpp"

namespace optcon {

struct CostEvaluation {
  double value = 0.0;
  /// Geometric estimate of the unrecorded tail beyond the horizon.
  double truncation_bound = 0.0;
};

enum class CostForm {
  /// Stage costs stored in the trajectory.
  kRecorded,
  /// Σ_i Σ_{j∈𝒩_i} e_ijᵀQe_ij + Σ_i u_iᵀR_iu_i, block by block.
  kPairwise,
  /// eᵀQ̃e + uᵀRu with the stacked matrices.
  kQuadratic,
};

/// Σ_{k=s}^{horizon} of the stage costs. The infinite sum counts as converged
/// once the last 10 recorded stage costs are each below 1e-14 (1 + J);
/// otherwise TailNotConverged is thrown.
CostEvaluation sum_stage_costs(std::span<const double> stages, int s);

CostEvaluation evaluate_cost(const Trajectory& traj, int s);
/// Recomputes the stage costs of an error-form trajectory in the given form.
CostEvaluation evaluate_cost(const Trajectory& traj, const GlobalErrorSystem& sys, int s,
                             CostForm form);

/// Ω = [-B_1K_1 ⋯ -B_NK_N], Ω₁ = [K_1ᵀR_1K_1 ⋯ K_NᵀR_NK_N], Ω₂ = ΩᵀPΩ,
/// M₁ = (Ã+BK)ᵀPΩ - Ω₁, M₂ = blkdiag(K_iᵀR_iK_i) + Ω₂. Same shapes for the
/// error form (B̄_i, K_ei, P_e) and the state form (B̃_i, K_i, P).
struct CostDiffMatrices {
  Matrix Omega;
  Matrix Omega1;
  Matrix Omega2;
  Matrix M1;
  Matrix M2;

  /// [[0, M₁], [M₁ᵀ, M₂]] acting on [z; z̃].
  Matrix joint() const;
};

CostDiffMatrices cost_difference_matrices(const GlobalErrorSystem& sys, const Matrix& P,
                                          std::span<const Matrix> K_blocks);
CostDiffMatrices cost_difference_matrices(const GlobalStateSystem& sys, const Matrix& P,
                                          std::span<const Matrix> K_blocks);

/// J(s) = z(s)ᵀPz(s) + Σ_{k>=s} [z;z̃]ᵀ joint [z;z̃], with z = e for the
/// error design and z = X for the state design.
struct IdentityCheck {
  double J_simulated = 0.0;
  double J_predicted = 0.0;
  double residual = 0.0;

  bool within_contract() const { return residual <= 1e-6 * (1.0 + std::abs(J_simulated)); }
};

/// Needs a distributed_error or distributed_state trajectory.
IdentityCheck verify_cost_identity(const Trajectory& traj, const Matrix& P,
                                   const CostDiffMatrices& mats, int s);

/// Per-step quadratic-form terms [z;z̃]ᵀ joint [z;z̃], k = 0..horizon.
std::vector<double> cost_gap_terms(const Trajectory& traj, const CostDiffMatrices& mats);

struct DecayFit {
  double a_bar = 0.0;
  double gamma = 0.0;
  /// max_s ΔJ(s) - ā γ^{2s}.
  double max_violation = 0.0;
};

/// Least-squares fit of log ΔJ(s) ≈ log ā + 2s log γ over the entries that are
/// clearly nonzero, then ā is raised to the envelope. An all-zero series
/// gives (0, 0, 0). Needs at least 6 entries.
DecayFit decay_certificate(std::span<const double> series);

struct CostBreakdown {
  double J_star_distributed = 0.0;
  double J_star_centralized = 0.0;
  double delta_J = 0.0;
  /// ΔJ(s) from the gap series, s = 0..S.
  std::vector<double> series;
  /// ΔJ(s) from subtracting the centralized optimum from the simulated cost.
  std::vector<double> series_direct;
  DecayFit decay;
  double truncation_bound = 0.0;
  std::vector<double> identity_residuals;
};

/// Both ΔJ computations are cross-checked; a disagreement beyond
/// 1e-6 (1 + J) raises Error.
CostBreakdown cost_breakdown(const Trajectory& traj, const Matrix& P, const CostDiffMatrices& mats,
                             int max_s);

}  // namespace optcon
