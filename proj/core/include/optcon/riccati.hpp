#pragma once

#include <span>
#include <vector>

#include "optcon/types.hpp"

namespace optcon {

/// P = AᵀPA + Q - AᵀPB(R + BᵀPB)⁻¹BᵀPA with Q >= 0, R > 0.
struct DareProblem {
  Matrix A;
  Matrix B;
  Matrix Q;
  Matrix R;

  void validate() const;
};

enum class DareMethod {
  /// P_{k+1} = f(P_k) from P_0 = Q, symmetrized every step.
  kValueIteration,
  /// Structure-preserving doubling; squares the value-iteration step count.
  kDoubling,
};

struct DareOptions {
  double tol = 1e-10;
  int max_iter = 50000;
  DareMethod method = DareMethod::kValueIteration;
};

struct DareSolution {
  Matrix P;
  /// ‖P - f(P)‖_F of the returned P.
  double residual = 0.0;
  int iterations = 0;
  /// K = -(R + BᵀPB)⁻¹BᵀPA.
  Matrix gain;
  double min_eigenvalue = 0.0;
  /// P ≻ 0 (min eigenvalue above 1e-9 relative to ‖P‖). Only then does the
  /// closed loop A + BK carry a stability guarantee.
  bool positive_definite = false;
  /// Fixed-point residual per value-iteration step (empty for doubling).
  std::vector<double> residual_history;
};

/// Raised when an iterate loses symmetry/definiteness beyond repair.
class IndefiniteIterate : public Error {
 public:
  using Error::Error;
};

/// Right-hand side f(P) of the Riccati equation.
Matrix riccati_map(const DareProblem& p, const Matrix& P);

/// ‖P - f(P)‖_F.
double dare_residual(const DareProblem& p, const Matrix& P);

/// Throws NonConvergence (iteration count and last residual attached) when
/// max_iter is reached before the residual drops below tol.
DareSolution solve_dare(const DareProblem& p, const DareOptions& opts = {});

/// K = -(R + BᵀPB)⁻¹BᵀPA via Cholesky, pivoted LU as fallback. Throws if the
/// condition number of R + BᵀPB exceeds 1e12.
Matrix feedback_gain(const DareProblem& p, const Matrix& P);

/// Rows Σ_{l<agent} m_l ... of K belonging to `agent` (the K_ei / K_i block).
Matrix slice_agent_gain(const Matrix& K, int agent, std::span<const int> input_dims);

/// All per-agent row blocks of K, in agent order.
std::vector<Matrix> slice_all_gains(const Matrix& K, std::span<const int> input_dims);

/// max |λ(M)|.
double spectral_radius(const Matrix& m);

}  // namespace optcon
