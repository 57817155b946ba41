#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "optcon/system_builder.hpp"
#include "optcon/types.hpp"

namespace optcon {

enum class GainForm {
  /// Υ_i acting on the stacked error vector, shape dim(e) x rows(H_i).
  kError,
  /// L_i acting on the stacked state, shape Nn x rows(C_i).
  kState,
};

struct ObserverGains {
  GainForm form = GainForm::kError;
  std::vector<Matrix> gains;
};

struct GainShape {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

using GainAssembler = std::function<Matrix(const ObserverGains&)>;

/// Observer-error matrix of the error-feedback design. Block (i,i) is
/// Θ_i = Ã + B̄K_e - B̄_iK_ei - Υ_iH_i, block (i,j) is -B̄_jK_ej.
Matrix assemble_A_ec(const GlobalErrorSystem& sys, std::span<const Matrix> Ke_blocks,
                     const ObserverGains& gains);

/// Observer-error matrix of the state-feedback design. Block (i,i) is
/// W_i = Ã + B̃K - B̃_iK_i - L_iC_i, block (i,j) is -B̃_jK_j.
Matrix assemble_A_c(const GlobalStateSystem& sys, std::span<const Matrix> K_blocks,
                    const ObserverGains& gains);

/// [[-ρI, Aᵀ], [A, -I]] ⪯ 0, decided through its Schur complement
/// σ_max(A)² <= ρ.
bool lmi_feasible(const Matrix& A_ec, double rho);

std::vector<GainShape> error_gain_shapes(const GlobalErrorSystem& sys);
std::vector<GainShape> state_gain_shapes(const GlobalStateSystem& sys);
ObserverGains zero_gains(GainForm form, std::span<const GainShape> shapes);

/// Per-block deadbeat heuristic: Υ_i = Θ_i⁰ H_i⁺ cancels the measured part
/// of each diagonal block (Θ_i⁰ is the block with zero gain).
ObserverGains deadbeat_gains(const GlobalErrorSystem& sys, std::span<const Matrix> Ke_blocks);
ObserverGains deadbeat_gains(const GlobalStateSystem& sys, std::span<const Matrix> K_blocks);

/// M(θ) = M₀ + Σ_k θ_k D_k, recovered by probing an affine assembler at zero
/// and at every unit gain entry.
class AffineGainMap {
 public:
  static AffineGainMap probe(const GainAssembler& assembler, GainForm form,
                             std::vector<GainShape> shapes);

  Eigen::Index num_params() const { return basis_.cols(); }
  Eigen::Index rows() const { return offset_.rows(); }
  Eigen::Index cols() const { return offset_.cols(); }

  Matrix evaluate(const Vector& params) const;
  /// ∇_θ ⟨G, M(θ)⟩ (Frobenius pairing), i.e. the adjoint of the linear part.
  Vector adjoint(const Matrix& G) const;

  Vector pack(const ObserverGains& gains) const;
  ObserverGains unpack(const Vector& params) const;

 private:
  GainForm form_ = GainForm::kError;
  std::vector<GainShape> shapes_;
  Matrix offset_;
  Matrix basis_;  // column k = vec(D_k), column-major
};

enum class SearchDirection {
  /// BFGS on the nonsmooth objective with a weak-Wolfe bisection line search.
  kQuasiNewton,
  /// Plain (averaged) subgradient with Armijo halving.
  kSubgradient,
};

struct SynthesisOptions {
  int max_iters = 5000;
  double tol = 1e-6;
  int patience = 50;
  /// Seeds the random probe used to confirm the assembler is affine.
  std::uint64_t seed = 0;
  SearchDirection direction = SearchDirection::kQuasiNewton;
};

struct SynthesisReport {
  /// σ_max of the assembled matrix at the returned gains.
  double rho_star = 0.0;
  /// ρ of the assembled matrix at the returned gains.
  double spectral_radius = 0.0;
  int iterations = 0;
  bool converged = false;
  bool stable = false;
  /// Best σ_max after each iteration (entry 0 is the initial value).
  std::vector<double> history;
  std::string stop_reason;
};

struct SynthesisResult {
  ObserverGains gains;
  SynthesisReport report;
};

/// Raised when max_iters runs out; carries the best gains found so far.
class SynthesisNonConvergence : public NonConvergence {
 public:
  explicit SynthesisNonConvergence(SynthesisResult best);
  const SynthesisResult& best() const { return best_; }

 private:
  SynthesisResult best_;
};

/// Minimizes σ_max(assembler(gains)), the convex spectral-norm bound that the
/// LMI [[-ρI, Aᵀ],[A, -I]] ⪯ 0 encodes.
SynthesisResult minimize_spectral_norm(const GainAssembler& assembler, const ObserverGains& init,
                                       const SynthesisOptions& opts = {});

SynthesisResult synthesize_error_observers(const GlobalErrorSystem& sys,
                                           std::span<const Matrix> Ke_blocks,
                                           const SynthesisOptions& opts = {});
SynthesisResult synthesize_state_observers(const GlobalStateSystem& sys,
                                           std::span<const Matrix> K_blocks,
                                           const SynthesisOptions& opts = {});

}  // namespace optcon
