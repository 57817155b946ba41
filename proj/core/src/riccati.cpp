#include "optcon/riccati.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "optcon/linalg.hpp"

namespace optcon {

namespace {

constexpr double kMaxCondition = 1e12;

// Solves (R + BᵀPB) X = rhs.
Matrix solve_gain_system(const Matrix& S, const Matrix& rhs) {
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() == Eigen::Success) {
    if (llt.rcond() * kMaxCondition < 1.0) {
      throw InvalidArgument("feedback gain: R + BᵀPB condition number exceeds 1e12");
    }
    return llt.solve(rhs);
  }
  Eigen::FullPivLU<Matrix> lu(S);
  if (!lu.isInvertible() || lu.rcond() * kMaxCondition < 1.0) {
    throw InvalidArgument("feedback gain: R + BᵀPB is singular or ill-conditioned");
  }
  return lu.solve(rhs);
}

void finish(const DareProblem& p, DareSolution& sol) {
  sol.residual = dare_residual(p, sol.P);
  sol.gain = feedback_gain(p, sol.P);
  sol.min_eigenvalue = linalg::min_symmetric_eigenvalue(sol.P);
  const double scale = std::max(1.0, sol.P.cwiseAbs().maxCoeff());
  if (sol.min_eigenvalue < -1e-8 * scale) {
    throw IndefiniteIterate("solve_dare: solution is not positive semidefinite");
  }
  sol.positive_definite = sol.min_eigenvalue > 1e-9 * scale;
}

DareSolution value_iteration(const DareProblem& p, const DareOptions& opts) {
  DareSolution sol;
  Matrix P = p.Q;
  for (int k = 1; k <= opts.max_iter; ++k) {
    Matrix next = riccati_map(p, P);
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite()) {
      throw IndefiniteIterate("solve_dare: iterate became non-finite (is (A, B) stabilizable?)");
    }
    const double step = (next - P).norm();
    sol.residual_history.push_back(step);
    P = std::move(next);
    if (step <= opts.tol && dare_residual(p, P) <= opts.tol) {
      sol.P = std::move(P);
      sol.iterations = k;
      finish(p, sol);
      return sol;
    }
  }
  std::ostringstream os;
  os << "solve_dare: no convergence after " << opts.max_iter << " iterations (residual "
     << sol.residual_history.back() << ")";
  throw NonConvergence(os.str(), opts.max_iter, sol.residual_history.back());
}

// Structure-preserving doubling: A_{k+1} = A_k(I + G_kH_k)⁻¹A_k,
// G_{k+1} = G_k + A_k(I + G_kH_k)⁻¹G_kA_kᵀ, H_{k+1} = H_k + A_kᵀH_k(I + G_kH_k)⁻¹A_k.
DareSolution doubling(const DareProblem& p, const DareOptions& opts) {
  const Eigen::Index n = p.A.rows();
  const Matrix I = Matrix::Identity(n, n);
  Matrix Ak = p.A;
  Matrix Gk = p.B * Eigen::LLT<Matrix>(p.R).solve(p.B.transpose());
  Matrix Hk = p.Q;
  double last = 0.0;
  for (int k = 1; k <= opts.max_iter; ++k) {
    Eigen::PartialPivLU<Matrix> W(I + Gk * Hk);
    const Matrix V1 = W.solve(Ak);
    const Matrix V2 = W.solve(Gk);
    Matrix Gn = Gk + Ak * V2 * Ak.transpose();
    Matrix Hn = Hk + V1.transpose() * Hk * Ak;
    Ak = Ak * V1;
    Gn = 0.5 * (Gn + Gn.transpose());
    Hn = 0.5 * (Hn + Hn.transpose());
    if (!Hn.allFinite()) throw IndefiniteIterate("solve_dare: doubling iterate became non-finite");
    last = (Hn - Hk).norm();
    Gk = std::move(Gn);
    Hk = std::move(Hn);
    if (last <= opts.tol * std::max(1.0, Hk.norm()) && dare_residual(p, Hk) <= opts.tol) {
      DareSolution sol;
      sol.P = std::move(Hk);
      sol.iterations = k;
      finish(p, sol);
      return sol;
    }
  }
  throw NonConvergence("solve_dare: doubling did not converge", opts.max_iter, last);
}

}  // namespace

void DareProblem::validate() const {
  const Eigen::Index n = A.rows();
  if (A.cols() != n) throw DimensionError("DARE: A must be square");
  if (B.rows() != n) throw DimensionError("DARE: B must have as many rows as A");
  linalg::require_shape(Q, n, n, "DARE Q");
  linalg::require_shape(R, B.cols(), B.cols(), "DARE R");
  if (!linalg::is_symmetric(Q) || linalg::min_symmetric_eigenvalue(Q) < -1e-10) {
    throw InvalidArgument("DARE: Q must be symmetric positive semidefinite");
  }
  if (!linalg::is_symmetric(R) || linalg::min_symmetric_eigenvalue(R) <= 0.0) {
    throw InvalidArgument("DARE: R must be symmetric positive definite");
  }
}

Matrix riccati_map(const DareProblem& p, const Matrix& P) {
  const Matrix PA = P * p.A;
  const Matrix BtP = p.B.transpose() * P;
  const Matrix S = p.R + BtP * p.B;
  const Matrix X = solve_gain_system(S, BtP * p.A);
  return p.A.transpose() * PA + p.Q - PA.transpose() * p.B * X;
}

double dare_residual(const DareProblem& p, const Matrix& P) {
  return (P - riccati_map(p, P)).norm();
}

DareSolution solve_dare(const DareProblem& p, const DareOptions& opts) {
  p.validate();
  if (!(opts.tol > 0.0)) throw InvalidArgument("solve_dare: tol must be positive");
  if (opts.max_iter < 1) throw InvalidArgument("solve_dare: max_iter must be positive");
  return opts.method == DareMethod::kDoubling ? doubling(p, opts) : value_iteration(p, opts);
}

Matrix feedback_gain(const DareProblem& p, const Matrix& P) {
  const Matrix BtP = p.B.transpose() * P;
  return -solve_gain_system(p.R + BtP * p.B, BtP * p.A);
}

Matrix slice_agent_gain(const Matrix& K, int agent, std::span<const int> input_dims) {
  if (agent < 0 || agent >= static_cast<int>(input_dims.size())) {
    throw InvalidArgument("slice_agent_gain: agent index out of range");
  }
  const int offset = std::accumulate(input_dims.begin(), input_dims.begin() + agent, 0);
  const int total = std::accumulate(input_dims.begin(), input_dims.end(), 0);
  if (total != K.rows()) throw DimensionError("slice_agent_gain: input dims do not sum to rows(K)");
  return K.middleRows(offset, input_dims[agent]);
}

std::vector<Matrix> slice_all_gains(const Matrix& K, std::span<const int> input_dims) {
  std::vector<Matrix> out;
  out.reserve(input_dims.size());
  for (int i = 0; i < static_cast<int>(input_dims.size()); ++i) {
    out.push_back(slice_agent_gain(K, i, input_dims));
  }
  return out;
}

double spectral_radius(const Matrix& m) { return linalg::spectral_radius(m); }

}  // namespace optcon
