#include "optcon/cost_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "optcon/linalg.hpp"

namespace optcon {

namespace {

constexpr int kTailSteps = 10;
constexpr double kTailTol = 1e-14;

CostDiffMatrices build_mats(const Matrix& A_tilde, std::span<const Matrix> B_list,
                            std::span<const Matrix> R_list, const Matrix& P,
                            std::span<const Matrix> K) {
  const Eigen::Index d = A_tilde.rows();
  const std::size_t N = B_list.size();
  if (K.size() != N) throw DimensionError("cost_difference_matrices: wrong number of gain blocks");
  linalg::require_shape(P, d, d, "P");
  CostDiffMatrices m;
  m.Omega.resize(d, d * N);
  m.Omega1.resize(d, d * N);
  std::vector<Matrix> krk(N);
  Matrix closed = A_tilde;
  for (std::size_t i = 0; i < N; ++i) {
    if (K[i].rows() != B_list[i].cols() || K[i].cols() != d) {
      std::ostringstream os;
      os << "cost_difference_matrices: gain block " << i << " is " << K[i].rows() << "x"
         << K[i].cols() << ", expected " << B_list[i].cols() << "x" << d;
      throw DimensionError(os.str());
    }
    const Matrix BK = B_list[i] * K[i];
    closed += BK;
    m.Omega.middleCols(i * d, d) = -BK;
    krk[i] = K[i].transpose() * R_list[i] * K[i];
    m.Omega1.middleCols(i * d, d) = krk[i];
  }
  m.Omega2 = m.Omega.transpose() * P * m.Omega;
  m.M1 = closed.transpose() * P * m.Omega - m.Omega1;
  m.M2 = linalg::block_diagonal(krk) + m.Omega2;
  m.M2 = 0.5 * (m.M2 + m.M2.transpose());
  return m;
}

const Vector& tracked(const Trajectory& traj, int k, Vector& scratch) {
  if (traj.method == Method::kDistributedError || traj.method == Method::kCentralizedError ||
      traj.method == Method::kTraditional) {
    return traj.error_vector.at(k);
  }
  scratch = traj.stacked_state(k);
  return scratch;
}

}  // namespace

CostEvaluation sum_stage_costs(std::span<const double> stages, int s) {
  const int n = static_cast<int>(stages.size());
  if (s < 0 || s >= n) throw InvalidArgument("cost: start step outside the recorded trajectory");
  CostEvaluation out;
  for (int k = s; k < n; ++k) out.value += stages[k];
  const double tol = kTailTol * (1.0 + std::abs(out.value));
  for (int k = std::max(0, n - kTailSteps); k < n; ++k) {
    if (!(std::abs(stages[k]) <= tol)) {
      std::ostringstream os;
      os << "cost: stage cost " << stages[n - 1] << " at the horizon has not decayed";
      throw TailNotConverged(os.str(), stages[n - 1]);
    }
  }
  if (n - s < kTailSteps) {
    throw TailNotConverged("cost: fewer than 10 recorded steps after the start", stages[n - 1]);
  }
  // Tail beyond the horizon bounded with the worst observed ratio in the
  // last window (capped below 1).
  double ratio = 0.0;
  for (int k = n - kTailSteps + 1; k < n; ++k) {
    if (stages[k - 1] != 0.0) ratio = std::max(ratio, std::abs(stages[k] / stages[k - 1]));
  }
  ratio = std::min(ratio, 0.999);
  out.truncation_bound = std::abs(stages[n - 1]) * ratio / (1.0 - ratio);
  return out;
}

CostEvaluation evaluate_cost(const Trajectory& traj, int s) {
  return sum_stage_costs(traj.cost_increments, s);
}

CostEvaluation evaluate_cost(const Trajectory& traj, const GlobalErrorSystem& sys, int s,
                             CostForm form) {
  if (form == CostForm::kRecorded) return evaluate_cost(traj, s);
  const int n = sys.ledger.state_dim;
  std::vector<double> stages;
  stages.reserve(traj.error_vector.size());
  for (int k = 0; k <= traj.horizon(); ++k) {
    const Vector& e = traj.error_vector[k];
    if (e.size() != sys.dimension()) throw DimensionError("evaluate_cost: trajectory/system mismatch");
    double c = 0.0;
    if (form == CostForm::kPairwise) {
      for (int r = 0; r < sys.ledger.size(); ++r) {
        const auto eij = e.segment(r * n, n);
        c += eij.dot(sys.Q * eij);
      }
      for (int i = 0; i < sys.num_agents(); ++i) {
        const Vector& ui = traj.inputs[k][i];
        c += ui.dot(sys.R_list[i] * ui);
      }
    } else {
      const Vector u = traj.stacked_input(k);
      c = e.dot(sys.Q_tilde * e) + u.dot(sys.R_blk * u);
    }
    stages.push_back(c);
  }
  return sum_stage_costs(stages, s);
}

Matrix CostDiffMatrices::joint() const {
  const Eigen::Index d = M1.rows();
  const Eigen::Index D = M1.cols();
  Matrix out = Matrix::Zero(d + D, d + D);
  out.topRightCorner(d, D) = M1;
  out.bottomLeftCorner(D, d) = M1.transpose();
  out.bottomRightCorner(D, D) = M2;
  return out;
}

CostDiffMatrices cost_difference_matrices(const GlobalErrorSystem& sys, const Matrix& P,
                                          std::span<const Matrix> K_blocks) {
  return build_mats(sys.A_tilde, sys.B_bar_list, sys.R_list, P, K_blocks);
}

CostDiffMatrices cost_difference_matrices(const GlobalStateSystem& sys, const Matrix& P,
                                          std::span<const Matrix> K_blocks) {
  return build_mats(sys.A_tilde, sys.B_tilde_list, sys.R_list, P, K_blocks);
}

std::vector<double> cost_gap_terms(const Trajectory& traj, const CostDiffMatrices& mats) {
  if (!uses_observers(traj.method)) {
    throw InvalidArgument("cost identity needs a distributed (observer-based) trajectory");
  }
  std::vector<double> out;
  out.reserve(traj.observer_error.size());
  Vector scratch;
  for (int k = 0; k <= traj.horizon(); ++k) {
    const Vector& z = tracked(traj, k, scratch);
    const Vector& zt = traj.observer_error[k];
    if (z.size() != mats.M1.rows() || zt.size() != mats.M1.cols()) {
      throw DimensionError("cost identity: trajectory does not match the cost matrices");
    }
    out.push_back(2.0 * z.dot(mats.M1 * zt) + zt.dot(mats.M2 * zt));
  }
  return out;
}

IdentityCheck verify_cost_identity(const Trajectory& traj, const Matrix& P,
                                   const CostDiffMatrices& mats, int s) {
  const std::vector<double> gap = cost_gap_terms(traj, mats);
  IdentityCheck c;
  c.J_simulated = evaluate_cost(traj, s).value;
  Vector scratch;
  const Vector& z = tracked(traj, s, scratch);
  double series = 0.0;
  for (std::size_t k = s; k < gap.size(); ++k) series += gap[k];
  c.J_predicted = z.dot(P * z) + series;
  c.residual = std::abs(c.J_simulated - c.J_predicted);
  return c;
}

DecayFit decay_certificate(std::span<const double> series) {
  if (series.size() < 6) throw InvalidArgument("decay_certificate: need ΔJ(s) for s = 0..S, S >= 5");
  double peak = 0.0;
  for (double v : series) peak = std::max(peak, std::abs(v));
  DecayFit fit;
  if (peak == 0.0) return fit;

  const double floor = 1e-12 * peak;
  std::vector<double> xs, ys;
  for (std::size_t s = 0; s < series.size(); ++s) {
    if (series[s] > floor) {
      xs.push_back(2.0 * static_cast<double>(s));
      ys.push_back(std::log(series[s]));
    }
  }
  if (xs.empty()) {
    // Only round-off left: treat as the all-zero case.
    for (double v : series) fit.max_violation = std::max(fit.max_violation, v);
    return fit;
  }
  double log_gamma = -std::numeric_limits<double>::infinity();
  if (xs.size() >= 2) {
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i] / n;
      my += ys[i] / n;
    }
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    log_gamma = sxy / sxx;
  }
  fit.gamma = std::exp(log_gamma);
  // Envelope: smallest ā with ΔJ(s) <= ā γ^{2s} on the fitted points.
  double log_a = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    log_a = std::max(log_a, ys[i] - (xs.size() >= 2 ? xs[i] * log_gamma : 0.0));
  }
  fit.a_bar = std::exp(log_a);
  fit.max_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double env = (fit.gamma == 0.0 && s > 0)
                           ? 0.0
                           : fit.a_bar * std::pow(fit.gamma, 2.0 * static_cast<double>(s));
    fit.max_violation = std::max(fit.max_violation, series[s] - env);
  }
  return fit;
}

CostBreakdown cost_breakdown(const Trajectory& traj, const Matrix& P, const CostDiffMatrices& mats,
                             int max_s) {
  if (max_s < 0 || max_s > traj.horizon()) throw InvalidArgument("cost_breakdown: max_s out of range");
  const std::vector<double> gap = cost_gap_terms(traj, mats);
  CostBreakdown b;
  const CostEvaluation J0 = evaluate_cost(traj, 0);
  b.truncation_bound = J0.truncation_bound;

  std::vector<double> tail(gap.size() + 1, 0.0);
  for (int k = static_cast<int>(gap.size()) - 1; k >= 0; --k) tail[k] = tail[k + 1] + gap[k];
  std::vector<double> stage_tail(traj.cost_increments.size() + 1, 0.0);
  for (int k = static_cast<int>(traj.cost_increments.size()) - 1; k >= 0; --k) {
    stage_tail[k] = stage_tail[k + 1] + traj.cost_increments[k];
  }

  Vector scratch;
  for (int s = 0; s <= max_s; ++s) {
    const Vector& z = tracked(traj, s, scratch);
    const double central = z.dot(P * z);
    const double J = stage_tail[s];
    b.series.push_back(tail[s]);
    b.series_direct.push_back(J - central);
    b.identity_residuals.push_back(std::abs(J - (central + tail[s])));
    if (s == 0) {
      b.J_star_distributed = J;
      b.J_star_centralized = central;
    }
    const double tol = 1e-6 * (1.0 + std::abs(J));
    if (std::abs(b.series[s] - b.series_direct[s]) > tol) {
      std::ostringstream os;
      os << "cost cross-check failed at s=" << s << ": series " << b.series[s] << " vs direct "
         << b.series_direct[s];
      throw Error(os.str());
    }
  }
  b.delta_J = b.series.front();
  if (b.series.size() >= 6) b.decay = decay_certificate(b.series);
  return b;
}

}  // namespace optcon
