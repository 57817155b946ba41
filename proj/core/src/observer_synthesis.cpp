#include "optcon/observer_synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "optcon/linalg.hpp"

namespace optcon {

namespace {

// Generic block assembly shared by both designs. closed = Ã + Σ_j B_jK_j.
Matrix observer_error_matrix(const Matrix& A_tilde, std::span<const Matrix> B_list,
                             std::span<const Matrix> K_blocks, std::span<const Matrix> meas,
                             const std::vector<Matrix>& gains, const char* what) {
  const Eigen::Index d = A_tilde.rows();
  const std::size_t N = B_list.size();
  if (K_blocks.size() != N || meas.size() != N || gains.size() != N) {
    std::ostringstream os;
    os << what << ": expected " << N << " gain, measurement and observer blocks";
    throw DimensionError(os.str());
  }
  std::vector<Matrix> BK(N);
  Matrix closed = A_tilde;
  for (std::size_t j = 0; j < N; ++j) {
    if (K_blocks[j].rows() != B_list[j].cols() || K_blocks[j].cols() != d) {
      std::ostringstream os;
      os << what << ": K block " << j << " is " << K_blocks[j].rows() << "x" << K_blocks[j].cols()
         << ", expected " << B_list[j].cols() << "x" << d;
      throw DimensionError(os.str());
    }
    BK[j] = B_list[j] * K_blocks[j];
    closed += BK[j];
  }
  Matrix out(d * N, d * N);
  for (std::size_t i = 0; i < N; ++i) {
    if (gains[i].rows() != d || gains[i].cols() != meas[i].rows()) {
      std::ostringstream os;
      os << what << ": observer gain " << i << " is " << gains[i].rows() << "x" << gains[i].cols()
         << ", expected " << d << "x" << meas[i].rows();
      throw DimensionError(os.str());
    }
    for (std::size_t j = 0; j < N; ++j) {
      auto blk = out.block(i * d, j * d, d, d);
      if (i == j) {
        blk = closed - BK[i];
        if (meas[i].rows() > 0) blk -= gains[i] * meas[i];
      } else {
        blk = -BK[j];
      }
    }
  }
  return out;
}

std::vector<GainShape> shapes_for(Eigen::Index d, std::span<const Matrix> meas) {
  std::vector<GainShape> out;
  out.reserve(meas.size());
  for (const auto& m : meas) out.push_back({d, m.rows()});
  return out;
}

std::vector<Matrix> deadbeat(const Matrix& A_tilde, std::span<const Matrix> B_list,
                             std::span<const Matrix> K_blocks, std::span<const Matrix> meas) {
  Matrix closed = A_tilde;
  for (std::size_t j = 0; j < B_list.size(); ++j) closed += B_list[j] * K_blocks[j];
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < B_list.size(); ++i) {
    if (meas[i].rows() == 0) {
      out.emplace_back(A_tilde.rows(), 0);
      continue;
    }
    const Matrix theta0 = closed - B_list[i] * K_blocks[i];
    out.push_back(theta0 * meas[i].completeOrthogonalDecomposition().pseudoInverse());
  }
  return out;
}

struct Eval {
  double f = 0.0;
  Vector g;
};

// σ_max and an averaged subgradient over the top singular cluster.
Eval evaluate(const AffineGainMap& map, const Vector& theta) {
  const Matrix M = map.evaluate(theta);
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  Eval out;
  out.f = s.size() ? s(0) : 0.0;
  if (!s.size()) {
    out.g = Vector::Zero(map.num_params());
    return out;
  }
  const double gap = 1e-8 * std::max(1.0, out.f);
  Eigen::Index r = 1;
  while (r < s.size() && s(0) - s(r) < gap) ++r;
  const Matrix G = svd.matrixU().leftCols(r) * svd.matrixV().leftCols(r).transpose() /
                   static_cast<double>(r);
  out.g = map.adjoint(G);
  return out;
}

bool improvement_stalled(const std::vector<double>& hist, const SynthesisOptions& o) {
  const auto n = static_cast<int>(hist.size());
  if (n <= o.patience) return false;
  const double then = hist[n - 1 - o.patience];
  return then - hist.back() <= o.tol * std::max(then, 1e-12);
}

}  // namespace

Matrix assemble_A_ec(const GlobalErrorSystem& sys, std::span<const Matrix> Ke_blocks,
                     const ObserverGains& gains) {
  return observer_error_matrix(sys.A_tilde, sys.B_bar_list, Ke_blocks, sys.H_list, gains.gains,
                               "assemble_A_ec");
}

Matrix assemble_A_c(const GlobalStateSystem& sys, std::span<const Matrix> K_blocks,
                    const ObserverGains& gains) {
  return observer_error_matrix(sys.A_tilde, sys.B_tilde_list, K_blocks, sys.C_list, gains.gains,
                               "assemble_A_c");
}

bool lmi_feasible(const Matrix& A_ec, double rho) {
  if (!(rho >= 0.0)) return false;
  const double s = linalg::sigma_max(A_ec);
  return s * s <= rho * (1.0 + 1e-12);
}

std::vector<GainShape> error_gain_shapes(const GlobalErrorSystem& sys) {
  return shapes_for(sys.dimension(), sys.H_list);
}

std::vector<GainShape> state_gain_shapes(const GlobalStateSystem& sys) {
  return shapes_for(sys.dimension(), sys.C_list);
}

ObserverGains zero_gains(GainForm form, std::span<const GainShape> shapes) {
  ObserverGains g{form, {}};
  for (const auto& s : shapes) g.gains.push_back(Matrix::Zero(s.rows, s.cols));
  return g;
}

ObserverGains deadbeat_gains(const GlobalErrorSystem& sys, std::span<const Matrix> Ke_blocks) {
  return {GainForm::kError, deadbeat(sys.A_tilde, sys.B_bar_list, Ke_blocks, sys.H_list)};
}

ObserverGains deadbeat_gains(const GlobalStateSystem& sys, std::span<const Matrix> K_blocks) {
  return {GainForm::kState, deadbeat(sys.A_tilde, sys.B_tilde_list, K_blocks, sys.C_list)};
}

AffineGainMap AffineGainMap::probe(const GainAssembler& assembler, GainForm form,
                                   std::vector<GainShape> shapes) {
  AffineGainMap map;
  map.form_ = form;
  map.shapes_ = std::move(shapes);
  ObserverGains g = zero_gains(form, map.shapes_);
  map.offset_ = assembler(g);
  Eigen::Index count = 0;
  for (const auto& s : map.shapes_) count += s.rows * s.cols;
  map.basis_.resize(map.offset_.size(), count);
  Eigen::Index k = 0;
  for (auto& m : g.gains) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r, ++k) {
        m(r, c) = 1.0;
        const Matrix probe = assembler(g);
        if (probe.rows() != map.offset_.rows() || probe.cols() != map.offset_.cols()) {
          throw DimensionError("AffineGainMap: assembler changed output shape");
        }
        map.basis_.col(k) = (probe - map.offset_).reshaped();
        m(r, c) = 0.0;
      }
    }
  }
  return map;
}

Matrix AffineGainMap::evaluate(const Vector& params) const {
  if (params.size() != num_params()) throw DimensionError("AffineGainMap: parameter length");
  Matrix out = offset_;
  if (num_params()) out.reshaped() += basis_ * params;
  return out;
}

Vector AffineGainMap::adjoint(const Matrix& G) const {
  if (G.rows() != rows() || G.cols() != cols()) throw DimensionError("AffineGainMap: adjoint shape");
  return basis_.transpose() * G.reshaped();
}

Vector AffineGainMap::pack(const ObserverGains& gains) const {
  if (gains.gains.size() != shapes_.size()) throw DimensionError("AffineGainMap: gain count");
  Vector out(num_params());
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < shapes_.size(); ++i) {
    linalg::require_shape(gains.gains[i], shapes_[i].rows, shapes_[i].cols, "observer gain");
    const Eigen::Index n = gains.gains[i].size();
    out.segment(k, n) = gains.gains[i].reshaped();
    k += n;
  }
  return out;
}

ObserverGains AffineGainMap::unpack(const Vector& params) const {
  ObserverGains g{form_, {}};
  Eigen::Index k = 0;
  for (const auto& s : shapes_) {
    const Eigen::Index n = s.rows * s.cols;
    g.gains.push_back(params.segment(k, n).reshaped(s.rows, s.cols));
    k += n;
  }
  return g;
}

SynthesisNonConvergence::SynthesisNonConvergence(SynthesisResult best)
    : NonConvergence("observer synthesis: iteration cap reached", best.report.iterations,
                     best.report.rho_star),
      best_(std::move(best)) {}

SynthesisResult minimize_spectral_norm(const GainAssembler& assembler, const ObserverGains& init,
                                       const SynthesisOptions& opts) {
  if (opts.max_iters < 1) throw InvalidArgument("synthesis: max_iters must be positive");
  if (!(opts.tol > 0.0)) throw InvalidArgument("synthesis: tol must be positive");
  if (opts.patience < 1) throw InvalidArgument("synthesis: patience must be positive");

  std::vector<GainShape> shapes;
  for (const auto& g : init.gains) shapes.push_back({g.rows(), g.cols()});
  const AffineGainMap map = AffineGainMap::probe(assembler, init.form, shapes);
  Vector theta = map.pack(init);
  const Eigen::Index n = map.num_params();

  // The probe is only exact for affine assemblers; check one random midpoint.
  if (n > 0) {
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> nd;
    Vector t1(n);
    for (Eigen::Index i = 0; i < n; ++i) t1(i) = nd(rng);
    const Matrix mid = assembler(map.unpack(0.5 * (theta + t1)));
    const Matrix lin = 0.5 * (assembler(map.unpack(theta)) + assembler(map.unpack(t1)));
    const double defect = (mid - lin).norm();
    if (defect > 1e-9 * std::max(1.0, lin.norm())) {
      throw InvalidArgument("synthesis: assembler is not affine in the observer gains");
    }
  }

  Eval cur = evaluate(map, theta);
  SynthesisResult res;
  res.report.history.push_back(cur.f);
  auto finalize = [&](bool converged, std::string reason, int iters) {
    res.gains = map.unpack(theta);
    const Matrix M = map.evaluate(theta);
    res.report.rho_star = cur.f;
    res.report.spectral_radius = linalg::spectral_radius(M);
    res.report.stable = res.report.spectral_radius < 1.0;
    res.report.iterations = iters;
    res.report.converged = converged;
    res.report.stop_reason = std::move(reason);
    return res;
  };
  if (n == 0) return finalize(true, "no free gain entries", 0);

  Matrix Hinv = Matrix::Identity(n, n);
  for (int it = 1; it <= opts.max_iters; ++it) {
    if (cur.g.norm() <= 1e-15 * std::max(1.0, cur.f)) {
      return finalize(true, "zero subgradient", it - 1);
    }
    bool moved = false;
    if (opts.direction == SearchDirection::kQuasiNewton) {
      Vector p = -Hinv * cur.g;
      double slope = cur.g.dot(p);
      if (!(slope < 0.0)) {
        Hinv.setIdentity();
        p = -cur.g;
        slope = -cur.g.squaredNorm();
      }
      // Weak Wolfe by bisection/expansion.
      constexpr double c1 = 1e-4, c2 = 0.9;
      double lo = 0.0, hi = std::numeric_limits<double>::infinity(), t = 1.0;
      Eval best_try;
      double best_t = 0.0;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        Eval e = evaluate(map, theta + t * p);
        if (e.f < cur.f && (best_t == 0.0 || e.f < best_try.f)) {
          best_try = e;
          best_t = t;
        }
        if (e.f > cur.f + c1 * t * slope) {
          hi = t;
        } else if (e.g.dot(p) < c2 * slope) {
          lo = t;
        } else {
          best_try = std::move(e);
          best_t = t;
          accepted = true;
          break;
        }
        t = std::isinf(hi) ? 2.0 * lo : 0.5 * (lo + hi);
      }
      if (best_t > 0.0) {
        const Vector s = best_t * p;
        const Vector y = best_try.g - cur.g;
        const double sy = s.dot(y);
        if (accepted && sy > 0.0) {
          const double rho = 1.0 / sy;
          const Matrix V = Matrix::Identity(n, n) - rho * s * y.transpose();
          Hinv = V * Hinv * V.transpose() + rho * s * s.transpose();
        } else if (!accepted) {
          Hinv.setIdentity();
        }
        theta += s;
        cur = std::move(best_try);
        moved = true;
      }
    } else {
      // Armijo halving along the negative averaged subgradient.
      double t = 1.0 / std::max(1.0, cur.g.norm());
      for (int ls = 0; ls < 40; ++ls) {
        Eval e = evaluate(map, theta - t * cur.g);
        if (e.f <= cur.f - 1e-4 * t * cur.g.squaredNorm()) {
          theta -= t * cur.g;
          cur = std::move(e);
          moved = true;
          break;
        }
        t *= 0.5;
      }
    }
    res.report.history.push_back(cur.f);
    if (!moved) return finalize(true, "line search found no descent", it);
    if (improvement_stalled(res.report.history, opts)) {
      return finalize(true, "relative improvement below tol over patience window", it);
    }
  }
  throw SynthesisNonConvergence(finalize(false, "iteration cap", opts.max_iters));
}

SynthesisResult synthesize_error_observers(const GlobalErrorSystem& sys,
                                           std::span<const Matrix> Ke_blocks,
                                           const SynthesisOptions& opts) {
  std::vector<Matrix> K(Ke_blocks.begin(), Ke_blocks.end());
  GainAssembler f = [&sys, K](const ObserverGains& g) { return assemble_A_ec(sys, K, g); };
  return minimize_spectral_norm(f, zero_gains(GainForm::kError, error_gain_shapes(sys)), opts);
}

SynthesisResult synthesize_state_observers(const GlobalStateSystem& sys,
                                           std::span<const Matrix> K_blocks,
                                           const SynthesisOptions& opts) {
  std::vector<Matrix> K(K_blocks.begin(), K_blocks.end());
  GainAssembler f = [&sys, K](const ObserverGains& g) { return assemble_A_c(sys, K, g); };
  return minimize_spectral_norm(f, zero_gains(GainForm::kState, state_gain_shapes(sys)), opts);
}

}  // namespace optcon
