#include "optcon/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "optcon/linalg.hpp"
#include "optcon/riccati.hpp"

namespace optcon {

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 5> kMethodNames{{
    {Method::kDistributedError, "distributed_error"},
    {Method::kDistributedState, "distributed_state"},
    {Method::kCentralizedError, "centralized_error"},
    {Method::kCentralizedState, "centralized_state"},
    {Method::kTraditional, "traditional"},
}};

void check_config(const AgentDynamics& dyn, const SimulationConfig& cfg, Method expected) {
  if (cfg.method != expected) {
    throw InvalidArgument("simulation: config method is " + std::string(method_name(cfg.method)) +
                          ", expected " + std::string(method_name(expected)));
  }
  if (cfg.horizon < 1) throw InvalidArgument("simulation: horizon must be >= 1");
  if (static_cast<int>(cfg.x0.size()) != dyn.num_agents()) {
    std::ostringstream os;
    os << "simulation: x0 has " << cfg.x0.size() << " agents, expected " << dyn.num_agents();
    throw DimensionError(os.str());
  }
  for (const auto& x : cfg.x0) {
    if (x.size() != dyn.state_dim()) throw DimensionError("simulation: x0 entry has wrong length");
  }
}

std::vector<Vector> initial_observers(const SimulationConfig& cfg, const Vector& truth,
                                      int num_agents) {
  switch (cfg.observer_start) {
    case ObserverStart::kZero:
      return std::vector<Vector>(num_agents, Vector::Zero(truth.size()));
    case ObserverStart::kTruth:
      return std::vector<Vector>(num_agents, truth);
    case ObserverStart::kGiven:
      break;
  }
  if (static_cast<int>(cfg.observer_init.size()) != num_agents) {
    throw DimensionError("simulation: observer_init needs one vector per agent");
  }
  for (const auto& v : cfg.observer_init) {
    if (v.size() != truth.size()) {
      std::ostringstream os;
      os << "simulation: observer_init entry has length " << v.size() << ", expected "
         << truth.size();
      throw DimensionError(os.str());
    }
  }
  return cfg.observer_init;
}

Vector stack(std::span<const Vector> parts) {
  Eigen::Index total = 0;
  for (const auto& p : parts) total += p.size();
  Vector out(total);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.segment(off, p.size()) = p;
    off += p.size();
  }
  return out;
}

std::vector<Vector> split(const Vector& v, std::span<const int> dims) {
  std::vector<Vector> out;
  Eigen::Index off = 0;
  for (int d : dims) {
    out.push_back(v.segment(off, d));
    off += d;
  }
  return out;
}

void propagate(const AgentDynamics& dyn, std::vector<Vector>& x, const std::vector<Vector>& u) {
  for (int i = 0; i < dyn.num_agents(); ++i) x[i] = dyn.A * x[i] + dyn.B[i] * u[i];
}

double input_cost(std::span<const Matrix> R, const std::vector<Vector>& u) {
  double c = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) c += u[i].dot(R[i] * u[i]);
  return c;
}

void check_blocks(std::span<const Matrix> K, std::span<const int> dims, Eigen::Index cols,
                  const char* what) {
  if (K.size() != dims.size()) throw DimensionError(std::string(what) + ": wrong number of gain blocks");
  for (std::size_t i = 0; i < K.size(); ++i) {
    if (K[i].rows() != dims[i] || K[i].cols() != cols) {
      std::ostringstream os;
      os << what << ": gain block " << i << " is " << K[i].rows() << "x" << K[i].cols()
         << ", expected " << dims[i] << "x" << cols;
      throw DimensionError(os.str());
    }
  }
}

// Shared rollout for the two observer designs. `z` is the vector being
// estimated (e or X), `Bs` the per-agent input matrices acting on it, `meas`
// the measurement selectors.
template <typename StackFn, typename StageFn>
Trajectory observer_rollout(const AgentDynamics& dyn, const Matrix& A_tilde,
                            std::span<const Matrix> Bs, std::span<const Matrix> K,
                            std::span<const Matrix> meas, const ObserverGains& gains,
                            const SimulationConfig& cfg, const EdgeLedger& ledger, StackFn z_of,
                            StageFn stage) {
  const int N = dyn.num_agents();
  if (static_cast<int>(gains.gains.size()) != N) {
    throw DimensionError("simulation: need one observer gain per agent");
  }
  for (int i = 0; i < N; ++i) {
    if (gains.gains[i].rows() != A_tilde.rows() || gains.gains[i].cols() != meas[i].rows()) {
      throw DimensionError("simulation: observer gain shape mismatch");
    }
  }
  Trajectory tr;
  tr.method = cfg.method;
  std::vector<Vector> x = cfg.x0;
  std::vector<Vector> zh = initial_observers(cfg, z_of(x), N);
  for (int k = 0; k <= cfg.horizon; ++k) {
    const Vector z = z_of(x);
    std::vector<Vector> u(N);
    for (int i = 0; i < N; ++i) u[i] = K[i] * zh[i];
    Vector err(static_cast<Eigen::Index>(N) * z.size());
    for (int i = 0; i < N; ++i) err.segment(i * z.size(), z.size()) = z - zh[i];

    tr.states.push_back(x);
    tr.inputs.push_back(u);
    tr.observer_states.push_back(zh);
    tr.error_vector.push_back(ledger.stack_errors(x));
    tr.observer_error.push_back(std::move(err));
    tr.cost_increments.push_back(stage(z, u));
    if (k == cfg.horizon) break;

    std::vector<Vector> next(N);
    for (int i = 0; i < N; ++i) {
      // Own input is known; every other agent is modeled as K_j applied to this agent's estimate.
      Vector v = A_tilde * zh[i];
      for (int j = 0; j < N; ++j) v += Bs[j] * (j == i ? u[i] : Vector(K[j] * zh[i]));
      if (meas[i].rows() > 0) v += gains.gains[i] * (meas[i] * (z - zh[i]));
      next[i] = std::move(v);
    }
    propagate(dyn, x, u);
    zh = std::move(next);
  }
  return tr;
}

template <typename StackFn, typename StageFn>
Trajectory centralized_rollout(const AgentDynamics& dyn, const Matrix& K,
                               std::span<const int> input_dims, const SimulationConfig& cfg,
                               const EdgeLedger& ledger, StackFn z_of, StageFn stage) {
  Trajectory tr;
  tr.method = cfg.method;
  std::vector<Vector> x = cfg.x0;
  for (int k = 0; k <= cfg.horizon; ++k) {
    const Vector z = z_of(x);
    const std::vector<Vector> u = split(K * z, input_dims);
    tr.states.push_back(x);
    tr.inputs.push_back(u);
    tr.error_vector.push_back(ledger.stack_errors(x));
    tr.cost_increments.push_back(stage(z, u));
    if (k == cfg.horizon) break;
    propagate(dyn, x, u);
  }
  return tr;
}

}  // namespace

std::string_view method_name(Method m) {
  for (const auto& [method, name] : kMethodNames) {
    if (method == m) return name;
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (const auto& [method, n] : kMethodNames) {
    if (n == name) return method;
  }
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

bool uses_observers(Method m) {
  return m == Method::kDistributedError || m == Method::kDistributedState;
}

Vector Trajectory::stacked_state(int k) const { return stack(states.at(k)); }
Vector Trajectory::stacked_input(int k) const { return stack(inputs.at(k)); }

Trajectory simulate_distributed_error(const AgentDynamics& dyn, const GlobalErrorSystem& sys,
                                      std::span<const Matrix> Ke_blocks,
                                      const ObserverGains& gains, const SimulationConfig& cfg) {
  check_config(dyn, cfg, Method::kDistributedError);
  check_blocks(Ke_blocks, sys.input_dims, sys.dimension(), "simulate_distributed_error");
  if (gains.form != GainForm::kError) throw InvalidArgument("simulate_distributed_error: need Υ gains");
  auto z_of = [&](const std::vector<Vector>& x) { return sys.ledger.stack_errors(x); };
  auto stage = [&](const Vector& e, const std::vector<Vector>& u) {
    return e.dot(sys.Q_tilde * e) + input_cost(sys.R_list, u);
  };
  return observer_rollout(dyn, sys.A_tilde, sys.B_bar_list, Ke_blocks, sys.H_list, gains, cfg,
                          sys.ledger, z_of, stage);
}

Trajectory simulate_distributed_state(const AgentDynamics& dyn, const GlobalStateSystem& sys,
                                      std::span<const Matrix> K_blocks,
                                      const ObserverGains& gains, const SimulationConfig& cfg) {
  check_config(dyn, cfg, Method::kDistributedState);
  check_blocks(K_blocks, sys.input_dims, sys.dimension(), "simulate_distributed_state");
  if (gains.form != GainForm::kState) throw InvalidArgument("simulate_distributed_state: need L gains");
  auto z_of = [](const std::vector<Vector>& x) { return stack(x); };
  auto stage = [&](const Vector& X, const std::vector<Vector>& u) {
    return X.dot(sys.Q_cal * X) + input_cost(sys.R_list, u);
  };
  return observer_rollout(dyn, sys.A_tilde, sys.B_tilde_list, K_blocks, sys.C_list, gains, cfg,
                          sys.ledger, z_of, stage);
}

Trajectory simulate_centralized(const AgentDynamics& dyn, const GlobalErrorSystem& sys,
                                const Matrix& Ke, const SimulationConfig& cfg) {
  check_config(dyn, cfg, Method::kCentralizedError);
  linalg::require_shape(Ke, sys.R_blk.rows(), sys.dimension(), "K_e");
  auto z_of = [&](const std::vector<Vector>& x) { return sys.ledger.stack_errors(x); };
  auto stage = [&](const Vector& e, const std::vector<Vector>& u) {
    return e.dot(sys.Q_tilde * e) + input_cost(sys.R_list, u);
  };
  return centralized_rollout(dyn, Ke, sys.input_dims, cfg, sys.ledger, z_of, stage);
}

Trajectory simulate_centralized(const AgentDynamics& dyn, const GlobalStateSystem& sys,
                                const Matrix& K, const SimulationConfig& cfg) {
  check_config(dyn, cfg, Method::kCentralizedState);
  linalg::require_shape(K, sys.R_blk.rows(), sys.dimension(), "K");
  auto z_of = [](const std::vector<Vector>& x) { return stack(x); };
  auto stage = [&](const Vector& X, const std::vector<Vector>& u) {
    return X.dot(sys.Q_cal * X) + input_cost(sys.R_list, u);
  };
  return centralized_rollout(dyn, K, sys.input_dims, cfg, sys.ledger, z_of, stage);
}

Trajectory simulate_traditional(const AgentDynamics& dyn, const DirectedGraph& g, const Matrix& F,
                                const CostWeights& w, const SimulationConfig& cfg) {
  dyn.validate();
  if (!dyn.homogeneous()) {
    throw InvalidArgument("traditional protocol needs identical agents (heterogeneous B_i given)");
  }
  check_config(dyn, cfg, Method::kTraditional);
  if (g.size() != dyn.num_agents()) throw DimensionError("simulate_traditional: graph size");
  linalg::require_shape(F, dyn.input_dim(0), dyn.state_dim(), "F");
  w.validate(dyn);
  const int N = dyn.num_agents();
  const int n = dyn.state_dim();
  const EdgeLedger ledger = build_ledger(g, n);

  Trajectory tr;
  tr.method = cfg.method;
  std::vector<Vector> x = cfg.x0;
  for (int k = 0; k <= cfg.horizon; ++k) {
    std::vector<Vector> u(N);
    for (int i = 0; i < N; ++i) {
      Vector s = Vector::Zero(n);
      for (int j = 0; j < N; ++j) {
        if (g.weight(i, j) != 0.0) s += g.weight(i, j) * (x[j] - x[i]);
      }
      u[i] = F * s;
    }
    const Vector e = ledger.stack_errors(x);
    double c = input_cost(w.R, u);
    for (int r = 0; r < ledger.size(); ++r) {
      const auto eij = e.segment(r * n, n);
      c += eij.dot(w.Q * eij);
    }
    tr.states.push_back(x);
    tr.inputs.push_back(u);
    tr.error_vector.push_back(e);
    tr.cost_increments.push_back(c);
    if (k == cfg.horizon) break;
    propagate(dyn, x, u);
  }
  return tr;
}

Matrix baseline_gain(const AgentDynamics& dyn, const DirectedGraph& g, const Matrix& Q,
                     const Matrix& R0) {
  dyn.validate();
  if (!dyn.homogeneous()) {
    throw InvalidArgument("baseline gain needs identical agents (heterogeneous B_i given)");
  }
  // Laplacian of the undirected graph (𝒜 + 𝒜ᵀ)/2.
  const Matrix sym = 0.5 * (g.weights() + g.weights().transpose());
  Matrix L = -sym;
  L.diagonal() = sym.rowwise().sum();
  Eigen::SelfAdjointEigenSolver<Matrix> es(L, Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();
  const double lam2 = ev(1);
  const double lamN = ev(ev.size() - 1);
  if (lam2 <= 1e-12) {
    throw InvalidArgument("baseline gain: symmetrized Laplacian has λ_2 = 0 (graph disconnected)");
  }
  const DareProblem p{dyn.A, dyn.B[0], Q, R0};
  const DareSolution sol = solve_dare(p);
  return -(2.0 / (lam2 + lamN)) * sol.gain;
}

double traditional_consensus_radius(const AgentDynamics& dyn, const DirectedGraph& g,
                                    const Matrix& F) {
  if (!dyn.homogeneous()) throw InvalidArgument("traditional protocol needs identical agents");
  const auto spectrum = laplacian_spectrum(build_laplacian(g));
  const Eigen::MatrixXcd A = dyn.A.cast<std::complex<double>>();
  const Eigen::MatrixXcd BF = (dyn.B[0] * F).cast<std::complex<double>>();
  double worst = 0.0;
  for (const auto& lam : spectrum) {
    if (std::abs(lam) <= 1e-9) continue;
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> ces(A - lam * BF, false);
    worst = std::max(worst, ces.eigenvalues().cwiseAbs().maxCoeff());
  }
  return worst;
}

ConsensusMetrics consensus_metrics(const Trajectory& traj, double threshold) {
  if (!(threshold > 0.0)) throw InvalidArgument("consensus_metrics: threshold must be positive");
  ConsensusMetrics m;
  const int N = traj.num_agents();
  for (const auto& xs : traj.states) {
    double worst = 0.0;
    for (int i = 0; i < N; ++i) {
      for (int j = i + 1; j < N; ++j) worst = std::max(worst, (xs[i] - xs[j]).norm());
    }
    m.max_pairwise_error.push_back(worst);
    std::vector<double> norms;
    for (const auto& x : xs) norms.push_back(x.norm());
    m.state_norms.push_back(std::move(norms));
  }
  int k = static_cast<int>(m.max_pairwise_error.size());
  while (k > 0 && m.max_pairwise_error[k - 1] <= threshold) --k;
  if (k < static_cast<int>(m.max_pairwise_error.size())) m.settling_step = k + 1;
  return m;
}

}  // namespace optcon
