#include "optcon/system_builder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "optcon/linalg.hpp"

namespace optcon {

namespace {

std::string indexed(const char* name, int i) {
  std::ostringstream os;
  os << name << "[" << i << "]";
  return os.str();
}

// Every row holds exactly one 1 and zeros elsewhere.
bool is_row_selector(const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    int ones = 0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        return false;
      }
    }
    if (ones != 1) return false;
  }
  return true;
}

std::vector<Matrix> checked_plan(std::vector<Matrix> plan, int num_agents, int cols,
                                 const char* name) {
  if (static_cast<int>(plan.size()) != num_agents) {
    std::ostringstream os;
    os << "measurement plan: expected " << num_agents << " " << name << " matrices, got "
       << plan.size();
    throw DimensionError(os.str());
  }
  for (int i = 0; i < num_agents; ++i) {
    auto& m = plan[i];
    if (m.size() == 0) {
      m.resize(0, cols);
      continue;
    }
    if (m.cols() != cols) {
      std::ostringstream os;
      os << "measurement plan: " << indexed(name, i) << " has " << m.cols()
         << " columns, stacked vector has " << cols;
      throw DimensionError(os.str());
    }
    if (!is_row_selector(m)) {
      throw InvalidArgument("measurement plan: " + indexed(name, i) +
                            " must be a 0/1 row selector");
    }
  }
  return plan;
}

}  // namespace

std::vector<int> AgentDynamics::input_dims() const {
  std::vector<int> out;
  out.reserve(B.size());
  for (const auto& b : B) out.push_back(static_cast<int>(b.cols()));
  return out;
}

int AgentDynamics::total_input_dim() const {
  const auto dims = input_dims();
  return std::accumulate(dims.begin(), dims.end(), 0);
}

bool AgentDynamics::homogeneous() const {
  return std::all_of(B.begin(), B.end(), [&](const Matrix& b) {
    return b.rows() == B.front().rows() && b.cols() == B.front().cols() && b == B.front();
  });
}

void AgentDynamics::validate() const {
  if (A.rows() != A.cols() || A.rows() == 0) throw DimensionError("A must be square and nonempty");
  if (B.empty()) throw DimensionError("B: no agents");
  for (int i = 0; i < num_agents(); ++i) {
    if (B[i].rows() != A.rows()) {
      std::ostringstream os;
      os << indexed("B", i) << ": expected " << A.rows() << " rows, got " << B[i].rows();
      throw DimensionError(os.str());
    }
    if (B[i].cols() < 1) throw DimensionError(indexed("B", i) + ": needs at least one input");
  }
  if (!A.allFinite()) throw InvalidArgument("A has non-finite entries");
}

void CostWeights::validate(const AgentDynamics& dyn) const {
  const int n = dyn.state_dim();
  linalg::require_shape(Q, n, n, "Q");
  if (!linalg::is_symmetric(Q)) throw InvalidArgument("Q must be symmetric");
  if (linalg::min_symmetric_eigenvalue(Q) < -1e-10) {
    throw InvalidArgument("Q must be positive semidefinite");
  }
  if (static_cast<int>(R.size()) != dyn.num_agents()) {
    std::ostringstream os;
    os << "R: expected " << dyn.num_agents() << " matrices, got " << R.size();
    throw DimensionError(os.str());
  }
  for (int i = 0; i < dyn.num_agents(); ++i) {
    const int m = dyn.input_dim(i);
    linalg::require_shape(R[i], m, m, indexed("R", i).c_str());
    if (!linalg::is_symmetric(R[i])) throw InvalidArgument(indexed("R", i) + " must be symmetric");
    if (linalg::min_symmetric_eigenvalue(R[i]) <= 0.0) {
      throw InvalidArgument(indexed("R", i) + " must be positive definite");
    }
  }
  if (state_weight) {
    const int dim = n * dyn.num_agents();
    linalg::require_shape(*state_weight, dim, dim, "Q_state");
    if (!linalg::is_symmetric(*state_weight)) throw InvalidArgument("Q_state must be symmetric");
    if (linalg::min_symmetric_eigenvalue(*state_weight) < -1e-10) {
      throw InvalidArgument("Q_state must be positive semidefinite");
    }
  }
}

Vector EdgeLedger::stack_errors(std::span<const Vector> states) const {
  Vector e(dimension());
  for (int r = 0; r < size(); ++r) {
    const auto [i, j] = entries[r];
    e.segment(r * state_dim, state_dim) = states[i] - states[j];
  }
  return e;
}

EdgeLedger build_ledger(const DirectedGraph& g, int state_dim) {
  EdgeLedger ledger;
  ledger.state_dim = state_dim;
  const auto nbrs = neighbor_sets(g);
  ledger.offsets.reserve(nbrs.size() + 1);
  for (int i = 0; i < static_cast<int>(nbrs.size()); ++i) {
    ledger.offsets.push_back(ledger.size());
    for (int j : nbrs[i]) ledger.entries.emplace_back(i, j);
  }
  ledger.offsets.push_back(ledger.size());
  return ledger;
}

Matrix block_selector(std::span<const int> blocks, int num_blocks, int block_size) {
  Matrix s = Matrix::Zero(static_cast<Eigen::Index>(blocks.size()) * block_size,
                          static_cast<Eigen::Index>(num_blocks) * block_size);
  for (std::size_t r = 0; r < blocks.size(); ++r) {
    const int b = blocks[r];
    if (b < 0 || b >= num_blocks) throw InvalidArgument("block_selector: block index out of range");
    s.block(static_cast<Eigen::Index>(r) * block_size, static_cast<Eigen::Index>(b) * block_size,
            block_size, block_size)
        .setIdentity();
  }
  return s;
}

Matrix complete_graph_weight(const Matrix& Q, int num_agents) {
  const Eigen::Index n = Q.rows();
  Matrix out(n * num_agents, n * num_agents);
  for (int i = 0; i < num_agents; ++i) {
    for (int j = 0; j < num_agents; ++j) {
      out.block(i * n, j * n, n, n) = (i == j) ? Matrix((num_agents - 1) * Q) : Matrix(-Q);
    }
  }
  return out;
}

GlobalErrorSystem build_error_system(const AgentDynamics& dyn, const DirectedGraph& g,
                                     const CostWeights& w,
                                     std::optional<std::vector<Matrix>> measurement_plan) {
  dyn.validate();
  w.validate(dyn);
  const int num_agents = dyn.num_agents();
  if (g.size() != num_agents) {
    std::ostringstream os;
    os << "graph has " << g.size() << " agents, dynamics have " << num_agents;
    throw DimensionError(os.str());
  }
  const int n = dyn.state_dim();

  GlobalErrorSystem sys;
  if (!is_strongly_connected(g)) {
    sys.warnings.emplace_back("communication graph is not strongly connected");
  }
  sys.ledger = build_ledger(g, n);
  if (sys.ledger.size() == 0) throw InvalidArgument("graph has no edges: empty error system");
  const int entries = sys.ledger.size();
  const int dim = sys.ledger.dimension();

  sys.A_tilde = Matrix::Zero(dim, dim);
  for (int r = 0; r < entries; ++r) sys.A_tilde.block(r * n, r * n, n, n) = dyn.A;

  sys.B_bar_list.reserve(num_agents);
  for (int i = 0; i < num_agents; ++i) {
    Matrix bb = Matrix::Zero(dim, dyn.input_dim(i));
    for (int r = 0; r < entries; ++r) {
      const auto [p, q] = sys.ledger.entries[r];
      if (p == i) bb.middleRows(r * n, n) += dyn.B[i];
      if (q == i) bb.middleRows(r * n, n) -= dyn.B[i];
    }
    sys.B_bar_list.push_back(std::move(bb));
  }
  sys.B_bar = linalg::hstack(sys.B_bar_list, dim);

  if (measurement_plan) {
    sys.H_list = checked_plan(std::move(*measurement_plan), num_agents, dim, "H");
  } else {
    for (int i = 0; i < num_agents; ++i) {
      std::vector<int> own(sys.ledger.owned_count(i));
      std::iota(own.begin(), own.end(), sys.ledger.offsets[i]);
      sys.H_list.push_back(block_selector(own, entries, n));
    }
  }

  sys.Q = w.Q;
  std::vector<Matrix> qs(entries, w.Q);
  sys.Q_tilde = linalg::block_diagonal(qs);
  sys.R_list = w.R;
  sys.R_blk = linalg::block_diagonal(w.R);
  sys.input_dims = dyn.input_dims();
  return sys;
}

GlobalStateSystem build_state_system(const AgentDynamics& dyn, const DirectedGraph& g,
                                     const CostWeights& w,
                                     std::optional<std::vector<Matrix>> measurement_plan) {
  dyn.validate();
  w.validate(dyn);
  const int num_agents = dyn.num_agents();
  if (g.size() != num_agents) {
    std::ostringstream os;
    os << "graph has " << g.size() << " agents, dynamics have " << num_agents;
    throw DimensionError(os.str());
  }
  const int n = dyn.state_dim();
  const int dim = n * num_agents;

  GlobalStateSystem sys;
  if (!is_strongly_connected(g)) {
    sys.warnings.emplace_back("communication graph is not strongly connected");
  }
  sys.ledger = build_ledger(g, n);

  std::vector<Matrix> as(num_agents, dyn.A);
  sys.A_tilde = linalg::block_diagonal(as);
  sys.B_tilde = linalg::block_diagonal(dyn.B);
  for (int i = 0; i < num_agents; ++i) {
    Matrix bt = Matrix::Zero(dim, dyn.input_dim(i));
    bt.middleRows(i * n, n) = dyn.B[i];
    sys.B_tilde_list.push_back(std::move(bt));
  }

  if (measurement_plan) {
    sys.C_list = checked_plan(std::move(*measurement_plan), num_agents, dim, "C");
  } else {
    const auto nbrs = neighbor_sets(g);
    for (int i = 0; i < num_agents; ++i) {
      std::vector<int> seen = nbrs[i];
      seen.push_back(i);
      std::sort(seen.begin(), seen.end());
      sys.C_list.push_back(block_selector(seen, num_agents, n));
    }
  }

  sys.Q_cal = w.state_weight ? *w.state_weight : complete_graph_weight(w.Q, num_agents);
  sys.R_list = w.R;
  sys.R_blk = linalg::block_diagonal(w.R);
  sys.input_dims = dyn.input_dims();
  return sys;
}

double error_cost_equivalence_check(const GlobalErrorSystem& sys, std::span<const Vector> errors,
                                    std::span<const Vector> inputs) {
  if (!inputs.empty() && inputs.size() != errors.size()) {
    throw DimensionError("error_cost_equivalence_check: error and input sample counts differ");
  }
  const int n = sys.ledger.state_dim;
  double worst = 0.0;
  for (std::size_t k = 0; k < errors.size(); ++k) {
    const Vector& e = errors[k];
    if (e.size() != sys.dimension()) {
      throw DimensionError("error_cost_equivalence_check: error sample has wrong length");
    }
    double pairwise = 0.0;
    for (int r = 0; r < sys.ledger.size(); ++r) {
      const auto eij = e.segment(r * n, n);
      pairwise += eij.dot(sys.Q * eij);
    }
    double quadratic = e.dot(sys.Q_tilde * e);
    if (!inputs.empty()) {
      const Vector& u = inputs[k];
      if (u.size() != sys.R_blk.rows()) {
        throw DimensionError("error_cost_equivalence_check: input sample has wrong length");
      }
      int off = 0;
      for (int i = 0; i < sys.num_agents(); ++i) {
        const int m = sys.input_dims[i];
        const auto ui = u.segment(off, m);
        pairwise += ui.dot(sys.R_list[i] * ui);
        off += m;
      }
      quadratic += u.dot(sys.R_blk * u);
    }
    worst = std::max(worst, std::abs(pairwise - quadratic));
  }
  return worst;
}

}  // namespace optcon
