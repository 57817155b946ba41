#include "optcon/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace optcon {

namespace {

constexpr int kMaxQrSweeps = 500;

std::vector<bool> reachable_from(const Matrix& w, int start, bool reverse) {
  const int n = static_cast<int>(w.rows());
  std::vector<bool> seen(n, false);
  std::vector<int> stack{start};
  seen[start] = true;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int u = 0; u < n; ++u) {
      // Edge v -> u exists iff a_uv != 0.
      const double a = reverse ? w(v, u) : w(u, v);
      if (a != 0.0 && !seen[u]) {
        seen[u] = true;
        stack.push_back(u);
      }
    }
  }
  return seen;
}

}  // namespace

DirectedGraph::DirectedGraph(Matrix weights) : weights_(std::move(weights)) {
  if (weights_.rows() != weights_.cols()) {
    throw DimensionError("DirectedGraph: adjacency matrix must be square");
  }
  if (weights_.rows() < 2) {
    throw InvalidArgument("DirectedGraph: consensus needs at least two agents");
  }
  for (Eigen::Index i = 0; i < weights_.rows(); ++i) {
    if (weights_(i, i) != 0.0) {
      std::ostringstream os;
      os << "DirectedGraph: self loop at agent " << i << " (a_ii must be 0)";
      throw InvalidArgument(os.str());
    }
  }
  if (!weights_.allFinite() || (weights_.array() < 0.0).any()) {
    throw InvalidArgument("DirectedGraph: weights must be finite and nonnegative");
  }
}

DirectedGraph DirectedGraph::from_edges(int num_agents, std::span<const Edge> edges) {
  if (num_agents < 2) throw InvalidArgument("DirectedGraph: consensus needs at least two agents");
  Matrix w = Matrix::Zero(num_agents, num_agents);
  for (const auto& e : edges) {
    if (e.from < 0 || e.from >= num_agents || e.to < 0 || e.to >= num_agents) {
      std::ostringstream os;
      os << "DirectedGraph: edge " << e.from << " -> " << e.to << " out of range";
      throw InvalidArgument(os.str());
    }
    if (w(e.to, e.from) != 0.0) {
      std::ostringstream os;
      os << "DirectedGraph: duplicate edge " << e.from << " -> " << e.to;
      throw InvalidArgument(os.str());
    }
    if (e.weight == 0.0) throw InvalidArgument("DirectedGraph: zero-weight edge");
    w(e.to, e.from) = e.weight;
  }
  return DirectedGraph(std::move(w));
}

int DirectedGraph::in_degree(int i) const {
  return static_cast<int>((weights_.row(i).array() != 0.0).count());
}

DirectedGraph DirectedGraph::scaled(double factor) const {
  if (!(factor > 0.0)) throw InvalidArgument("DirectedGraph::scaled: factor must be positive");
  return DirectedGraph(weights_ * factor);
}

LaplacianMatrix build_laplacian(const DirectedGraph& g) {
  const auto& a = g.weights();
  Matrix l = -a;
  l.diagonal() = a.rowwise().sum();
  return {std::move(l)};
}

bool is_strongly_connected(const DirectedGraph& g) {
  const auto forward = reachable_from(g.weights(), 0, false);
  const auto backward = reachable_from(g.weights(), 0, true);
  return std::all_of(forward.begin(), forward.end(), [](bool b) { return b; }) &&
         std::all_of(backward.begin(), backward.end(), [](bool b) { return b; });
}

std::vector<std::vector<int>> neighbor_sets(const DirectedGraph& g) {
  const int n = g.size();
  std::vector<std::vector<int>> out(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (g.weight(i, j) != 0.0) out[i].push_back(j);
    }
  }
  return out;
}

std::vector<std::complex<double>> laplacian_spectrum(const LaplacianMatrix& l) {
  const auto& m = l.values;
  if (m.rows() != m.cols()) throw DimensionError("laplacian_spectrum: matrix is not square");
  Eigen::EigenSolver<Matrix> solver;
  solver.setMaxIterations(kMaxQrSweeps);
  solver.compute(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw NonConvergence("laplacian_spectrum: Hessenberg QR did not converge", kMaxQrSweeps, 0.0);
  }
  const auto& ev = solver.eigenvalues();
  std::vector<std::complex<double>> out(ev.data(), ev.data() + ev.size());
  // Exact zeros from round-off get a tiny imaginary part sometimes; snap it.
  for (auto& z : out) {
    if (std::abs(z.imag()) < 1e-14) z = {z.real(), 0.0};
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return out;
}

}  // namespace optcon
