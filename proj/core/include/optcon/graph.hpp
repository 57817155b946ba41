#pragma once

#include <complex>
#include <span>
#include <vector>

#include "optcon/types.hpp"

namespace optcon {

/// A directed edge j -> i carrying weight a_ij. Agent indices are 0-based.
struct Edge {
  int from = 0;
  int to = 0;
  double weight = 1.0;
};

/// Weighted communication digraph with adjacency 𝒜 = [a_ij], where a_ij != 0
/// iff agent i receives from agent j. Immutable once built.
///
/// Invariants: N >= 2, zero diagonal (no self loops), finite nonnegative
/// weights.
class DirectedGraph {
 public:
  explicit DirectedGraph(Matrix weights);

  static DirectedGraph from_edges(int num_agents, std::span<const Edge> edges);

  int size() const { return static_cast<int>(weights_.rows()); }
  const Matrix& weights() const { return weights_; }
  double weight(int i, int j) const { return weights_(i, j); }
  bool has_edge(int from, int to) const { return weights_(to, from) != 0.0; }

  /// Number of agents i listens to (|𝒩_i|).
  int in_degree(int i) const;

  /// Same graph with every weight multiplied by `factor` > 0.
  DirectedGraph scaled(double factor) const;

 private:
  Matrix weights_;
};

struct LaplacianMatrix {
  Matrix values;
};

/// l_ii = Σ_{j∈𝒩_i} a_ij, l_ij = -a_ij for i != j.
LaplacianMatrix build_laplacian(const DirectedGraph& g);

/// True iff every ordered pair of distinct agents is joined by a directed path.
bool is_strongly_connected(const DirectedGraph& g);

/// For each agent i the ascending list {j : a_ij != 0}. This ordering is the
/// canonical edge ordering used for the stacked error vector.
std::vector<std::vector<int>> neighbor_sets(const DirectedGraph& g);

/// Eigenvalues sorted by ascending real part (ties by imaginary part).
/// Throws NonConvergence if the QR iteration does not settle.
std::vector<std::complex<double>> laplacian_spectrum(const LaplacianMatrix& l);

}  // namespace optcon
