#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

namespace refield {

/// Finite weighted graph. Edges are stored as directed arcs; an undirected
/// graph is represented by listing both arc directions with equal weight.
/// Weights absent from the map count as zero, so sparse overlays can be
/// expressed by listing only their support.
struct WeightedGraph {
  int node_count = 0;
  std::vector<std::pair<int, int>> edges;
  Eigen::VectorXd weights;  // one entry per edge, >= 0

  WeightedGraph() = default;
  WeightedGraph(int n, std::vector<std::pair<int, int>> e, Eigen::VectorXd w);

  int edge_count() const { return static_cast<int>(edges.size()); }
  void check_valid() const;  // throws std::invalid_argument on bad indices

  /// In-neighbour lists (sources of arcs ending at each node), in edge order.
  std::vector<std::vector<int>> in_neighbors() const;
  /// Edge indices grouped by target node, in edge order.
  std::vector<std::vector<int>> in_edge_indices() const;

  bool is_symmetric(double tol = 1e-12) const;
  /// True if the support of positive-weight edges connects all nodes
  /// (arc direction ignored).
  bool positive_support_connected() const;

  /// Complete graph on n nodes, unit weights, both arc directions.
  static WeightedGraph complete(int n, double weight = 1.0);
  /// Path graph 1-2-...-n, unit weights, both arc directions.
  static WeightedGraph path(int n, double weight = 1.0);
};

/// Dense weighted Laplacian: L(s,s) = sum_{s'} w(s,s'), L(s,s') = -w(s,s').
Eigen::MatrixXd laplacian_matrix(const WeightedGraph& g);

/// (L H)_s = sum_{s': (s,s') in E} w(s,s') (h_s - h_{s'}), applied row-wise
/// to a per-node field with one row per node.
Eigen::MatrixXd laplacian_apply(const WeightedGraph& g, const Eigen::MatrixXd& field);

/// Symmetric conductance field w_ij = (w(i,j) + w(j,i)) / 2. The result
/// lists both arc directions for every unordered pair present in the input.
WeightedGraph symmetrize_conductance(const WeightedGraph& g);

/// Second-smallest eigenvalue of the Laplacian. Demands symmetric weights;
/// callers with directed weights must symmetrize first.
double spectral_gap(const WeightedGraph& g);

/// All Laplacian eigenvalues, ascending (symmetric weights required).
Eigen::VectorXd laplacian_spectrum(const WeightedGraph& g);

/// Block-diagonal Laplacian of the bipartite union: diag(L_GL(q), L_GR(w)).
Eigen::MatrixXd block_laplacian(const WeightedGraph& g_l, const Eigen::VectorXd& q,
                                const WeightedGraph& g_r, const Eigen::VectorXd& w);

}  // namespace refield
