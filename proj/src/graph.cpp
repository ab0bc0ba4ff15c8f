#include "refield/graph.hpp"

#include <Eigen/Eigenvalues>
#include <map>
#include <stdexcept>

namespace refield {

WeightedGraph::WeightedGraph(int n, std::vector<std::pair<int, int>> e, Eigen::VectorXd w)
    : node_count(n), edges(std::move(e)), weights(std::move(w)) {
  check_valid();
}

void WeightedGraph::check_valid() const {
  if (node_count <= 0) throw std::invalid_argument("graph: node_count must be positive");
  if (weights.size() != static_cast<Eigen::Index>(edges.size()))
    throw std::invalid_argument("graph: one weight per edge required");
  for (const auto& [i, j] : edges) {
    if (i < 0 || i >= node_count || j < 0 || j >= node_count)
      throw std::invalid_argument("graph: edge endpoint out of range");
  }
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    if (!(weights[k] >= 0.0)) throw std::invalid_argument("graph: negative or NaN weight");
  }
}

std::vector<std::vector<int>> WeightedGraph::in_neighbors() const {
  std::vector<std::vector<int>> nb(node_count);
  for (const auto& [i, j] : edges) nb[j].push_back(i);
  return nb;
}

std::vector<std::vector<int>> WeightedGraph::in_edge_indices() const {
  std::vector<std::vector<int>> idx(node_count);
  for (int k = 0; k < edge_count(); ++k) idx[edges[k].second].push_back(k);
  return idx;
}

bool WeightedGraph::is_symmetric(double tol) const {
  std::map<std::pair<int, int>, double> w;
  for (int k = 0; k < edge_count(); ++k) w[edges[k]] += weights[k];
  for (const auto& [e, v] : w) {
    auto rev = w.find({e.second, e.first});
    double back = rev == w.end() ? 0.0 : rev->second;
    if (std::abs(v - back) > tol) return false;
  }
  return true;
}

bool WeightedGraph::positive_support_connected() const {
  if (node_count == 1) return true;
  std::vector<std::vector<int>> adj(node_count);
  for (int k = 0; k < edge_count(); ++k) {
    if (weights[k] > 0.0) {
      adj[edges[k].first].push_back(edges[k].second);
      adj[edges[k].second].push_back(edges[k].first);
    }
  }
  std::vector<char> seen(node_count, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int u : adj[v]) {
      if (!seen[u]) {
        seen[u] = 1;
        ++count;
        stack.push_back(u);
      }
    }
  }
  return count == node_count;
}

WeightedGraph WeightedGraph::complete(int n, double weight) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) e.emplace_back(i, j);
  return WeightedGraph(n, std::move(e), Eigen::VectorXd::Constant(n * (n - 1), weight));
}

WeightedGraph WeightedGraph::path(int n, double weight) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i + 1 < n; ++i) {
    e.emplace_back(i, i + 1);
    e.emplace_back(i + 1, i);
  }
  return WeightedGraph(n, std::move(e), Eigen::VectorXd::Constant(2 * (n - 1), weight));
}

Eigen::MatrixXd laplacian_matrix(const WeightedGraph& g) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(g.node_count, g.node_count);
  for (int k = 0; k < g.edge_count(); ++k) {
    const auto& [i, j] = g.edges[k];
    L(i, i) += g.weights[k];
    L(i, j) -= g.weights[k];
  }
  return L;
}

Eigen::MatrixXd laplacian_apply(const WeightedGraph& g, const Eigen::MatrixXd& field) {
  if (field.rows() != g.node_count)
    throw std::invalid_argument("laplacian_apply: field must have one row per node");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(field.rows(), field.cols());
  for (int k = 0; k < g.edge_count(); ++k) {
    const auto& [i, j] = g.edges[k];
    out.row(i) += g.weights[k] * (field.row(i) - field.row(j));
  }
  return out;
}

WeightedGraph symmetrize_conductance(const WeightedGraph& g) {
  std::map<std::pair<int, int>, double> w;
  for (int k = 0; k < g.edge_count(); ++k) w[g.edges[k]] += g.weights[k];
  std::map<std::pair<int, int>, double> sym;
  for (const auto& [e, v] : w) {
    auto rev = w.find({e.second, e.first});
    double back = rev == w.end() ? 0.0 : rev->second;
    sym[e] = 0.5 * (v + back);
    sym[{e.second, e.first}] = 0.5 * (v + back);
  }
  std::vector<std::pair<int, int>> edges;
  Eigen::VectorXd weights(sym.size());
  int k = 0;
  for (const auto& [e, v] : sym) {
    edges.push_back(e);
    weights[k++] = v;
  }
  return WeightedGraph(g.node_count, std::move(edges), std::move(weights));
}

Eigen::VectorXd laplacian_spectrum(const WeightedGraph& g) {
  if (!g.is_symmetric())
    throw std::invalid_argument("laplacian_spectrum: weights must be symmetric; symmetrize first");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(laplacian_matrix(g));
  if (es.info() != Eigen::Success) throw std::runtime_error("laplacian_spectrum: eigensolver failed");
  return es.eigenvalues();
}

double spectral_gap(const WeightedGraph& g) {
  if (g.node_count < 2) return 0.0;
  Eigen::VectorXd ev = laplacian_spectrum(g);
  return ev[1];
}

Eigen::MatrixXd block_laplacian(const WeightedGraph& g_l, const Eigen::VectorXd& q,
                                const WeightedGraph& g_r, const Eigen::VectorXd& w) {
  WeightedGraph gl = g_l;
  gl.weights = q;
  gl.check_valid();
  WeightedGraph gr = g_r;
  gr.weights = w;
  gr.check_valid();
  int n = gl.node_count + gr.node_count;
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  L.topLeftCorner(gl.node_count, gl.node_count) = laplacian_matrix(gl);
  L.bottomRightCorner(gr.node_count, gr.node_count) = laplacian_matrix(gr);
  return L;
}

}  // namespace refield
