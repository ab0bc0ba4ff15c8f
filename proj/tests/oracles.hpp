#pragma once

// Test-only oracles, kept independent of the library's implementation paths.

#include <Eigen/Dense>
#include <limits>
#include <random>
#include <vector>

namespace oracles {

/// Brute-force Euclidean projection onto the probability simplex by
/// enumerating every candidate support set and solving the
/// equality-constrained projection in closed form. Exponential in the
/// dimension; intended for dims <= ~12.
inline Eigen::VectorXd simplex_projection_qp(const Eigen::VectorXd& z) {
  const int m = static_cast<int>(z.size());
  Eigen::VectorXd best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (unsigned long mask = 1; mask < (1ul << m); ++mask) {
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < m; ++i)
      if (mask & (1ul << i)) {
        sum += z[i];
        ++count;
      }
    double shift = (sum - 1.0) / count;
    Eigen::VectorXd cand = Eigen::VectorXd::Zero(m);
    bool feasible = true;
    for (int i = 0; i < m; ++i) {
      if (mask & (1ul << i)) {
        cand[i] = z[i] - shift;
        feasible = feasible && cand[i] >= -1e-15;
      }
    }
    if (!feasible) continue;
    double dist = (cand - z).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = cand;
    }
  }
  return best.cwiseMax(0.0);
}

/// Dense symmetric eigensolver oracle for graph Laplacians assembled
/// entry by entry from an edge list.
inline Eigen::VectorXd laplacian_eigs(int n, const std::vector<std::pair<int, int>>& edges,
                                      const Eigen::VectorXd& w) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (size_t k = 0; k < edges.size(); ++k) {
    L(edges[k].first, edges[k].first) += w[k];
    L(edges[k].first, edges[k].second) -= w[k];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
  return es.eigenvalues();
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, int dim, double scale) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = scale * gauss(rng);
  return v;
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols, double scale) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = scale * gauss(rng);
  return m;
}

}  // namespace oracles
