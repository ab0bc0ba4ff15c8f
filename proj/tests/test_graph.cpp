#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "refield/graph.hpp"

using namespace refield;

TEST_CASE("laplacian_apply on K3 and P3 unit weights") {
  WeightedGraph k3 = WeightedGraph::complete(3);
  WeightedGraph p3 = WeightedGraph::path(3);
  Eigen::MatrixXd e1(3, 1);
  e1 << 1, 0, 0;

  Eigen::MatrixXd lk = laplacian_apply(k3, e1);
  CHECK(lk(0, 0) == doctest::Approx(2.0));
  CHECK(lk(1, 0) == doctest::Approx(-1.0));
  CHECK(lk(2, 0) == doctest::Approx(-1.0));

  Eigen::MatrixXd lp = laplacian_apply(p3, e1);
  CHECK(lp(0, 0) == doctest::Approx(1.0));
  CHECK(lp(1, 0) == doctest::Approx(-1.0));
  CHECK(lp(2, 0) == doctest::Approx(0.0));
}

TEST_CASE("constant fields lie in the Laplacian kernel") {
  WeightedGraph k3 = WeightedGraph::complete(3, 0.7);
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(3, 2, 3.14);
  CHECK(laplacian_apply(k3, c).norm() == doctest::Approx(0.0));
}

TEST_CASE("laplacian_apply rejects dimension mismatch") {
  WeightedGraph k3 = WeightedGraph::complete(3);
  CHECK_THROWS_AS(laplacian_apply(k3, Eigen::MatrixXd::Zero(4, 1)), std::invalid_argument);
}

TEST_CASE("laplacian_apply agrees with the dense matrix product") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    int n = 2 + static_cast<int>(rng() % 6);
    WeightedGraph g = WeightedGraph::complete(n);
    std::uniform_real_distribution<double> unif(0.0, 2.0);
    for (int k = 0; k < g.edge_count(); ++k) g.weights[k] = unif(rng);
    Eigen::MatrixXd f = oracles::random_matrix(rng, n, 3, 1.0);
    Eigen::MatrixXd via_matrix = laplacian_matrix(g) * f;
    CHECK((laplacian_apply(g, f) - via_matrix).norm() < 1e-12);
  }
}

TEST_CASE("symmetrize_conductance") {
  SUBCASE("symmetric input unchanged") {
    WeightedGraph g = WeightedGraph::path(4, 0.5);
    WeightedGraph s = symmetrize_conductance(g);
    CHECK(s.is_symmetric());
    Eigen::MatrixXd diff = laplacian_matrix(s) - laplacian_matrix(g);
    CHECK(diff.norm() == doctest::Approx(0.0));
  }
  SUBCASE("one-sided weight splits evenly") {
    WeightedGraph g(2, {{0, 1}, {1, 0}}, Eigen::Vector2d(1.0, 0.0));
    WeightedGraph s = symmetrize_conductance(g);
    for (int k = 0; k < s.edge_count(); ++k) CHECK(s.weights[k] == doctest::Approx(0.5));
  }
  SUBCASE("all-zero weights stay zero") {
    WeightedGraph g(3, {{0, 1}, {1, 0}, {1, 2}, {2, 1}}, Eigen::Vector4d::Zero());
    CHECK(symmetrize_conductance(g).weights.norm() == doctest::Approx(0.0));
  }
}

TEST_CASE("spectral gaps of the worked-example graphs") {
  CHECK(spectral_gap(WeightedGraph::complete(3)) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(spectral_gap(WeightedGraph::path(3)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("spectral gap of a disconnected graph is zero") {
  WeightedGraph g(2, {}, Eigen::VectorXd());
  CHECK(spectral_gap(g) == doctest::Approx(0.0));
  CHECK_FALSE(g.positive_support_connected());
}

TEST_CASE("uniform scaling scales the gap: K3 with weight c") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(0.1, 3.0);
  for (int trial = 0; trial < 10; ++trial) {
    double c = unif(rng);
    WeightedGraph g = WeightedGraph::complete(3, c);
    Eigen::VectorXd oracle = oracles::laplacian_eigs(3, g.edges, g.weights);
    CHECK(spectral_gap(g) == doctest::Approx(oracle[1]).epsilon(1e-12));
    CHECK(spectral_gap(g) == doctest::Approx(3.0 * c).epsilon(1e-10));
  }
}

TEST_CASE("spectral_gap rejects nonsymmetric weights") {
  WeightedGraph g(2, {{0, 1}, {1, 0}}, Eigen::Vector2d(1.0, 0.2));
  CHECK_THROWS_AS(spectral_gap(g), std::invalid_argument);
}

TEST_CASE("Laplacian is PSD for random symmetric weights") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  WeightedGraph g = WeightedGraph::complete(5);
  // symmetric assignment
  for (int k = 0; k < g.edge_count(); ++k) {
    const auto& [i, j] = g.edges[k];
    if (i < j) g.weights[k] = unif(rng);
  }
  for (int k = 0; k < g.edge_count(); ++k) {
    const auto& [i, j] = g.edges[k];
    if (i > j)
      for (int k2 = 0; k2 < g.edge_count(); ++k2)
        if (g.edges[k2].first == j && g.edges[k2].second == i) g.weights[k] = g.weights[k2];
  }
  Eigen::MatrixXd L = laplacian_matrix(g);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::VectorXd x = oracles::random_vector(rng, 5, 2.0);
    CHECK(x.dot(L * x) >= -1e-10);
  }
  SUBCASE("row sums vanish") { CHECK((L * Eigen::VectorXd::Ones(5)).norm() < 1e-12); }
}

TEST_CASE("residual-backbone bound: nonnegative overlays never lower the gap") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  WeightedGraph base = WeightedGraph::path(5, 0.3);
  double gap_base = spectral_gap(base);
  for (int trial = 0; trial < 100; ++trial) {
    WeightedGraph g = base;
    for (int k = 0; k < g.edge_count(); k += 2) {
      double add = unif(rng);
      g.weights[k] += add;
      g.weights[k + 1] += add;  // keep symmetric
    }
    CHECK(spectral_gap(g) >= gap_base - 1e-10);
  }
}

TEST_CASE("block laplacian of the bipartite union") {
  WeightedGraph k3 = WeightedGraph::complete(3);
  WeightedGraph p3 = WeightedGraph::path(3);
  Eigen::MatrixXd B = block_laplacian(k3, k3.weights, p3, p3.weights);
  REQUIRE(B.rows() == 6);

  Eigen::MatrixXd ll(3, 3), lr(3, 3);
  ll << 2, -1, -1, -1, 2, -1, -1, -1, 2;
  lr << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  CHECK((B.topLeftCorner(3, 3) - ll).norm() < 1e-14);
  CHECK((B.bottomRightCorner(3, 3) - lr).norm() < 1e-14);
  CHECK(B.topRightCorner(3, 3).norm() == doctest::Approx(0.0));
  CHECK(B.bottomLeftCorner(3, 3).norm() == doctest::Approx(0.0));

  SUBCASE("zero weights give the zero matrix") {
    Eigen::MatrixXd Z = block_laplacian(k3, Eigen::VectorXd::Zero(k3.edge_count()), p3,
                                        Eigen::VectorXd::Zero(p3.edge_count()));
    CHECK(Z.norm() == doctest::Approx(0.0));
  }
  SUBCASE("stacked constant field maps to zero") {
    CHECK((B * Eigen::VectorXd::Ones(6)).norm() < 1e-14);
  }
}
