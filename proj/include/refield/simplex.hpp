#pragma once

#include <Eigen/Dense>

namespace refield {

/// Radial projection onto the ball of radius R (vector 2-norm).
Eigen::VectorXd project_ball(const Eigen::VectorXd& x, double R);
/// Frobenius-ball projection for matrix-valued components.
Eigen::MatrixXd project_ball(const Eigen::MatrixXd& x, double R);

/// Componentwise clamp onto [a, b]. Throws if a > b in any component.
Eigen::VectorXd clamp_box(const Eigen::VectorXd& q, const Eigen::VectorXd& a,
                          const Eigen::VectorXd& b);

/// Euclidean projection of logits onto the probability simplex
/// (sorted-threshold algorithm). Support may be a strict subset.
Eigen::VectorXd sparsemax(const Eigen::VectorXd& logits);

/// Strictly positive simplex vector; shift-invariant in the logits.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

/// (1 - eps) p + eps * uniform. Requires eps in (0,1) and p on the simplex.
Eigen::VectorXd epsilon_floor(const Eigen::VectorXd& p, double eps);

enum class ConvexKind { ball, box, simplex };

/// One elementary convex component of the state domain.
struct ConvexComponentSpec {
  ConvexKind kind = ConvexKind::ball;
  double radius = 1.0;        // ball
  Eigen::VectorXd lower;      // box
  Eigen::VectorXd upper;      // box
  int dimension = 1;          // simplex

  static ConvexComponentSpec ball_of(double R);
  static ConvexComponentSpec box_of(Eigen::VectorXd a, Eigen::VectorXd b);
  static ConvexComponentSpec simplex_of(int dim);
};

/// Tangent-cone membership test at x for velocity v:
///   ball:    ||x|| = R      =>  <x, v> <= tol
///   box:     q_i = a_i      =>  v_i >= -tol;  q_i = b_i => v_i <= tol
///   simplex: |sum v_i| <= tol and v_i >= -tol wherever x_i = 0
/// Interior points always pass. Throws if x lies outside the component
/// beyond tol.
bool tangent_cone_ok(const ConvexComponentSpec& spec, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& v, double tol = 1e-9);

}  // namespace refield
