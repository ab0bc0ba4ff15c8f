#include "refield/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace refield {

Eigen::VectorXd project_ball(const Eigen::VectorXd& x, double R) {
  if (!(R > 0.0)) throw std::invalid_argument("project_ball: radius must be positive");
  double n = x.norm();
  if (n <= R) return x;
  return (R / n) * x;
}

Eigen::MatrixXd project_ball(const Eigen::MatrixXd& x, double R) {
  if (!(R > 0.0)) throw std::invalid_argument("project_ball: radius must be positive");
  double n = x.norm();  // Frobenius
  if (n <= R) return x;
  return (R / n) * x;
}

Eigen::VectorXd clamp_box(const Eigen::VectorXd& q, const Eigen::VectorXd& a,
                          const Eigen::VectorXd& b) {
  if (q.size() != a.size() || q.size() != b.size())
    throw std::invalid_argument("clamp_box: dimension mismatch");
  if ((a.array() > b.array()).any())
    throw std::invalid_argument("clamp_box: lower bound exceeds upper bound");
  return q.cwiseMax(a).cwiseMin(b);
}

Eigen::VectorXd sparsemax(const Eigen::VectorXd& logits) {
  const Eigen::Index m = logits.size();
  if (m == 0) throw std::invalid_argument("sparsemax: empty input");
  if (!logits.allFinite()) throw std::invalid_argument("sparsemax: non-finite input");
  std::vector<double> z(logits.data(), logits.data() + m);
  std::sort(z.begin(), z.end(), std::greater<double>());
  double cumsum = 0.0;
  double tau = 0.0;
  int support = 0;
  for (Eigen::Index k = 0; k < m; ++k) {
    cumsum += z[k];
    double t = (cumsum - 1.0) / static_cast<double>(k + 1);
    if (z[k] > t) {
      tau = t;
      support = static_cast<int>(k + 1);
    }
  }
  (void)support;
  return (logits.array() - tau).max(0.0);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  if (logits.size() == 0) throw std::invalid_argument("softmax: empty input");
  if (!logits.allFinite()) throw std::invalid_argument("softmax: non-finite input");
  Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

Eigen::VectorXd epsilon_floor(const Eigen::VectorXd& p, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("epsilon_floor: eps must lie in (0,1)");
  double u = 1.0 / static_cast<double>(p.size());
  return (1.0 - eps) * p.array() + eps * u;
}

ConvexComponentSpec ConvexComponentSpec::ball_of(double R) {
  if (!(R > 0.0)) throw std::invalid_argument("ball spec: radius must be positive");
  ConvexComponentSpec s;
  s.kind = ConvexKind::ball;
  s.radius = R;
  return s;
}

ConvexComponentSpec ConvexComponentSpec::box_of(Eigen::VectorXd a, Eigen::VectorXd b) {
  if ((a.array() > b.array()).any())
    throw std::invalid_argument("box spec: lower bound exceeds upper bound");
  ConvexComponentSpec s;
  s.kind = ConvexKind::box;
  s.lower = std::move(a);
  s.upper = std::move(b);
  return s;
}

ConvexComponentSpec ConvexComponentSpec::simplex_of(int dim) {
  if (dim < 1) throw std::invalid_argument("simplex spec: dimension must be >= 1");
  ConvexComponentSpec s;
  s.kind = ConvexKind::simplex;
  s.dimension = dim;
  return s;
}

bool tangent_cone_ok(const ConvexComponentSpec& spec, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& v, double tol) {
  switch (spec.kind) {
    case ConvexKind::ball: {
      double n = x.norm();
      if (n > spec.radius + tol)
        throw std::invalid_argument("tangent_cone_ok: point outside ball");
      if (std::abs(n - spec.radius) > tol) return true;  // interior
      return x.dot(v) <= tol;
    }
    case ConvexKind::box: {
      if ((x.array() < spec.lower.array() - tol).any() ||
          (x.array() > spec.upper.array() + tol).any())
        throw std::invalid_argument("tangent_cone_ok: point outside box");
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (std::abs(x[i] - spec.lower[i]) <= tol && v[i] < -tol) return false;
        if (std::abs(x[i] - spec.upper[i]) <= tol && v[i] > tol) return false;
      }
      return true;
    }
    case ConvexKind::simplex: {
      if (std::abs(x.sum() - 1.0) > tol * x.size() || (x.array() < -tol).any())
        throw std::invalid_argument("tangent_cone_ok: point outside simplex");
      if (std::abs(v.sum()) > tol) return false;
      for (Eigen::Index i = 0; i < x.size(); ++i)
        if (std::abs(x[i]) <= tol && v[i] < -tol) return false;
      return true;
    }
  }
  return false;
}

}  // namespace refield
