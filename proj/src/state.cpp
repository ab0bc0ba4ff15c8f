#include "refield/state.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "refield/fields.hpp"
#include "refield/simplex.hpp"

namespace refield {

void ArchitectureConfig::check_valid() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw std::invalid_argument(std::string("config: ") + name + " must be positive");
  };
  positive(T, "T");
  positive(V, "V");
  positive(d_L, "d_L");
  positive(d_R, "d_R");
  positive(n_s, "n_s");
  positive(n_Y, "n_Y");
  positive(n_P, "n_P");
  positive(n_M, "n_M");
  positive(n_sub, "n_sub");
  positive(n_policy, "n_policy");
  positive(n_actions, "n_actions");
  if (!(dt > 0.0)) throw std::invalid_argument("config: dt must be positive");
  if (!(tau_r_to_l >= 0.0) || !(tau_l_to_r >= 0.0) || !std::isfinite(tau_max()))
    throw std::invalid_argument("config: delays must be finite and nonnegative");
  if (!(bounds.eps_Q > 0.0) || !(bounds.R_Q >= bounds.eps_Q))
    throw std::invalid_argument("config: precision box requires 0 < eps_Q <= R_Q");
  for (double r : {bounds.R_L, bounds.R_R, bounds.R_Y, bounds.R_P, bounds.R_M}) {
    if (!(r > 0.0) || !std::isfinite(r))
      throw std::invalid_argument("config: radii must be positive finite");
  }
  if (bounds.R_z.size() != n_policy || bounds.R_theta.size() != n_policy)
    throw std::invalid_argument("config: one trace/parameter radius per policy family");
  g_symbolic.check_valid();
  g_geometric.check_valid();
  if (g_symbolic.node_count != T)
    throw std::invalid_argument("config: symbolic graph must have T nodes");
  if (g_geometric.node_count != V)
    throw std::invalid_argument("config: geometric graph must have |V| nodes");
  check_kernel(kernel);
  KernelDims kd = kernel.dims();
  if (kd.T != T || kd.V != V || kd.d_L != d_L || kd.d_R != d_R)
    throw std::invalid_argument("config: kernel dimensions disagree with the architecture");
  if (!(mu_L > 0.0) || !(mu_R > 0.0) || !(mu_P > 0.0))
    throw std::invalid_argument("config: dissipativity constants must be positive");
}

StateVector StateVector::zeros(const ArchitectureConfig& cfg) {
  StateVector z;
  z.H_L = Eigen::MatrixXd::Zero(cfg.T, cfg.d_L);
  z.X_R = Eigen::MatrixXd::Zero(cfg.V, cfg.d_R);
  z.Q_L = Eigen::VectorXd::Constant(cfg.g_symbolic.edge_count(), cfg.bounds.eps_Q);
  z.W_R = Eigen::VectorXd::Zero(cfg.g_geometric.edge_count());
  auto in_groups = cfg.g_geometric.in_edge_indices();
  for (const auto& group : in_groups) {
    if (group.empty()) continue;
    for (int e : group) z.W_R[e] = 1.0 / static_cast<double>(group.size());
  }
  z.R_Theta = Eigen::MatrixXd::Constant(cfg.n_s, cfg.n_s, 1.0 / cfg.n_s);
  z.Y = Eigen::VectorXd::Zero(cfg.n_Y);
  z.P = Eigen::VectorXd::Zero(cfg.n_P);
  z.M = Eigen::VectorXd::Zero(cfg.n_M);
  z.rho = Eigen::VectorXd::Zero(cfg.n_sub);
  z.z.assign(cfg.n_policy, Eigen::VectorXd::Zero(cfg.n_actions));
  z.theta.assign(cfg.n_policy, Eigen::VectorXd::Zero(cfg.n_actions));
  return z;
}

Eigen::VectorXd StateVector::flatten() const {
  Eigen::Index n = H_L.size() + X_R.size() + Q_L.size() + W_R.size() + R_Theta.size() + Y.size() +
                   P.size() + M.size() + rho.size();
  for (const auto& v : z) n += v.size();
  for (const auto& v : theta) n += v.size();
  Eigen::VectorXd out(n);
  Eigen::Index at = 0;
  auto put = [&](const Eigen::VectorXd& v) {
    out.segment(at, v.size()) = v;
    at += v.size();
  };
  put(Eigen::Map<const Eigen::VectorXd>(H_L.data(), H_L.size()));
  put(Eigen::Map<const Eigen::VectorXd>(X_R.data(), X_R.size()));
  put(Q_L);
  put(W_R);
  put(Eigen::Map<const Eigen::VectorXd>(R_Theta.data(), R_Theta.size()));
  put(Y);
  put(P);
  put(M);
  put(rho);
  for (const auto& v : z) put(v);
  for (const auto& v : theta) put(v);
  return out;
}

bool StateVector::all_finite() const {
  bool ok = H_L.allFinite() && X_R.allFinite() && Q_L.allFinite() && W_R.allFinite() &&
            R_Theta.allFinite() && Y.allFinite() && P.allFinite() && M.allFinite() &&
            rho.allFinite();
  for (const auto& v : z) ok = ok && v.allFinite();
  for (const auto& v : theta) ok = ok && v.allFinite();
  return ok;
}

namespace {

template <typename Op>
StateVector combine(const StateVector& a, const StateVector& b, Op op) {
  StateVector r = a;
  r.H_L = op(a.H_L, b.H_L);
  r.X_R = op(a.X_R, b.X_R);
  r.Q_L = op(a.Q_L, b.Q_L);
  r.W_R = op(a.W_R, b.W_R);
  r.R_Theta = op(a.R_Theta, b.R_Theta);
  r.Y = op(a.Y, b.Y);
  r.P = op(a.P, b.P);
  r.M = op(a.M, b.M);
  r.rho = op(a.rho, b.rho);
  for (size_t i = 0; i < a.z.size(); ++i) r.z[i] = op(a.z[i], b.z[i]);
  for (size_t i = 0; i < a.theta.size(); ++i) r.theta[i] = op(a.theta[i], b.theta[i]);
  return r;
}

}  // namespace

StateVector operator+(const StateVector& a, const StateVector& b) {
  return combine(a, b, [](const auto& x, const auto& y) -> std::decay_t<decltype(x)> { return x + y; });
}
StateVector operator-(const StateVector& a, const StateVector& b) {
  return combine(a, b, [](const auto& x, const auto& y) -> std::decay_t<decltype(x)> { return x - y; });
}
StateVector operator*(double s, const StateVector& a) {
  return combine(a, a, [s](const auto& x, const auto&) -> std::decay_t<decltype(x)> { return s * x; });
}

std::vector<Violation> validate_state(const StateVector& z, const ArchitectureConfig& cfg,
                                      double tol) {
  bool shape_ok =
      z.H_L.rows() == cfg.T && z.H_L.cols() == cfg.d_L && z.X_R.rows() == cfg.V &&
      z.X_R.cols() == cfg.d_R && z.Q_L.size() == cfg.g_symbolic.edge_count() &&
      z.W_R.size() == cfg.g_geometric.edge_count() && z.R_Theta.rows() == cfg.n_s &&
      z.R_Theta.cols() == cfg.n_s && z.Y.size() == cfg.n_Y && z.P.size() == cfg.n_P &&
      z.M.size() == cfg.n_M && z.rho.size() == cfg.n_sub &&
      z.z.size() == static_cast<size_t>(cfg.n_policy) &&
      z.theta.size() == static_cast<size_t>(cfg.n_policy);
  if (shape_ok) {
    for (const auto& v : z.z) shape_ok = shape_ok && v.size() == cfg.n_actions;
    for (const auto& v : z.theta) shape_ok = shape_ok && v.size() == cfg.n_actions;
  }
  if (!shape_ok)
    throw std::invalid_argument("validate_state: state shape disagrees with the architecture");

  std::vector<Violation> out;
  auto flag = [&](const std::string& comp, double bound, double observed, const std::string& msg) {
    out.push_back({comp, bound, observed, msg});
  };

  if (z.H_L.norm() > cfg.bounds.R_L + tol)
    flag("H_L", cfg.bounds.R_L, z.H_L.norm(), "Frobenius norm exceeds R_L");
  for (int i = 0; i < cfg.V; ++i) {
    double n = z.X_R.row(i).norm();
    if (n > cfg.bounds.R_R + tol)
      flag("X_R[" + std::to_string(i) + "]", cfg.bounds.R_R, n, "node embedding exceeds R_R");
  }
  for (Eigen::Index e = 0; e < z.Q_L.size(); ++e) {
    if (z.Q_L[e] < cfg.bounds.eps_Q - tol || z.Q_L[e] > cfg.bounds.R_Q + tol)
      flag("Q_L[" + std::to_string(e) + "]", cfg.bounds.eps_Q, z.Q_L[e],
           "precision weight outside [eps_Q, R_Q]");
  }
  auto in_groups = cfg.g_geometric.in_edge_indices();
  for (int j = 0; j < cfg.V; ++j) {
    if (in_groups[j].empty()) continue;
    double sum = 0.0;
    bool neg = false;
    for (int e : in_groups[j]) {
      sum += z.W_R[e];
      neg = neg || z.W_R[e] < -tol;
    }
    if (neg || std::abs(sum - 1.0) > tol * in_groups[j].size())
      flag("W_R[node " + std::to_string(j) + "]", 1.0, sum, "in-weights off the simplex");
  }
  for (int i = 0; i < cfg.n_s; ++i) {
    double sum = z.R_Theta.row(i).sum();
    if (std::abs(sum - 1.0) > tol * cfg.n_s || (z.R_Theta.row(i).array() < -tol).any())
      flag("R_Theta[row " + std::to_string(i) + "]", 1.0, sum, "routing row off the simplex");
  }
  if (z.Y.norm() > cfg.bounds.R_Y + tol) flag("Y", cfg.bounds.R_Y, z.Y.norm(), "norm exceeds R_Y");
  if (z.P.norm() > cfg.bounds.R_P + tol) flag("P", cfg.bounds.R_P, z.P.norm(), "norm exceeds R_P");
  if (z.M.norm() > cfg.bounds.R_M + tol) flag("M", cfg.bounds.R_M, z.M.norm(), "norm exceeds R_M");
  for (Eigen::Index i = 0; i < z.rho.size(); ++i) {
    if (z.rho[i] < -tol || z.rho[i] > 1.0 + tol)
      flag("rho[" + std::to_string(i) + "]", 1.0, z.rho[i], "reliability outside [0,1]");
  }
  for (int i = 0; i < cfg.n_policy; ++i) {
    if (z.z[i].norm() > cfg.bounds.R_z[i] + tol)
      flag("z[" + std::to_string(i) + "]", cfg.bounds.R_z[i], z.z[i].norm(),
           "trace norm exceeds R_z");
    if (z.theta[i].norm() > cfg.bounds.R_theta[i] + tol)
      flag("theta[" + std::to_string(i) + "]", cfg.bounds.R_theta[i], z.theta[i].norm(),
           "parameter norm exceeds R_theta");
  }
  return out;
}

StateVector project_state(const StateVector& z, const ArchitectureConfig& cfg) {
  StateVector out = z;
  out.H_L = project_ball(Eigen::MatrixXd(z.H_L), cfg.bounds.R_L);
  for (int i = 0; i < cfg.V; ++i)
    out.X_R.row(i) = project_ball(Eigen::VectorXd(z.X_R.row(i)), cfg.bounds.R_R).transpose();
  out.Q_L = z.Q_L.cwiseMax(cfg.bounds.eps_Q).cwiseMin(cfg.bounds.R_Q);
  auto in_groups = cfg.g_geometric.in_edge_indices();
  for (const auto& group : in_groups) {
    if (group.empty()) continue;
    Eigen::VectorXd w(group.size());
    for (size_t k = 0; k < group.size(); ++k) w[k] = z.W_R[group[k]];
    Eigen::VectorXd p = sparsemax(w);  // Euclidean projection onto the simplex
    for (size_t k = 0; k < group.size(); ++k) out.W_R[group[k]] = p[k];
  }
  for (int i = 0; i < cfg.n_s; ++i)
    out.R_Theta.row(i) = sparsemax(Eigen::VectorXd(z.R_Theta.row(i))).transpose();
  out.Y = project_ball(Eigen::VectorXd(z.Y), cfg.bounds.R_Y);
  out.P = project_ball(Eigen::VectorXd(z.P), cfg.bounds.R_P);
  out.M = project_ball(Eigen::VectorXd(z.M), cfg.bounds.R_M);
  out.rho = z.rho.cwiseMax(0.0).cwiseMin(1.0);
  for (int i = 0; i < cfg.n_policy; ++i) {
    out.z[i] = project_ball(Eigen::VectorXd(z.z[i]), cfg.bounds.R_z[i]);
    out.theta[i] = project_ball(Eigen::VectorXd(z.theta[i]), cfg.bounds.R_theta[i]);
  }
  return out;
}

int delay_index(double tau, double dt) {
  if (!(tau >= 0.0)) throw std::invalid_argument("delay_index: tau must be nonnegative");
  if (!(dt > 0.0)) throw std::invalid_argument("delay_index: dt must be positive");
  return static_cast<int>(std::floor(tau / dt));
}

HistoryBuffer::HistoryBuffer(int max_delay_steps, double dt) : K_(max_delay_steps), dt_(dt) {
  if (K_ < 0) throw std::invalid_argument("history: max delay steps must be nonnegative");
  if (!(dt_ > 0.0)) throw std::invalid_argument("history: dt must be positive");
  slots_.resize(K_ + 1);
}

void HistoryBuffer::init_constant(const StateVector& z0) {
  for (auto& s : slots_) s = z0;
  head_ = 0;
  initialized_ = true;
}

void HistoryBuffer::init_samples(const std::vector<StateVector>& states) {
  if (states.size() != slots_.size())
    throw std::invalid_argument("history: exactly K+1 sampled states required");
  for (size_t i = 0; i < states.size(); ++i) slots_[i] = states[i];
  head_ = static_cast<int>(slots_.size()) - 1;
  initialized_ = true;
}

void HistoryBuffer::push(const StateVector& z) {
  if (!initialized_) throw std::logic_error("history: not initialized");
  head_ = (head_ + 1) % static_cast<int>(slots_.size());
  slots_[head_] = z;
}

const StateVector& HistoryBuffer::current() const { return delayed(0); }

const StateVector& HistoryBuffer::delayed(int n) const {
  if (!initialized_) throw std::logic_error("history: not initialized");
  if (n < 0 || n > K_) throw std::invalid_argument("history: delay index exceeds buffer depth");
  int idx = (head_ - n) % static_cast<int>(slots_.size());
  if (idx < 0) idx += static_cast<int>(slots_.size());
  return slots_[idx];
}

AssumptionReport check_assumptions(const ArchitectureConfig& cfg, const CouplingKernel& kernel,
                                   const FieldParams& params) {
  AssumptionReport rep;
  rep.a1_finite_architecture = cfg.T >= 1 && cfg.V >= 1 && cfg.n_s >= 1 &&
                               std::isfinite(cfg.tau_r_to_l) && std::isfinite(cfg.tau_l_to_r) &&
                               cfg.tau_r_to_l >= 0.0 && cfg.tau_l_to_r >= 0.0;
  const DomainBounds& b = cfg.bounds;
  bool radii_ok = b.eps_Q > 0.0 && b.R_Q >= b.eps_Q;
  for (double r : {b.R_L, b.R_R, b.R_Y, b.R_P, b.R_M})
    radii_ok = radii_ok && r > 0.0 && std::isfinite(r);
  for (Eigen::Index i = 0; i < b.R_z.size(); ++i)
    radii_ok = radii_ok && b.R_z[i] > 0.0 && b.R_theta[i] > 0.0;
  rep.a2_compact_domain = radii_ok;
  double budget = cfg.coupling_budget();
  double gate_bound_ok = true;
  if (const auto* g = std::get_if<GatedMixtureKernel>(&kernel.family)) {
    for (size_t r = 0; r < g->gate_bounds.size(); ++r) {
      double spec_bound = r < params.gates_fwd.size() ? params.gates_fwd[r].bound() : 0.0;
      double adj_bound = r < params.gates_adj.size() ? params.gates_adj[r].bound() : 0.0;
      gate_bound_ok = gate_bound_ok && std::max(spec_bound, adj_bound) <= g->gate_bounds[r] + 1e-12;
    }
  }
  rep.a7_closed_regime_constants = cfg.mu_L > 0.0 && cfg.mu_R > 0.0 && cfg.mu_P > 0.0 &&
                                   hs_norm(kernel) <= budget + 1e-9 && gate_bound_ok;
  return rep;
}

}  // namespace refield
