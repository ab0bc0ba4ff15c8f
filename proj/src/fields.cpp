#include "refield/fields.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "refield/simplex.hpp"

namespace refield {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::VectorXd vec(const Eigen::MatrixXd& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

Eigen::MatrixXd unvec(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

Eigen::VectorXd pool(const Eigen::MatrixXd& m) { return m.colwise().mean().transpose(); }

/// Broadcast of subsystem exports (all subsystems; concatenated pooled fields).
Eigen::VectorXd broadcast_vector(const StateVector& z) {
  Eigen::VectorXd b(z.H_L.cols() + z.X_R.cols());
  b << pool(z.H_L), pool(z.X_R);
  return b;
}

WeightedGraph with_weights(const WeightedGraph& g, const Eigen::VectorXd& w) {
  WeightedGraph out = g;
  out.weights = w;
  return out;
}

/// Edge index of the reverse arc, or -1.
std::vector<int> reverse_edge_index(const WeightedGraph& g) {
  std::map<std::pair<int, int>, int> first;
  for (int k = 0; k < g.edge_count(); ++k)
    first.emplace(g.edges[k], k);
  std::vector<int> rev(g.edge_count(), -1);
  for (int k = 0; k < g.edge_count(); ++k) {
    auto it = first.find({g.edges[k].second, g.edges[k].first});
    if (it != first.end()) rev[k] = it->second;
  }
  return rev;
}

Eigen::VectorXd symmetrized_edge_field(const WeightedGraph& g, const Eigen::VectorXd& w) {
  std::vector<int> rev = reverse_edge_index(g);
  Eigen::VectorXd out(w.size());
  for (int k = 0; k < g.edge_count(); ++k) {
    double back = rev[k] >= 0 ? w[rev[k]] : 0.0;
    out[k] = 0.5 * (w[k] + back);
  }
  return out;
}

}  // namespace

Eigen::VectorXd TanhLinearMap::apply(const Eigen::VectorXd& x) const {
  if (is_zero()) return Eigen::VectorXd();
  Eigen::VectorXd pre = W.size() > 0 ? Eigen::VectorXd(W * x) : Eigen::VectorXd::Zero(b.size());
  if (b.size() > 0) pre += b;
  return gain * pre.array().tanh().matrix();
}

double TanhLinearMap::lipschitz() const {
  if (W.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(W);
  return std::abs(gain) * svd.singularValues()[0];
}

void TanhLinearMap::clip_lipschitz(double bound) {
  double lip = lipschitz();
  if (lip > bound && lip > 0.0) W *= bound / lip;
}

double GateSpec::eval(const Eigen::VectorXd& Y, const Eigen::VectorXd& P) const {
  if (source == Source::none || w.size() == 0) return k_base;
  const Eigen::VectorXd& s = source == Source::valuative ? Y : P;
  return k_base + sigma * std::tanh(w.dot(s));
}

AuxState AuxState::zeros(const ArchitectureConfig& cfg) {
  AuxState a;
  (void)cfg;
  return a;
}

namespace {

void ensure_aux(AuxState& aux, const ArchitectureConfig& cfg, const FieldParams& params) {
  if (aux.h.size() != params.homeostat.n_u) aux.h = Eigen::VectorXd::Zero(params.homeostat.n_u);
  if (aux.u_prev.size() != params.homeostat.n_u)
    aux.u_prev = Eigen::VectorXd::Zero(params.homeostat.n_u);
  if (aux.delta_theta.size() != static_cast<size_t>(cfg.n_policy)) {
    aux.delta_theta.assign(cfg.n_policy, Eigen::VectorXd::Zero(cfg.n_actions));
  }
}

}  // namespace

// ---- individual field maps --------------------------------------------------

Eigen::MatrixXd symbolic_reaction(const StateVector& z, const ArchitectureConfig& cfg,
                                  const FieldParams& params) {
  const SymbolicParams& sp = params.symbolic;
  Eigen::MatrixXd reaction = -sp.alpha_H * z.H_L;
  if (sp.offset.size() > 0) reaction += sp.offset;
  if (!sp.phi.is_zero()) {
    Eigen::VectorXd feat(z.H_L.size() + z.H_L.cols() + z.X_R.cols() + z.P.size() + z.M.size());
    feat << vec(z.H_L), broadcast_vector(z), z.P, z.M;
    reaction += unvec(sp.phi.apply(feat), cfg.T, cfg.d_L);
  }
  return reaction;
}

Eigen::MatrixXd symbolic_rhs(const StateVector& z, const Eigen::MatrixXd& c_rl,
                             const Eigen::VectorXd& u, const ArchitectureConfig& cfg,
                             const FieldParams& params) {
  (void)u;
  Eigen::MatrixXd diffusion = laplacian_apply(with_weights(cfg.g_symbolic, z.Q_L), z.H_L);
  return -diffusion + symbolic_reaction(z, cfg, params) + c_rl;
}

Eigen::MatrixXd geometric_reaction(const StateVector& z, const ArchitectureConfig& cfg,
                                   const FieldParams& params) {
  const GeometricParams& gp = params.geometric;
  Eigen::MatrixXd reaction = -gp.alpha_X * z.X_R;
  if (gp.offset.size() > 0) reaction += gp.offset;
  if (!gp.phi_local.is_zero()) {
    Eigen::VectorXd wbar = symmetrized_edge_field(cfg.g_geometric, z.W_R);
    for (int i = 0; i < cfg.V; ++i) {
      Eigen::VectorXd agg = Eigen::VectorXd::Zero(cfg.d_R);
      double s_i = 0.0;
      for (int k = 0; k < cfg.g_geometric.edge_count(); ++k) {
        const auto& [a, b] = cfg.g_geometric.edges[k];
        if (b != i || wbar[k] <= 0.0) continue;  // active support only
        agg += wbar[k] * z.X_R.row(a).transpose();
        s_i += wbar[k] * (gp.edge_feat.size() > k ? gp.edge_feat[k] : 0.0);
      }
      Eigen::VectorXd feat(2 * cfg.d_R + 1);
      feat << z.X_R.row(i).transpose(), agg, s_i;
      reaction.row(i) += gp.phi_local.apply(feat).transpose();
    }
  }
  return reaction;
}

Eigen::MatrixXd geometric_rhs(const StateVector& z, const Eigen::MatrixXd& c_lr,
                              const Eigen::VectorXd& u, const ArchitectureConfig& cfg,
                              const FieldParams& params) {
  (void)u;
  double mu_ne = neuromod_readout(z.Y, params.neuromod)[kMuNE];
  AwarenessField aw = awareness_field(z.X_R, mu_ne, z.P, cfg, params);
  Eigen::MatrixXd diffusion = laplacian_apply(with_weights(cfg.g_geometric, aw.conductance), z.X_R);
  return -diffusion + geometric_reaction(z, cfg, params) + c_lr;
}

Eigen::VectorXd valuative_rhs(const Eigen::VectorXd& Y, const Eigen::MatrixXd& H,
                              const Eigen::MatrixXd& X, const Eigen::VectorXd& P,
                              const Eigen::VectorXd& h, double eps_pred, double novelty,
                              double outcome_r, const FieldParams& params) {
  const ValuativeParams& vp = params.valuative;
  Eigen::VectorXd out = -vp.kappa_Y * Y;
  if (vp.a_Y != 0.0) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(Y.size());
    if (vp.w_H.size() > 0) r += vp.w_H * (vec(H) - vp.c_H);
    if (vp.w_X.size() > 0) r += vp.w_X * (vec(X) - vp.c_X);
    if (vp.w_P.size() > 0) r += vp.w_P * P;
    if (vp.w_h.size() > 0) r += vp.w_h * h;
    if (vp.w_aux.size() > 0) r += vp.w_aux * Eigen::Vector3d(eps_pred, novelty, outcome_r);
    out += vp.a_Y * r.array().tanh().matrix();
  }
  return out;
}

Eigen::VectorXd executive_rhs(const Eigen::VectorXd& P, const Eigen::MatrixXd& H,
                              const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                              const std::vector<Eigen::VectorXd>& delta_theta,
                              const FieldParams& params) {
  const ExecutiveParams& ep = params.executive;
  Eigen::VectorXd out = -ep.kappa_P * P;
  if (ep.W_P.size() > 0) out += (ep.W_P * P).array().tanh().matrix();
  if (ep.a_P != 0.0) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(P.size());
    if (ep.w_H.size() > 0) r += ep.w_H * (vec(H) - ep.c_H);
    if (ep.w_X.size() > 0) r += ep.w_X * (vec(X) - ep.c_X);
    if (ep.w_Y.size() > 0) r += ep.w_Y * Y;
    if (ep.w_dtheta.size() > 0) {
      Eigen::VectorXd dt_all(ep.w_dtheta.cols());
      Eigen::Index at = 0;
      for (const auto& d : delta_theta) {
        dt_all.segment(at, d.size()) = d;
        at += d.size();
      }
      r += ep.w_dtheta * dt_all;
    }
    out += ep.a_P * r.array().tanh().matrix();
  }
  return out;
}

Eigen::VectorXd neuromod_readout(const Eigen::VectorXd& Y, const NeuromodParams& params) {
  Eigen::VectorXd logits = Eigen::VectorXd::Zero(5);
  if (params.W.size() > 0) logits = params.W * Y;
  if (params.b.size() > 0) logits += params.b;
  return logits.unaryExpr([](double v) { return sigmoid(v); });
}

Eigen::VectorXd precision_field(double mu_ACh, const ArchitectureConfig& cfg,
                                const FieldParams& params) {
  const PrecisionParams& pp = params.precision;
  if (!(mu_ACh > 0.0 && mu_ACh < 1.0))
    throw std::invalid_argument("precision_field: mu_ACh must lie in (0,1)");
  int m = cfg.g_symbolic.edge_count();
  Eigen::VectorXd a = pp.a_logits.size() == m ? pp.a_logits : Eigen::VectorXd::Zero(m);
  Eigen::VectorXd b = pp.b_logits.size() == m ? pp.b_logits : Eigen::VectorXd::Zero(m);
  Eigen::VectorXd q(m);
  for (int e = 0; e < m; ++e)
    q[e] = cfg.bounds.eps_Q + (cfg.bounds.R_Q - cfg.bounds.eps_Q) * sigmoid(a[e] + mu_ACh * b[e]);
  return q;
}

Eigen::VectorXd scenario_precision_conductance(const Eigen::VectorXd& Y,
                                               const ArchitectureConfig& cfg,
                                               const FieldParams& params) {
  const PrecisionParams& pp = params.precision;
  double gate = 1.0 + pp.delta_Q * std::tanh(pp.w_gate.size() > 0 ? pp.w_gate.dot(Y) : 0.0);
  return gate * cfg.g_symbolic.weights;
}

AwarenessField awareness_field(const Eigen::MatrixXd& X, double mu_NE, const Eigen::VectorXd& P,
                               const ArchitectureConfig& cfg, const FieldParams& params) {
  const AwarenessParams& ap = params.awareness;
  const WeightedGraph& g = cfg.g_geometric;
  AwarenessField out;
  int m = g.edge_count();

  Eigen::VectorXd logits = ap.omega_base.size() == m ? ap.omega_base : Eigen::VectorXd::Zero(m);
  if (ap.omega_x_scale != 0.0) {
    for (int k = 0; k < m; ++k) {
      const auto& [i, j] = g.edges[k];
      logits[k] += ap.omega_x_scale * X.row(i).dot(X.row(j));
    }
  }
  if (ap.ne_shift.size() == m) logits += mu_NE * ap.ne_shift;

  out.simplex_weights = Eigen::VectorXd::Zero(m);
  auto in_groups = g.in_edge_indices();
  for (const auto& group : in_groups) {
    if (group.empty()) continue;
    Eigen::VectorXd gl(group.size());
    for (size_t k = 0; k < group.size(); ++k) gl[k] = logits[group[k]];
    Eigen::VectorXd w = sparsemax(gl);
    for (size_t k = 0; k < group.size(); ++k) out.simplex_weights[group[k]] = w[k];
  }

  if (ap.mode == AwarenessMode::scalar_gate) {
    double gate = 1.0 + ap.delta_W * std::tanh(ap.w_gate.size() > 0 ? ap.w_gate.dot(P) : 0.0);
    out.conductance = gate * g.weights;
  } else {
    // residual backbone plus nonnegative symmetrized overlay
    out.conductance = g.weights + ap.overlay_scale * symmetrized_edge_field(g, out.simplex_weights);
  }
  return out;
}

InterconnectorSignals interconnector_signals(
    const HistoryBuffer& history, const Eigen::MatrixXd& r_theta, const CouplingKernel& kernel,
    const std::optional<Eigen::MatrixXd>& alpha, const std::optional<Eigen::MatrixXd>& beta,
    const std::vector<double>& gates_fwd, const std::vector<double>& gates_adj, int n_rl,
    int n_lr) {
  if (n_rl > history.max_delay_steps() || n_lr > history.max_delay_steps())
    throw std::invalid_argument("interconnector_signals: insufficient history depth");
  InterconnectorSignals out;
  // gates are the cross entries of the routing matrix (subsystem 0 = symbolic,
  // subsystem 1 = geometric)
  out.gate_rl = r_theta.rows() > 1 ? r_theta(0, 1) : 1.0;
  out.gate_lr = r_theta.rows() > 1 ? r_theta(1, 0) : 1.0;
  const Eigen::MatrixXd& x_del = history.delayed(n_rl).X_R;
  const Eigen::MatrixXd& h_del = history.delayed(n_lr).H_L;
  out.C_RL = out.gate_rl * apply_forward(kernel, alpha, x_del, gates_fwd);
  out.C_LR = out.gate_lr * apply_adjoint(kernel, beta, h_del, gates_adj);
  return out;
}

Eigen::VectorXd homeostatic_step(const Eigen::VectorXd& h, const Eigen::VectorXd& u,
                                 double kappa_h, double B_u, double dt) {
  if (!(dt > 0.0 && dt < 1.0 / kappa_h))
    throw std::invalid_argument("homeostatic_step: need 0 < dt < 1/kappa_h");
  Eigen::VectorXd f = u;
  double n = f.norm();
  if (n > B_u && n > 0.0) f *= B_u / n;
  return (1.0 - kappa_h * dt) * h + dt * f;
}

double reliability_kernel(double x, const ReliabilityParams& params) {
  switch (params.kernel) {
    case ReliabilityKernelKind::gaussian:
      return std::exp(-x * x);
    case ReliabilityKernelKind::inverse:
      return 1.0 / (1.0 + x);
    case ReliabilityKernelKind::tent:
      return std::max(0.0, 1.0 - x / params.tent_sigma);
  }
  return 0.0;
}

double reliability_update(double rho, const Eigen::VectorXd& eps, double alpha,
                          const ReliabilityParams& params, int d_i) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("reliability_update: rho outside [0,1]");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("reliability_update: alpha must lie in (0,1)");
  if (d_i < 1) throw std::invalid_argument("reliability_update: d_i must be positive");
  double x = eps.norm() / std::sqrt(static_cast<double>(d_i));
  return (1.0 - alpha) * rho + alpha * reliability_kernel(x, params);
}

Eigen::VectorXd policy_score(const Eigen::VectorXd& theta, int action, double eps_floor) {
  const Eigen::Index m = theta.size();
  if (action < 0 || action >= m) throw std::invalid_argument("policy_score: action out of range");
  if (m == 1) return Eigen::VectorXd::Zero(1);
  Eigen::VectorXd p = sparsemax(theta);
  Eigen::VectorXd pe = epsilon_floor(p, eps_floor);
  // d pi^eps(a) / d theta = (1-eps) J_sparsemax^T e_a on the smooth piece
  std::vector<Eigen::Index> support;
  for (Eigen::Index i = 0; i < m; ++i)
    if (p[i] > 0.0) support.push_back(i);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(m);
  bool a_in_support = p[action] > 0.0;
  if (a_in_support) {
    double inv = 1.0 / static_cast<double>(support.size());
    for (Eigen::Index j : support) grad[j] = (j == action ? 1.0 : 0.0) - inv;
  }
  return (1.0 - eps_floor) / pe[action] * grad;
}

PolicyUpdate eligibility_policy_update(const Eigen::VectorXd& z, const Eigen::VectorXd& theta,
                                       double delta, const Eigen::VectorXd& score,
                                       double lambda_step, double eta_step, double lambda_reg,
                                       double D, double R_theta) {
  if (std::abs(delta) > D + 1e-12)
    throw std::invalid_argument("eligibility_policy_update: |delta| exceeds the credit bound D");
  PolicyUpdate out;
  out.z_next = lambda_step * z + score;
  out.delta_theta = eta_step * (delta * z - lambda_reg * theta);  // old trace
  out.theta_next = project_ball(Eigen::VectorXd(theta + out.delta_theta), R_theta);
  return out;
}

Eigen::VectorXd memory_write(const Eigen::MatrixXd& H, const Eigen::VectorXd& Y,
                             const FieldParams& params) {
  const MemoryParams& mp = params.memory;
  if (mp.phi.is_zero()) return Eigen::VectorXd::Zero(mp.phi.b.size() > 0 ? mp.phi.b.size() : 1);
  Eigen::VectorXd feat(H.cols() + Y.size());
  feat << pool(H), Y;
  if (mp.c_in.size() == feat.size()) feat -= mp.c_in;
  Eigen::VectorXd write = mp.phi.apply(feat);
  double n = write.norm();
  if (n > mp.C_M && n > 0.0) write *= mp.C_M / n;
  return write;
}

Eigen::VectorXd memory_update(const Eigen::VectorXd& M, double g_M, const Eigen::MatrixXd& H_next,
                              const Eigen::VectorXd& Y_next, const FieldParams& params) {
  const MemoryParams& mp = params.memory;
  if (!(g_M >= mp.eps_M && g_M <= 1.0 - mp.eps_M))
    throw std::invalid_argument("memory_update: gate outside [eps_M, 1 - eps_M]");
  Eigen::VectorXd write = mp.phi.is_zero() ? Eigen::VectorXd::Zero(M.size())
                                           : memory_write(H_next, Y_next, params);
  return (1.0 - g_M) * M + g_M * write;
}

Eigen::MatrixXd routing_update(const Eigen::MatrixXd& scores, const Eigen::VectorXd& rho,
                               double beta_rho) {
  if (!scores.allFinite()) throw std::invalid_argument("routing_update: non-finite scores");
  Eigen::MatrixXd out(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::VectorXd row = scores.row(r).transpose();
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
      if (c < rho.size()) row[c] += beta_rho * rho[c];
    }
    out.row(r) = sparsemax(row).transpose();
  }
  return out;
}

std::vector<double> gate_values(const std::vector<GateSpec>& specs, const Eigen::VectorXd& Y,
                                const Eigen::VectorXd& P) {
  std::vector<double> g(specs.size());
  for (size_t i = 0; i < specs.size(); ++i) g[i] = specs[i].eval(Y, P);
  return g;
}

// ---- validation and stiffness ----------------------------------------------

double estimate_stiffness(const ArchitectureConfig& cfg, const FieldParams& params) {
  WeightedGraph gs = cfg.g_symbolic;
  gs.weights = Eigen::VectorXd::Constant(gs.edge_count(), cfg.bounds.R_Q);
  double lam_sym = gs.edge_count() > 0 ? laplacian_spectrum(symmetrize_conductance(gs)).maxCoeff() : 0.0;

  WeightedGraph gg = cfg.g_geometric;
  if (params.awareness.mode == AwarenessMode::scalar_gate) {
    gg.weights = (1.0 + params.awareness.delta_W) * gg.weights;
  } else {
    // symmetrized simplex overlays are at most one per edge
    gg.weights = gg.weights.array() + params.awareness.overlay_scale;
  }
  double lam_geo = gg.edge_count() > 0 ? laplacian_spectrum(symmetrize_conductance(gg)).maxCoeff() : 0.0;

  double c_k = cfg.coupling_budget();
  double lip_y = params.valuative.a_Y *
                 (1.0 + params.valuative.w_H.norm() + params.valuative.w_X.norm() +
                  params.valuative.w_P.norm());
  double lip_p = (params.executive.W_P.size() > 0 ? params.executive.W_P.norm() : 0.0) +
                 params.executive.a_P * (1.0 + params.executive.w_H.norm() +
                                         params.executive.w_X.norm() + params.executive.w_Y.norm());
  double rate_aux = std::max({1.0, params.routing.relax_rate, params.memory.gate_rate,
                              params.reliability.rate,
                              params.policy.lambda_z.size() > 0 ? params.policy.lambda_z.maxCoeff() : 0.0,
                              params.homeostat.kappa_h});
  return std::max({lam_sym + params.symbolic.alpha_H + params.symbolic.phi.lipschitz() + c_k,
                   lam_geo + params.geometric.alpha_X + params.geometric.phi_local.lipschitz() + c_k,
                   params.valuative.kappa_Y + lip_y, params.executive.kappa_P + lip_p, rate_aux});
}

void validate_config(const ArchitectureConfig& cfg, const FieldParams& params) {
  cfg.check_valid();
  const DomainBounds& b = cfg.bounds;

  if (params.symbolic.phi.lipschitz() >= params.symbolic.alpha_H)
    throw std::invalid_argument("config: Lip(phi_L) must be below the symbolic damping alpha_H");
  if (params.symbolic.offset.size() > 0 &&
      (params.symbolic.offset.rows() != cfg.T || params.symbolic.offset.cols() != cfg.d_L))
    throw std::invalid_argument("config: symbolic offset shape mismatch");

  // neighbor aggregation doubles the effective Lipschitz constant of phi_local
  if (2.0 * params.geometric.phi_local.lipschitz() >= params.geometric.alpha_X)
    throw std::invalid_argument("config: 2 Lip(phi_R) must be below the geometric damping alpha_X");
  if (params.geometric.offset.size() > 0 &&
      (params.geometric.offset.rows() != cfg.V || params.geometric.offset.cols() != cfg.d_R))
    throw std::invalid_argument("config: geometric offset shape mismatch");

  if (cfg.mu_L > params.symbolic.alpha_H - params.symbolic.phi.lipschitz() + 1e-12)
    throw std::invalid_argument("config: declared mu_L exceeds the constructed dissipativity");
  if (cfg.mu_R > params.geometric.alpha_X - 2.0 * params.geometric.phi_local.lipschitz() + 1e-12)
    throw std::invalid_argument("config: declared mu_R exceeds the constructed dissipativity");

  if (params.valuative.a_Y < 0.0 ||
      params.valuative.a_Y * std::sqrt(static_cast<double>(cfg.n_Y)) >
          params.valuative.kappa_Y * b.R_Y + 1e-12)
    throw std::invalid_argument("config: viability requires a_Y sqrt(n_Y) <= kappa_Y R_Y");

  double wp_op = 0.0;
  if (params.executive.W_P.size() > 0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(params.executive.W_P);
    wp_op = svd.singularValues()[0];
  }
  if (wp_op >= params.executive.kappa_P)
    throw std::invalid_argument("config: ||W_P||_op must be below the executive decay kappa_P");
  if (cfg.mu_P > params.executive.kappa_P - wp_op + 1e-12)
    throw std::invalid_argument("config: declared mu_P exceeds kappa_P - ||W_P||_op");
  if (params.executive.a_P < 0.0 ||
      wp_op * b.R_P + params.executive.a_P * std::sqrt(static_cast<double>(cfg.n_P)) >
          params.executive.kappa_P * b.R_P + 1e-12)
    throw std::invalid_argument("config: executive viability margin fails at the P boundary");

  if (params.precision.mode == PrecisionMode::logistic &&
      params.precision.b_logits.size() > 0 && (params.precision.b_logits.array() < 0.0).any())
    throw std::invalid_argument("config: precision modulation weights b_L must be nonnegative");
  if (params.precision.mode == PrecisionMode::scalar_gate) {
    if (!(params.precision.delta_Q >= 0.0 && params.precision.delta_Q < 1.0))
      throw std::invalid_argument("config: delta_Q must lie in [0,1)");
    // the gated box must sit inside [eps_Q, R_Q]
    if (1.0 - params.precision.delta_Q < b.eps_Q - 1e-12 ||
        1.0 + params.precision.delta_Q > b.R_Q + 1e-12)
      throw std::invalid_argument("config: scalar precision gate leaves the [eps_Q, R_Q] box");
  }

  if (!cfg.g_geometric.positive_support_connected())
    throw std::invalid_argument("config: geometric backbone must be connected");
  if (!cfg.g_symbolic.positive_support_connected())
    throw std::invalid_argument("config: symbolic graph must be connected");
  if (params.awareness.mode == AwarenessMode::scalar_gate &&
      !(params.awareness.delta_W >= 0.0 && params.awareness.delta_W < 1.0))
    throw std::invalid_argument("config: delta_W must lie in [0,1)");
  if (params.awareness.overlay_scale < 0.0)
    throw std::invalid_argument("config: awareness overlay must be nonnegative");

  if (!(params.memory.eps_M > 0.0 && params.memory.eps_M < 0.5))
    throw std::invalid_argument("config: eps_M must lie in (0, 1/2)");
  if (params.memory.C_M > b.R_M + 1e-12)
    throw std::invalid_argument("config: memory write bound C_M must not exceed R_M");
  double g_hi = cfg.dt * params.memory.gate_rate;
  double g_lo = params.memory.w_gate.size() > 0
                    ? g_hi * sigmoid(-params.memory.w_gate.norm() * b.R_Y)
                    : g_hi;
  if (g_lo < params.memory.eps_M || g_hi > 1.0 - params.memory.eps_M)
    throw std::invalid_argument("config: per-step memory gate leaves [eps_M, 1 - eps_M]");

  if (params.policy.lambda_z.size() != cfg.n_policy || params.policy.eta.size() != cfg.n_policy)
    throw std::invalid_argument("config: one trace leak and learning rate per policy family");
  for (int i = 0; i < cfg.n_policy; ++i) {
    double lam_step = 1.0 - cfg.dt * params.policy.lambda_z[i];
    if (!(lam_step > 0.0 && lam_step < 1.0))
      throw std::invalid_argument("config: per-step trace decay must lie in (0,1)");
    if (cfg.dt * params.policy.eta[i] * params.policy.lambda_reg >= 1.0)
      throw std::invalid_argument("config: per-step eta lambda_reg must be below one");
  }
  if (!(params.policy.D > 0.0)) throw std::invalid_argument("config: credit bound D must be positive");
  if (!(params.policy.eps_floor > 0.0 && params.policy.eps_floor < 1.0))
    throw std::invalid_argument("config: policy flooring epsilon must lie in (0,1)");

  double alpha_step = cfg.dt * params.reliability.rate;
  if (!(alpha_step > 0.0 && alpha_step < 1.0))
    throw std::invalid_argument("config: per-step reliability rate must lie in (0,1)");

  if (!(cfg.dt < 1.0 / params.homeostat.kappa_h))
    throw std::invalid_argument("config: dt must be below 1/kappa_h");

  if (params.routing.base_scores.size() > 0 &&
      (params.routing.base_scores.rows() != cfg.n_s || params.routing.base_scores.cols() != cfg.n_s))
    throw std::invalid_argument("config: routing score shape mismatch");

  int gates = cfg.kernel.gate_count();
  if (static_cast<int>(params.gates_fwd.size()) != gates ||
      static_cast<int>(params.gates_adj.size()) != gates)
    throw std::invalid_argument("config: one gate spec per kernel mixture channel and direction");
  const std::vector<double>* kernel_bounds = nullptr;
  if (const auto* gm = std::get_if<GatedMixtureKernel>(&cfg.kernel.family))
    kernel_bounds = &gm->gate_bounds;
  if (const auto* ga = std::get_if<LowRankGatedAttentionKernel>(&cfg.kernel.family))
    kernel_bounds = &ga->gate_bounds;
  if (kernel_bounds) {
    for (int r = 0; r < gates; ++r) {
      if (params.gates_fwd[r].bound() > (*kernel_bounds)[r] + 1e-12 ||
          params.gates_adj[r].bound() > (*kernel_bounds)[r] + 1e-12)
        throw std::invalid_argument("config: gate spec bound exceeds the kernel gate bound");
    }
  }

  if (params.frozen_auxiliaries && !params.frozen_values)
    throw std::invalid_argument("config: frozen regime requires pinned auxiliary values");

  double bound = 0.1 / estimate_stiffness(cfg, params);
  if (cfg.dt > bound + 1e-15)
    throw std::invalid_argument("config: dt exceeds the explicit-Euler step bound 0.1/stiffness");
}

// ---- the stagewise update ---------------------------------------------------

namespace {

struct TraceWriter {
  StageTrace* trace;
  void rec(const std::string& out, const std::string& stage, std::vector<std::string> inputs) {
    if (trace) trace->records.push_back({out, stage, std::move(inputs)});
  }
};

}  // namespace

bool trace_acyclic(const StageTrace& trace) {
  auto is_source = [](const std::string& name) {
    // current-state, history, and exogenous values carry a ^t / ^{t-n} tag
    return (name.find("^t") != std::string::npos || name.find("^{t-") != std::string::npos) &&
           name.find("^{t+1}") == std::string::npos;
  };
  auto aliases = [](const std::string& out) -> std::vector<std::string> {
    if (out == "mu") return {"mu", "mu_DA", "mu_ACh", "mu_NE", "mu_5HT", "mu_OP"};
    return {out};
  };
  std::set<std::string> all_outputs;
  for (const auto& r : trace.records)
    for (const auto& a : aliases(r.output)) all_outputs.insert(a);

  std::set<std::string> produced;
  for (const auto& r : trace.records) {
    for (const auto& in : r.inputs) {
      if (in == r.output) return false;
      if (all_outputs.count(in)) {
        if (!produced.count(in)) return false;  // consumed before production
      } else if (!is_source(in)) {
        return false;  // hanging name that is neither produced nor a source
      }
    }
    for (const auto& a : aliases(r.output)) produced.insert(a);
  }
  return true;
}

StateVector discrete_step(const HistoryBuffer& history, AuxState& aux, const StepInputs& in,
                          const ArchitectureConfig& cfg, const FieldParams& params,
                          StageTrace* trace) {
  const StateVector& z = history.current();
  ensure_aux(aux, cfg, params);
  const bool frozen = params.frozen_auxiliaries;
  const StateVector* pin = frozen ? &*params.frozen_values : nullptr;
  TraceWriter tw{trace};
  const double dt = cfg.dt;

  Eigen::VectorXd u = in.u.size() == params.homeostat.n_u
                          ? in.u
                          : Eigen::VectorXd::Zero(params.homeostat.n_u);

  // step-opening broadcast and stagewise-derived scalars
  Eigen::VectorXd b_theta = broadcast_vector(z);
  tw.rec("B_Theta^t", "open", {"H_L^t", "X_R^t", "R_Theta^t"});
  const StateVector& z_prev = history.max_delay_steps() >= 1 ? history.delayed(1) : z;
  double eps_pred = (z.X_R - z_prev.X_R).norm();
  tw.rec("eps_pred^t", "open", {"X_R^t", "X_R^{t-1}"});
  double novelty = (u - aux.u_prev).norm();
  tw.rec("n^t", "open", {"u^t", "u^{t-1}"});
  double outcome_r = in.outcome_r;

  // Stage 1: neuromodulatory signals
  const Eigen::VectorXd& y_for_mu = frozen ? pin->Y : z.Y;
  Eigen::VectorXd mu = neuromod_readout(y_for_mu, params.neuromod);
  tw.rec("mu", "1", {"Y^t"});

  // Stage 2: precision and awareness fields
  Eigen::VectorXd q_next;
  if (frozen) {
    q_next = pin->Q_L;
  } else if (params.precision.mode == PrecisionMode::logistic) {
    q_next = precision_field(mu[kMuACh], cfg, params);
    tw.rec("Q_L^{t+1}", "2", {"mu_ACh"});
  } else {
    q_next = scenario_precision_conductance(z.Y, cfg, params);
    tw.rec("Q_L^{t+1}", "2", {"Y^t"});
  }
  Eigen::VectorXd w_next;
  Eigen::VectorXd cond_geo;
  {
    const Eigen::MatrixXd& x_for_aw = frozen ? pin->X_R : z.X_R;
    const Eigen::VectorXd& p_for_aw = frozen ? pin->P : z.P;
    AwarenessField aw = awareness_field(x_for_aw, mu[kMuNE], p_for_aw, cfg, params);
    w_next = frozen ? pin->W_R : aw.simplex_weights;
    cond_geo = aw.conductance;
    if (!frozen) {
      std::vector<std::string> ins{"X_R^t", "mu_NE"};
      if (params.awareness.mode == AwarenessMode::scalar_gate) ins.push_back("P^t");
      tw.rec("W_R^{t+1}", "2", std::move(ins));
    }
  }

  // Stage 3: interconnector signals
  int n_rl = delay_index(cfg.tau_r_to_l, dt);
  int n_lr = delay_index(cfg.tau_l_to_r, dt);
  std::optional<Eigen::MatrixXd> alpha, beta;
  if (const auto* attn = std::get_if<AttentionKernel>(&cfg.kernel.family)) {
    const StateVector& sel = frozen ? *pin : z;  // fixed operators in the closed regime
    auto [a, b] = attention_alpha_beta(*attn, sel.H_L, sel.X_R);
    alpha = a;
    beta = b;
  }
  const Eigen::VectorXd& y_gate = frozen ? pin->Y : z.Y;
  const Eigen::VectorXd& p_gate = frozen ? pin->P : z.P;
  std::vector<double> gf = gate_values(params.gates_fwd, y_gate, p_gate);
  std::vector<double> ga = gate_values(params.gates_adj, y_gate, p_gate);
  const Eigen::MatrixXd& r_for_gates = frozen ? pin->R_Theta : z.R_Theta;
  InterconnectorSignals ic =
      interconnector_signals(history, r_for_gates, cfg.kernel, alpha, beta, gf, ga, n_rl, n_lr);
  {
    std::vector<std::string> in_rl{"X_R^{t-n}", "R_Theta^t"};
    std::vector<std::string> in_lr{"H_L^{t-n}", "R_Theta^t"};
    if (!params.gates_fwd.empty()) in_rl.push_back("Y^t");
    if (!params.gates_adj.empty()) in_lr.push_back("P^t");
    if (std::holds_alternative<AttentionKernel>(cfg.kernel.family)) {
      in_rl.insert(in_rl.end(), {"H_L^t", "X_R^t"});
      in_lr.insert(in_lr.end(), {"H_L^t", "X_R^t"});
    }
    tw.rec("C_{R->L}", "3", std::move(in_rl));
    tw.rec("C_{L->R}", "3", std::move(in_lr));
  }

  // Stage 4: symbolic state
  StateVector z_q = z;  // evaluation state with the stage-2 precision field
  z_q.Q_L = q_next;
  Eigen::MatrixXd rhs_h = symbolic_rhs(z_q, ic.C_RL, u, cfg, params);
  Eigen::MatrixXd h_next = project_ball(Eigen::MatrixXd(z.H_L + dt * rhs_h), cfg.bounds.R_L);
  {
    std::vector<std::string> ins{"H_L^t", "C_{R->L}", "Q_L^{t+1}"};
    if (!params.symbolic.phi.is_zero()) ins.insert(ins.end(), {"B_Theta^t", "P^t", "M^t"});
    tw.rec("H_L^{t+1}", "4", std::move(ins));
  }

  // Stage 5: geometric state, using the stage-2 awareness field
  StateVector z_w = z;
  z_w.W_R = w_next;
  Eigen::MatrixXd rhs_x = -laplacian_apply(with_weights(cfg.g_geometric, cond_geo), z.X_R) +
                          geometric_reaction(z_w, cfg, params) + ic.C_LR;
  Eigen::MatrixXd x_next = z.X_R + dt * rhs_x;
  for (int i = 0; i < cfg.V; ++i)
    x_next.row(i) = project_ball(Eigen::VectorXd(x_next.row(i)), cfg.bounds.R_R).transpose();
  tw.rec("X_R^{t+1}", "5", {"X_R^t", "C_{L->R}", "W_R^{t+1}"});

  // Stage 6: valuative state
  Eigen::VectorXd y_next;
  if (frozen) {
    y_next = pin->Y;
  } else {
    Eigen::VectorXd rhs_y =
        valuative_rhs(z.Y, h_next, x_next, z.P, aux.h, eps_pred, novelty, outcome_r, params);
    y_next = project_ball(Eigen::VectorXd(z.Y + dt * rhs_y), cfg.bounds.R_Y);
    tw.rec("Y^{t+1}", "6",
           {"Y^t", "h^t", "eps_pred^t", "n^t", "r^t", "H_L^{t+1}", "X_R^{t+1}", "P^t"});
  }

  // Stage 7: routing matrix
  Eigen::MatrixXd r_next;
  if (frozen) {
    r_next = pin->R_Theta;
  } else {
    Eigen::MatrixXd scores = params.routing.base_scores.size() > 0
                                 ? params.routing.base_scores
                                 : Eigen::MatrixXd::Zero(cfg.n_s, cfg.n_s);
    if (params.routing.w_sal_h != 0.0)
      scores.col(0).array() += params.routing.w_sal_h * (h_next.mean() + y_next.mean());
    if (params.routing.w_sal_x != 0.0 && cfg.n_s > 1)
      scores.col(1).array() += params.routing.w_sal_x * x_next.mean();
    Eigen::MatrixXd target = routing_update(scores, z.rho, params.routing.beta_rho);
    double lam = std::min(1.0, dt * params.routing.relax_rate);
    r_next = (1.0 - lam) * z.R_Theta + lam * target;
    tw.rec("R_Theta^{t+1}", "7", {"H_L^{t+1}", "X_R^{t+1}", "Y^{t+1}", "rho^t", "R_Theta^t"});
  }

  // Stage 8.1: credit signal from Y^{t+1}
  double mu_da_next = neuromod_readout(y_next, params.neuromod)[kMuDA];
  double delta = params.policy.signed_delta ? 2.0 * mu_da_next - 1.0 : mu_da_next;
  delta = std::clamp(delta, -params.policy.D, params.policy.D);
  tw.rec("delta", "8.1", {"Y^{t+1}"});

  // Stage 8.2: reliability from subsystem prediction errors
  Eigen::VectorXd rho_next(cfg.n_sub);
  if (frozen) {
    rho_next = pin->rho;
  } else {
    double alpha_step = dt * params.reliability.rate;
    Eigen::VectorXd inst_rl = vec(ic.C_RL) - vec(ic.gate_rl * apply_forward(cfg.kernel, alpha, z.X_R, gf));
    Eigen::VectorXd inst_lr = vec(ic.C_LR) - vec(ic.gate_lr * apply_adjoint(cfg.kernel, beta, z.H_L, ga));
    Eigen::VectorXd self_err(z.Q_L.size() + z.W_R.size() + z.R_Theta.size() + z.Y.size());
    self_err << q_next - z.Q_L, w_next - z.W_R, vec(r_next) - vec(z.R_Theta), y_next - z.Y;
    for (int i = 0; i < cfg.n_sub; ++i) {
      Eigen::VectorXd eps;
      switch (i % 5) {
        case 0: eps = vec(x_next - z.X_R); break;           // world model, geometric
        case 1: eps = vec(h_next - z.H_L); break;           // world model, symbolic
        case 2: eps = self_err; break;                      // self model
        case 3: eps = inst_rl; break;                       // translation R->L
        default: eps = inst_lr; break;                      // translation L->R
      }
      rho_next[i] = reliability_update(z.rho[i], eps, alpha_step, params.reliability,
                                       static_cast<int>(eps.size()));
    }
    // eps_i^t compares step-t predictions against the end-of-step observations
    tw.rec("rho^{t+1}", "8.2", {"rho^t", "eps_i^t", "H_L^{t+1}", "X_R^{t+1}"});
  }

  // Stage 8.3: eligibility traces and policy parameters (old-trace convention)
  std::vector<Eigen::VectorXd> z_next_tr(cfg.n_policy), theta_next(cfg.n_policy),
      dtheta(cfg.n_policy);
  if (frozen) {
    z_next_tr = pin->z;
    theta_next = pin->theta;
    for (int i = 0; i < cfg.n_policy; ++i) dtheta[i] = Eigen::VectorXd::Zero(cfg.n_actions);
  } else {
    for (int i = 0; i < cfg.n_policy; ++i) {
      Eigen::VectorXd score = dt * policy_score(z.theta[i], in.action, params.policy.eps_floor);
      PolicyUpdate up = eligibility_policy_update(
          z.z[i], z.theta[i], delta, score, 1.0 - dt * params.policy.lambda_z[i],
          dt * params.policy.eta[i], params.policy.lambda_reg, params.policy.D,
          cfg.bounds.R_theta[i]);
      z_next_tr[i] = project_ball(Eigen::VectorXd(up.z_next), cfg.bounds.R_z[i]);
      theta_next[i] = up.theta_next;
      dtheta[i] = up.delta_theta;
    }
    tw.rec("z^{t+1}", "8.3", {"z^t", "theta^t", "pi(theta^t)", "A^t"});
    tw.rec("Delta_theta^t", "8.3", {"z^t", "theta^t", "delta"});
    tw.rec("theta^{t+1}", "8.3", {"theta^t", "Delta_theta^t"});
  }

  // Stage 8.4: executive state (uses Delta theta^t and Y^{t+1}, not M^{t+1})
  Eigen::VectorXd rhs_p = executive_rhs(z.P, h_next, x_next, y_next, dtheta, params);
  Eigen::VectorXd p_next = project_ball(Eigen::VectorXd(z.P + dt * rhs_p), cfg.bounds.R_P);
  tw.rec("P^{t+1}", "8.4", {"P^t", "Delta_theta^t", "Y^{t+1}", "H_L^{t+1}", "X_R^{t+1}"});

  // Stage 8.5: memory consolidation (uses H_L^{t+1} and Y^{t+1}, not P^{t+1})
  Eigen::VectorXd m_next;
  if (frozen) {
    m_next = pin->M;
  } else {
    double rate_mod =
        params.memory.w_gate.size() > 0 ? sigmoid(params.memory.w_gate.dot(z.Y)) : 1.0;
    double g_step = std::clamp(dt * params.memory.gate_rate * rate_mod, params.memory.eps_M,
                               1.0 - params.memory.eps_M);
    m_next = memory_update(z.M, g_step, h_next, y_next, params);
    m_next = project_ball(Eigen::VectorXd(m_next), cfg.bounds.R_M);
    tw.rec("M^{t+1}", "8.5", {"M^t", "H_L^{t+1}", "Y^{t+1}", "g_M(Z^t)"});
  }

  // advance the stagewise-derived record
  aux.h = homeostatic_step(aux.h, u, params.homeostat.kappa_h, params.homeostat.B_u, dt);
  aux.u_prev = u;
  aux.eps_pred = eps_pred;
  aux.novelty = novelty;
  aux.delta_credit = delta;
  aux.C_RL = ic.C_RL;
  aux.C_LR = ic.C_LR;
  aux.delta_theta = dtheta;

  StateVector out;
  out.H_L = h_next;
  out.X_R = x_next;
  out.Q_L = q_next;
  out.W_R = w_next;
  out.R_Theta = r_next;
  out.Y = y_next;
  out.P = p_next;
  out.M = m_next;
  out.rho = rho_next;
  out.z = z_next_tr;
  out.theta = theta_next;

  if (!out.all_finite())
    throw std::runtime_error("discrete_step: non-finite state component");
  auto violations = validate_state(out, cfg, 1e-7);
  if (!violations.empty())
    throw std::runtime_error("discrete_step: domain violation after projection on " +
                             violations.front().component);
  return out;
}

StateVector continuous_rhs(const StateVector& z, const StateVector& z_delay_rl,
                           const StateVector& z_delay_lr, const Eigen::VectorXd& u,
                           const ArchitectureConfig& cfg, const FieldParams& params) {
  StateVector v = z;
  Eigen::VectorXd mu = neuromod_readout(z.Y, params.neuromod);

  std::optional<Eigen::MatrixXd> alpha, beta;
  if (const auto* attn = std::get_if<AttentionKernel>(&cfg.kernel.family)) {
    auto [a, b] = attention_alpha_beta(*attn, z.H_L, z.X_R);
    alpha = a;
    beta = b;
  }
  std::vector<double> gf = gate_values(params.gates_fwd, z.Y, z.P);
  std::vector<double> ga = gate_values(params.gates_adj, z.Y, z.P);
  double gate_rl = cfg.n_s > 1 ? z.R_Theta(0, 1) : 1.0;
  double gate_lr = cfg.n_s > 1 ? z.R_Theta(1, 0) : 1.0;
  Eigen::MatrixXd c_rl = gate_rl * apply_forward(cfg.kernel, alpha, z_delay_rl.X_R, gf);
  Eigen::MatrixXd c_lr = gate_lr * apply_adjoint(cfg.kernel, beta, z_delay_lr.H_L, ga);

  v.H_L = symbolic_rhs(z, c_rl, u, cfg, params);
  v.X_R = geometric_rhs(z, c_lr, u, cfg, params);

  // auxiliary fields: unit-rate relaxation toward their stagewise targets
  Eigen::VectorXd q_target = params.precision.mode == PrecisionMode::logistic
                                 ? precision_field(mu[kMuACh], cfg, params)
                                 : scenario_precision_conductance(z.Y, cfg, params);
  v.Q_L = q_target - z.Q_L;
  AwarenessField aw = awareness_field(z.X_R, mu[kMuNE], z.P, cfg, params);
  v.W_R = aw.simplex_weights - z.W_R;

  Eigen::MatrixXd scores = params.routing.base_scores.size() > 0
                               ? params.routing.base_scores
                               : Eigen::MatrixXd::Zero(cfg.n_s, cfg.n_s);
  if (params.routing.w_sal_h != 0.0)
    scores.col(0).array() += params.routing.w_sal_h * (z.H_L.mean() + z.Y.mean());
  if (params.routing.w_sal_x != 0.0 && cfg.n_s > 1)
    scores.col(1).array() += params.routing.w_sal_x * z.X_R.mean();
  v.R_Theta = params.routing.relax_rate *
              (routing_update(scores, z.rho, params.routing.beta_rho) - z.R_Theta);

  Eigen::VectorXd h0 = Eigen::VectorXd::Zero(params.homeostat.n_u);
  v.Y = valuative_rhs(z.Y, z.H_L, z.X_R, z.P, h0, 0.0, 0.0, 0.0, params);
  std::vector<Eigen::VectorXd> no_dtheta(cfg.n_policy, Eigen::VectorXd::Zero(cfg.n_actions));
  v.P = executive_rhs(z.P, z.H_L, z.X_R, z.Y, no_dtheta, params);

  double rate_mod = params.memory.w_gate.size() > 0
                        ? 1.0 / (1.0 + std::exp(-params.memory.w_gate.dot(z.Y)))
                        : 1.0;
  Eigen::VectorXd write = params.memory.phi.is_zero() ? Eigen::VectorXd::Zero(cfg.n_M)
                                                      : memory_write(z.H_L, z.Y, params);
  v.M = params.memory.gate_rate * rate_mod * (write - z.M);

  for (int i = 0; i < cfg.n_sub; ++i)
    v.rho[i] = params.reliability.rate * (reliability_kernel(0.0, params.reliability) - z.rho[i]);

  double delta = params.policy.signed_delta ? 2.0 * neuromod_readout(z.Y, params.neuromod)[kMuDA] - 1.0
                                            : neuromod_readout(z.Y, params.neuromod)[kMuDA];
  for (int i = 0; i < cfg.n_policy; ++i) {
    Eigen::VectorXd score = policy_score(z.theta[i], 0, params.policy.eps_floor);
    v.z[i] = -params.policy.lambda_z[i] * z.z[i] + score;
    v.theta[i] = params.policy.eta[i] * (delta * z.z[i] - params.policy.lambda_reg * z.theta[i]);
  }
  return v;
}

}  // namespace refield
