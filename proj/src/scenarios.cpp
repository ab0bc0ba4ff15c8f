#include "refield/scenarios.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "refield/simplex.hpp"
#include "refield/stability.hpp"

namespace refield {

namespace {

Eigen::MatrixXd k0_matrix() {
  Eigen::MatrixXd k0(3, 3);
  k0 << 1.0, 0.5, 0.0,
        0.0, 1.0, 0.5,
        0.5, 0.0, 1.0;
  return k0;
}

StateVector k3p3_equilibrium(const ArchitectureConfig& cfg) {
  StateVector z = StateVector::zeros(cfg);
  z.H_L(0, 0) = 1.0;
  z.X_R(0, 0) = 1.0;
  z.Q_L = cfg.g_symbolic.weights;  // Q(0) = 1 on every edge
  // W_R uniform in-simplices already set by zeros(); routing at the
  // cross-gating pattern
  z.R_Theta << 0.0, 1.0,
               1.0, 0.0;
  z.rho = Eigen::VectorXd::Ones(cfg.n_sub);
  return z;
}

Scenario build_k3p3_base(double k, double sigma_alpha, double sigma_beta, double delta_Q,
                         double delta_W, double alpha_H, double alpha_X, double kappa_Y,
                         double kappa_P) {
  if (!(delta_Q >= 0.0 && delta_Q < 1.0 && delta_W >= 0.0 && delta_W < 1.0))
    throw std::invalid_argument("k3p3: delta_Q and delta_W must lie in [0,1)");
  if (!(alpha_H > 0.0 && alpha_X > 0.0 && kappa_Y > 0.0 && kappa_P > 0.0 && k >= 0.0))
    throw std::invalid_argument("k3p3: rate parameters must be positive");

  Scenario s;
  s.name = "k3p3";
  ArchitectureConfig& cfg = s.cfg;
  cfg.T = 3;
  cfg.V = 3;
  cfg.d_L = 1;
  cfg.d_R = 1;
  cfg.n_s = 2;
  cfg.n_Y = cfg.n_P = cfg.n_M = 1;
  cfg.n_sub = 5;
  cfg.n_policy = 1;
  cfg.n_actions = 1;
  cfg.tau_r_to_l = 0.5;
  cfg.tau_l_to_r = 0.5;
  cfg.dt = 1e-3;
  cfg.bounds.R_L = 2.0;
  cfg.bounds.R_R = 2.0;
  cfg.bounds.R_Y = 1.0;
  cfg.bounds.R_P = 1.0;
  cfg.bounds.R_M = 1.0;
  cfg.bounds.eps_Q = 1.0 - delta_Q;
  cfg.bounds.R_Q = 1.0 + delta_Q;
  cfg.bounds.R_z = Eigen::VectorXd::Ones(1);
  cfg.bounds.R_theta = Eigen::VectorXd::Ones(1);
  cfg.mu_L = alpha_H;
  cfg.mu_R = alpha_X;
  cfg.mu_P = kappa_P;
  cfg.kappa_Y = kappa_Y;
  cfg.kappa_P = kappa_P;
  cfg.g_symbolic = WeightedGraph::complete(3);
  cfg.g_geometric = WeightedGraph::path(3);
  cfg.k_gain = k;
  cfg.sigma_alpha = sigma_alpha;
  cfg.sigma_beta = sigma_beta;
  cfg.delta_Q = delta_Q;
  cfg.delta_W = delta_W;

  FixedBlocksKernel channel;
  channel.dims = {3, 3, 1, 1};
  channel.blocks = k0_matrix();
  GatedMixtureKernel mixture;
  mixture.gate_bounds = {k + std::max(sigma_alpha, sigma_beta)};
  mixture.channels.push_back(CouplingKernel{channel});
  cfg.kernel = CouplingKernel{mixture};

  FieldParams& p = s.params;
  p.symbolic.alpha_H = alpha_H;
  p.geometric.alpha_X = alpha_X;
  p.geometric.edge_feat = Eigen::VectorXd::Ones(cfg.g_geometric.edge_count());

  p.valuative.kappa_Y = kappa_Y;
  p.executive.kappa_P = kappa_P;

  p.neuromod.W = Eigen::MatrixXd::Zero(5, 1);
  p.neuromod.b = Eigen::VectorXd::Zero(5);

  p.precision.mode = PrecisionMode::scalar_gate;
  p.precision.delta_Q = delta_Q;
  p.precision.w_gate = Eigen::VectorXd::Ones(1);

  p.awareness.mode = AwarenessMode::scalar_gate;
  p.awareness.delta_W = delta_W;
  p.awareness.w_gate = Eigen::VectorXd::Ones(1);
  p.awareness.omega_base = Eigen::VectorXd::Zero(cfg.g_geometric.edge_count());

  p.memory.eps_M = 1e-6;
  p.memory.gate_rate = 1.0;
  p.memory.C_M = 0.5;
  p.memory.phi.W = Eigen::MatrixXd::Constant(1, 2, 0.2);
  p.memory.phi.gain = 0.5;
  p.memory.c_in = Eigen::VectorXd::Zero(2);
  p.memory.c_in[0] = 1.0 / 3.0;  // pool(H*) for H* = e1

  p.policy.lambda_z = Eigen::VectorXd::Ones(1);
  p.policy.eta = Eigen::VectorXd::Ones(1);
  p.policy.lambda_reg = 0.5;
  p.policy.D = 1.0;
  p.policy.signed_delta = true;
  p.policy.eps_floor = 0.01;

  p.reliability.rate = 1.0;
  p.reliability.kernel = ReliabilityKernelKind::gaussian;

  p.homeostat.kappa_h = 1.0;
  p.homeostat.B_u = 1.0;
  p.homeostat.n_u = 1;

  p.routing.base_scores = Eigen::MatrixXd::Zero(2, 2);
  p.routing.base_scores << 0.0, 2.0,
                           2.0, 0.0;
  p.routing.beta_rho = 0.1;
  p.routing.relax_rate = 1.0;

  GateSpec fwd;
  fwd.k_base = k;
  fwd.sigma = sigma_alpha;
  fwd.source = GateSpec::Source::valuative;
  fwd.w = Eigen::VectorXd::Ones(1);
  GateSpec adj;
  adj.k_base = k;
  adj.sigma = sigma_beta;
  adj.source = GateSpec::Source::executive;
  adj.w = Eigen::VectorXd::Ones(1);
  p.gates_fwd = {fwd};
  p.gates_adj = {adj};

  // equilibrium-pinning reaction offsets: F_L(H) = -alpha_H (H - H*) + L_L H* - k K0 X*
  StateVector z_star = k3p3_equilibrium(cfg);
  Eigen::MatrixXd l_h = laplacian_apply(cfg.g_symbolic, z_star.H_L);
  Eigen::MatrixXd l_x = laplacian_apply(cfg.g_geometric, z_star.X_R);
  Eigen::MatrixXd k0 = k0_matrix();
  p.symbolic.offset = alpha_H * z_star.H_L + l_h - k * (k0 * z_star.X_R);
  p.geometric.offset = alpha_X * z_star.X_R + l_x - k * (k0.transpose() * z_star.H_L);

  s.z_star = z_star;
  p.frozen_values = z_star;
  return s;
}

}  // namespace

Scenario build_k3p3(double k, double sigma_alpha, double sigma_beta, double delta_Q,
                    double delta_W, double alpha_H, double alpha_X, double kappa_Y,
                    double kappa_P) {
  Scenario s = build_k3p3_base(k, sigma_alpha, sigma_beta, delta_Q, delta_W, alpha_H, alpha_X,
                               kappa_Y, kappa_P);
  validate_config(s.cfg, s.params);
  return s;
}

Scenario build_k3p3_valuation(double k, double sigma_alpha, double sigma_beta, double delta_Q,
                              double delta_W, double alpha_H, double alpha_X, double kappa_Y,
                              double kappa_P, double a_Y, double a_P) {
  if (!(a_Y > 0.0 && a_Y <= kappa_Y))
    throw std::invalid_argument("k3p3-valuation: viability requires 0 < a_Y <= kappa_Y");
  if (!(a_P > 0.0 && a_P <= kappa_P))
    throw std::invalid_argument("k3p3-valuation: viability requires 0 < a_P <= kappa_P");
  Scenario s = build_k3p3_base(k, sigma_alpha, sigma_beta, delta_Q, delta_W, alpha_H, alpha_X,
                               kappa_Y, kappa_P);
  s.name = "k3p3-valuation";
  s.cfg.a_Y = a_Y;
  s.cfg.a_P = a_P;

  // centered coarse activation readout: r_Y = mean(H - H*) + mean(X - X*) + P
  ValuativeParams& vp = s.params.valuative;
  vp.a_Y = a_Y;
  vp.w_H = Eigen::MatrixXd::Constant(1, 3, 1.0 / 3.0);
  vp.w_X = Eigen::MatrixXd::Constant(1, 3, 1.0 / 3.0);
  vp.w_P = Eigen::MatrixXd::Ones(1, 1);
  vp.c_H = Eigen::Map<const Eigen::VectorXd>(s.z_star.H_L.data(), 3);
  vp.c_X = Eigen::Map<const Eigen::VectorXd>(s.z_star.X_R.data(), 3);

  // centered endpoint-contrast readout: r_P = (h1 - h3) - (h1* - h3*) + ... + Y
  ExecutiveParams& ep = s.params.executive;
  ep.a_P = a_P;
  ep.w_H = Eigen::MatrixXd::Zero(1, 3);
  ep.w_H << 1.0, 0.0, -1.0;
  ep.w_X = ep.w_H;
  ep.w_Y = Eigen::MatrixXd::Ones(1, 1);
  ep.c_H = vp.c_H;
  ep.c_X = vp.c_X;

  validate_config(s.cfg, s.params);
  return s;
}

Scenario frozen_principal_regime(const Scenario& base) {
  Scenario s = base;
  s.name = base.name + "-frozen";
  s.params.frozen_auxiliaries = true;
  s.params.frozen_values = base.z_star;
  return s;
}

namespace {

WeightedGraph random_connected_graph(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> wdist(0.5, 1.5);
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<std::pair<int, int>> edges;
  std::vector<double> w;
  auto add_undirected = [&](int a, int b, double weight) {
    edges.emplace_back(a, b);
    w.push_back(weight);
    edges.emplace_back(b, a);
    w.push_back(weight);
  };
  for (int i = 1; i < n; ++i) add_undirected(i, pick(rng) % i, wdist(rng));  // spanning tree
  int extra = n / 2;
  for (int e = 0; e < extra; ++e) {
    int a = pick(rng), b = pick(rng);
    if (a == b) continue;
    bool dup = false;
    for (auto& [x, y] : edges) dup = dup || (x == a && y == b);
    if (!dup) add_undirected(a, b, wdist(rng));
  }
  Eigen::VectorXd weights = Eigen::Map<Eigen::VectorXd>(w.data(), w.size());
  return WeightedGraph(n, std::move(edges), std::move(weights));
}

CouplingKernel random_kernel(std::mt19937_64& rng, int T, int V, int d_L, int d_R,
                             double hs_target) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> fam(0, 3);
  auto randm = [&](int r, int c) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = gauss(rng);
    return m;
  };
  KernelDims dims{T, V, d_L, d_R};
  CouplingKernel k;
  switch (fam(rng)) {
    case 0: {
      FixedBlocksKernel f;
      f.dims = dims;
      f.blocks = randm(T * d_L, V * d_R);
      f.blocks *= hs_target / f.blocks.norm();
      k.family = f;
      break;
    }
    case 1: {
      ConstantSharedKernel f;
      f.dims = dims;
      f.W = randm(d_L, d_R);
      f.W *= hs_target / (std::sqrt(static_cast<double>(T) * V) * f.W.norm());
      k.family = f;
      break;
    }
    case 2: {
      AttentionKernel f;
      f.dims = dims;
      f.W_V = randm(d_L, d_R);
      f.W_V *= hs_target / (std::sqrt(static_cast<double>(T)) * f.W_V.norm());
      int d_k = 2;
      f.W_Q = randm(d_k, d_L);
      f.W_K = randm(d_k, d_R);
      f.C_W = 1.0;
      Eigen::JacobiSVD<Eigen::MatrixXd> sq(f.W_Q), sk(f.W_K);
      if (sq.singularValues()[0] > 1.0) f.W_Q /= sq.singularValues()[0];
      if (sk.singularValues()[0] > 1.0) f.W_K /= sk.singularValues()[0];
      k.family = f;
      break;
    }
    default: {
      LowRankKernel f;
      f.dims = dims;
      int channels = 1 + static_cast<int>(rng() % 2);
      for (int r = 0; r < channels; ++r) {
        LowRankChannel c;
        c.a = randm(T, 1);
        c.a /= c.a.norm();
        c.b = randm(V, 1);
        c.b /= c.b.norm();
        c.A = randm(d_L, d_R);
        c.A *= hs_target / (channels * c.A.norm());
        f.channels.push_back(std::move(c));
      }
      k.family = f;
      break;
    }
  }
  return k;
}

}  // namespace

Scenario random_scenario(unsigned long seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dim(1, 2);
  std::uniform_int_distribution<int> nodes(2, 5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto randm = [&](int r, int c, double scale) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = scale * gauss(rng);
    return m;
  };

  Scenario s;
  s.name = "random-" + std::to_string(seed);
  ArchitectureConfig& cfg = s.cfg;
  cfg.T = nodes(rng);
  cfg.V = nodes(rng);
  cfg.d_L = dim(rng);
  cfg.d_R = dim(rng);
  cfg.n_s = 2;
  cfg.n_Y = dim(rng);
  cfg.n_P = dim(rng);
  cfg.n_M = dim(rng);
  cfg.n_sub = 5;
  cfg.n_policy = 1;
  cfg.n_actions = 1 + static_cast<int>(rng() % 3);
  cfg.bounds.R_L = 1.0 + unif(rng);
  cfg.bounds.R_R = 1.0 + unif(rng);
  cfg.bounds.R_Y = 1.0;
  cfg.bounds.R_P = 1.0;
  cfg.bounds.R_M = 1.0;
  cfg.bounds.eps_Q = 0.05;
  cfg.bounds.R_Q = 1.0 + unif(rng);
  cfg.bounds.R_z = Eigen::VectorXd::Constant(1, cfg.n_actions > 1 ? 200.0 : 1.0);
  cfg.bounds.R_theta = Eigen::VectorXd::Ones(1);
  cfg.g_symbolic = random_connected_graph(rng, cfg.T);
  cfg.g_geometric = random_connected_graph(rng, cfg.V);

  double alpha_H = 0.8 + unif(rng);
  double alpha_X = 0.8 + unif(rng);
  cfg.kappa_Y = 0.8 + unif(rng);
  cfg.kappa_P = 0.8 + unif(rng);

  double hs_target = 0.3 * std::sqrt(alpha_H * alpha_X) * unif(rng);
  cfg.kernel = random_kernel(rng, cfg.T, cfg.V, cfg.d_L, cfg.d_R, std::max(hs_target, 1e-3));

  FieldParams& p = s.params;
  p.symbolic.alpha_H = alpha_H;
  p.symbolic.offset = randm(cfg.T, cfg.d_L, 0.2);
  int sym_in = cfg.T * cfg.d_L + cfg.d_L + cfg.d_R + cfg.n_P + cfg.n_M;
  p.symbolic.phi.W = randm(cfg.T * cfg.d_L, sym_in, 0.3);
  p.symbolic.phi.b = randm(cfg.T * cfg.d_L, 1, 0.1).col(0);
  p.symbolic.phi.gain = 0.5;
  p.symbolic.phi.clip_lipschitz(0.3 * alpha_H);

  p.geometric.alpha_X = alpha_X;
  p.geometric.offset = randm(cfg.V, cfg.d_R, 0.2);
  p.geometric.phi_local.W = randm(cfg.d_R, 2 * cfg.d_R + 1, 0.3);
  p.geometric.phi_local.b = randm(cfg.d_R, 1, 0.1).col(0);
  p.geometric.phi_local.gain = 0.5;
  p.geometric.phi_local.clip_lipschitz(0.2 * alpha_X);
  p.geometric.edge_feat = Eigen::VectorXd::Ones(cfg.g_geometric.edge_count()) +
                          randm(cfg.g_geometric.edge_count(), 1, 0.2).col(0).cwiseAbs();

  cfg.mu_L = alpha_H - p.symbolic.phi.lipschitz();
  cfg.mu_R = alpha_X - 2.0 * p.geometric.phi_local.lipschitz();

  p.valuative.kappa_Y = cfg.kappa_Y;
  p.valuative.a_Y = 0.5 * cfg.kappa_Y / std::sqrt(static_cast<double>(cfg.n_Y));
  p.valuative.w_H = randm(cfg.n_Y, cfg.T * cfg.d_L, 0.2);
  p.valuative.w_X = randm(cfg.n_Y, cfg.V * cfg.d_R, 0.2);
  p.valuative.w_P = randm(cfg.n_Y, cfg.n_P, 0.2);
  p.valuative.c_H = Eigen::VectorXd::Zero(cfg.T * cfg.d_L);
  p.valuative.c_X = Eigen::VectorXd::Zero(cfg.V * cfg.d_R);
  p.valuative.w_h = randm(cfg.n_Y, 1, 0.1);
  p.valuative.w_aux = randm(cfg.n_Y, 3, 0.1);

  p.executive.kappa_P = cfg.kappa_P;
  p.executive.W_P = randm(cfg.n_P, cfg.n_P, 0.2);
  {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(p.executive.W_P);
    double target = 0.2 * cfg.kappa_P;
    if (svd.singularValues()[0] > target) p.executive.W_P *= target / svd.singularValues()[0];
  }
  p.executive.a_P = 0.3 * cfg.kappa_P / std::sqrt(static_cast<double>(cfg.n_P));
  p.executive.w_H = randm(cfg.n_P, cfg.T * cfg.d_L, 0.2);
  p.executive.w_X = randm(cfg.n_P, cfg.V * cfg.d_R, 0.2);
  p.executive.w_Y = randm(cfg.n_P, cfg.n_Y, 0.2);
  p.executive.c_H = Eigen::VectorXd::Zero(cfg.T * cfg.d_L);
  p.executive.c_X = Eigen::VectorXd::Zero(cfg.V * cfg.d_R);
  {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(p.executive.W_P);
    cfg.mu_P = cfg.kappa_P - svd.singularValues()[0];
  }

  p.neuromod.W = randm(5, cfg.n_Y, 0.3);
  p.neuromod.b = Eigen::VectorXd::Zero(5);

  p.precision.mode = PrecisionMode::logistic;
  p.precision.a_logits = randm(cfg.g_symbolic.edge_count(), 1, 0.5).col(0);
  p.precision.b_logits = randm(cfg.g_symbolic.edge_count(), 1, 0.5).col(0).cwiseAbs();

  p.awareness.mode = AwarenessMode::sparsemax_logits;
  p.awareness.omega_base = randm(cfg.g_geometric.edge_count(), 1, 0.3).col(0);
  p.awareness.omega_x_scale = 0.2;
  p.awareness.ne_shift = randm(cfg.g_geometric.edge_count(), 1, 0.2).col(0);
  p.awareness.overlay_scale = 0.3;

  p.memory.eps_M = 1e-7;
  p.memory.gate_rate = 0.5 + unif(rng);
  p.memory.w_gate = randm(cfg.n_Y, 1, 0.2).col(0);
  p.memory.C_M = 0.8;
  p.memory.phi.W = randm(cfg.n_M, cfg.d_L + cfg.n_Y, 0.3);
  p.memory.phi.gain = 0.4;
  p.memory.c_in = Eigen::VectorXd::Zero(cfg.d_L + cfg.n_Y);

  p.policy.lambda_z = Eigen::VectorXd::Ones(1);
  p.policy.eta = Eigen::VectorXd::Constant(1, 0.5);
  p.policy.lambda_reg = 0.5;
  p.policy.D = 1.0;
  p.policy.signed_delta = true;
  p.policy.eps_floor = 0.1;

  p.reliability.rate = 0.5 + unif(rng);
  p.reliability.kernel = static_cast<ReliabilityKernelKind>(rng() % 3);
  p.reliability.tent_sigma = 1.0;

  p.homeostat.kappa_h = 0.5 + unif(rng);
  p.homeostat.B_u = 1.0;
  p.homeostat.n_u = 1;

  p.routing.base_scores = randm(cfg.n_s, cfg.n_s, 0.5);
  p.routing.beta_rho = 0.2;
  p.routing.w_sal_h = 0.1;
  p.routing.w_sal_x = 0.1;
  p.routing.relax_rate = 1.0;

  cfg.tau_r_to_l = 0.0;  // set after dt below
  cfg.tau_l_to_r = 0.0;

  double stiff = estimate_stiffness(cfg, p);
  cfg.dt = 0.5 * 0.1 / stiff;
  cfg.dt = std::min(cfg.dt, 0.5 / p.homeostat.kappa_h);
  cfg.tau_r_to_l = cfg.dt * static_cast<double>(rng() % 12);
  cfg.tau_l_to_r = cfg.dt * static_cast<double>(rng() % 12);

  s.z_star = project_state(StateVector::zeros(cfg), cfg);
  validate_config(cfg, p);
  return s;
}

namespace {

double operator_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()[0];
}

}  // namespace

CoarseGrainReport coarse_grain_report(const ArchitectureConfig& cfg, const FieldParams& params,
                                      unsigned long seed) {
  CoarseGrainReport rep;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  StateVector ref = params.frozen_values ? *params.frozen_values
                                         : project_state(StateVector::zeros(cfg), cfg);

  auto sample_ball = [&](int dim, double radius) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = gauss(rng);
    double n = v.norm();
    return n > 0 ? Eigen::VectorXd((radius * std::pow(std::uniform_real_distribution<double>(0, 1)(rng),
                                                      1.0 / dim) / n) * v)
                 : Eigen::VectorXd::Zero(dim);
  };

  // A_L / A_R: sampled one-sided dissipativity of the combined principal operators
  auto osl_combined = [&](bool symbolic) {
    double worst = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < 2000; ++k) {
      StateVector a = ref, b = ref;
      if (symbolic) {
        Eigen::VectorXd ua = sample_ball(cfg.T * cfg.d_L, cfg.bounds.R_L);
        Eigen::VectorXd ub = sample_ball(cfg.T * cfg.d_L, cfg.bounds.R_L);
        a.H_L = Eigen::Map<Eigen::MatrixXd>(ua.data(), cfg.T, cfg.d_L);
        b.H_L = Eigen::Map<Eigen::MatrixXd>(ub.data(), cfg.T, cfg.d_L);
        Eigen::MatrixXd fa = symbolic_rhs(a, Eigen::MatrixXd::Zero(cfg.T, cfg.d_L),
                                          Eigen::VectorXd(), cfg, params);
        Eigen::MatrixXd fb = symbolic_rhs(b, Eigen::MatrixXd::Zero(cfg.T, cfg.d_L),
                                          Eigen::VectorXd(), cfg, params);
        double d2 = (a.H_L - b.H_L).squaredNorm();
        if (d2 < 1e-20) continue;
        worst = std::max(worst, ((fa - fb).array() * (a.H_L - b.H_L).array()).sum() / d2);
      } else {
        Eigen::VectorXd ua = sample_ball(cfg.V * cfg.d_R, cfg.bounds.R_R);
        Eigen::VectorXd ub = sample_ball(cfg.V * cfg.d_R, cfg.bounds.R_R);
        a.X_R = Eigen::Map<Eigen::MatrixXd>(ua.data(), cfg.V, cfg.d_R);
        b.X_R = Eigen::Map<Eigen::MatrixXd>(ub.data(), cfg.V, cfg.d_R);
        Eigen::MatrixXd fa = geometric_rhs(a, Eigen::MatrixXd::Zero(cfg.V, cfg.d_R),
                                           Eigen::VectorXd(), cfg, params);
        Eigen::MatrixXd fb = geometric_rhs(b, Eigen::MatrixXd::Zero(cfg.V, cfg.d_R),
                                           Eigen::VectorXd(), cfg, params);
        double d2 = (a.X_R - b.X_R).squaredNorm();
        if (d2 < 1e-20) continue;
        worst = std::max(worst, ((fa - fb).array() * (a.X_R - b.X_R).array()).sum() / d2);
      }
    }
    return worst;
  };

  double osl_l = osl_combined(true);
  rep.checks.push_back({"A_L", "sampled dissipativity of -Lap(Q_L)+F_L <= -mu_L", osl_l, -cfg.mu_L,
                        osl_l <= -cfg.mu_L + 1e-6});
  double osl_r = osl_combined(false);
  rep.checks.push_back({"A_R", "sampled dissipativity of -Lap(W_R)+F_R <= -mu_R", osl_r, -cfg.mu_R,
                        osl_r <= -cfg.mu_R + 1e-6});

  double hs = hs_norm(cfg.kernel);
  double budget = cfg.coupling_budget();
  rep.checks.push_back({"A_K", "||K||_HS <= C_K", hs, budget, hs <= budget + 1e-9});

  // A_QL: inf of the precision field over sampled modulation
  {
    double lo = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 200; ++k) {
      Eigen::VectorXd y = sample_ball(cfg.n_Y, cfg.bounds.R_Y);
      Eigen::VectorXd q = params.precision.mode == PrecisionMode::scalar_gate
                              ? scenario_precision_conductance(y, cfg, params)
                              : precision_field(neuromod_readout(y, params.neuromod)[kMuACh], cfg,
                                                params);
      lo = std::min(lo, q.minCoeff());
    }
    bool pass = cfg.bounds.eps_Q > 0.0 && lo >= cfg.bounds.eps_Q - 1e-9;
    rep.checks.push_back({"A_QL", "inf Q_L >= eps_Q > 0", lo, cfg.bounds.eps_Q, pass});
  }

  // A_WR: connected support of the symmetrized awareness conductance
  {
    AwarenessField aw = awareness_field(ref.X_R, 0.5, ref.P, cfg, params);
    WeightedGraph g = cfg.g_geometric;
    g.weights = aw.conductance;
    double gap = spectral_gap(symmetrize_conductance(g));
    rep.checks.push_back({"A_WR", "lambda_2 of the awareness conductance > 0", gap, 0.0,
                          gap > 1e-12});
  }

  // A_RTheta: non-expansive routing (row-stochasticity makes a strict operator
  // norm bound unattainable; gates in [0,1] need exactly this)
  {
    double n = operator_norm(ref.R_Theta);
    rep.checks.push_back({"A_RTheta", "||R_Theta||_op <= 1", n, 1.0, n <= 1.0 + 1e-9});
  }

  // A_Y: Lip(G_Y) < kappa_Y
  {
    double lip = params.valuative.a_Y *
                 std::sqrt(std::pow(operator_norm(params.valuative.w_H), 2) +
                           std::pow(operator_norm(params.valuative.w_X), 2) +
                           std::pow(operator_norm(params.valuative.w_P), 2));
    rep.checks.push_back({"A_Y", "Lip(G_Y) < kappa_Y", lip, params.valuative.kappa_Y,
                          lip < params.valuative.kappa_Y});
  }

  // A_theta: per-step contraction eta lambda_reg < 1
  {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < params.policy.eta.size(); ++i)
      worst = std::max(worst, cfg.dt * params.policy.eta[i] * params.policy.lambda_reg);
    rep.checks.push_back({"A_theta", "eta lambda_reg < 1 per step", worst, 1.0, worst < 1.0});
  }

  // A_P: certified executive dissipativity constant
  {
    double measured = params.executive.kappa_P - operator_norm(params.executive.W_P);
    rep.checks.push_back({"A_P", "mu_P = kappa_P - ||W_P||_op > 0", measured, 0.0,
                          measured > 0.0 && cfg.mu_P > 0.0});
  }

  rep.all_pass = true;
  for (const auto& c : rep.checks) rep.all_pass = rep.all_pass && c.pass;
  return rep;
}

Scenario scenario_by_name(const std::string& name) {
  if (name == "k3p3" || name == "k3p3-default") return build_k3p3();
  if (name == "k3p3-valuation") return build_k3p3_valuation();
  throw std::invalid_argument("unknown scenario: " + name);
}

}  // namespace refield
