#include "refield/stability.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace refield {

std::tuple<bool, double, double> small_gain_check(double C_K, double mu_L, double mu_R) {
  if (!(mu_L > 0.0) || !(mu_R > 0.0))
    throw std::invalid_argument("small_gain_check: dissipativity constants must be positive");
  double alpha_L = 0.5 * mu_L - C_K * C_K / (2.0 * mu_R);
  double alpha_R = 0.5 * mu_R - C_K * C_K / (2.0 * mu_L);
  return {C_K * C_K < mu_L * mu_R, alpha_L, alpha_R};
}

bool radial_margin_check(double eta_L, double eta_R, double R_L, double R_R, double C_K) {
  return eta_L >= R_L * C_K * R_R && eta_R >= R_R * C_K * R_L;
}

namespace {

double trapezoid_window(const HistoryBuffer& history, int n, double dt,
                        const std::function<double(const StateVector&)>& q) {
  if (n <= 0) return 0.0;
  double sum = 0.0;
  for (int j = 0; j <= n; ++j) {
    double w = (j == 0 || j == n) ? 0.5 : 1.0;
    sum += w * q(history.delayed(j));
  }
  return dt * sum;
}

}  // namespace

double lyapunov_value(const HistoryBuffer& history, double C_K, double mu_L, double mu_R,
                      const StateVector& z_star, double tau_rl, double tau_lr) {
  int n1 = delay_index(tau_rl, history.dt());
  int n2 = delay_index(tau_lr, history.dt());
  if (n1 > history.max_delay_steps() || n2 > history.max_delay_steps())
    throw std::invalid_argument("lyapunov_value: history does not cover the delay windows");
  const StateVector& z = history.current();
  double v = 0.5 * (z.H_L - z_star.H_L).squaredNorm() + 0.5 * (z.X_R - z_star.X_R).squaredNorm() +
             0.5 * (z.P - z_star.P).squaredNorm();
  double ck2 = C_K * C_K;
  v += ck2 / (2.0 * mu_L) *
       trapezoid_window(history, n1, history.dt(),
                        [&](const StateVector& s) { return (s.X_R - z_star.X_R).squaredNorm(); });
  v += ck2 / (2.0 * mu_R) *
       trapezoid_window(history, n2, history.dt(),
                        [&](const StateVector& s) { return (s.H_L - z_star.H_L).squaredNorm(); });
  return v;
}

MonotonicityResult lyapunov_monotonicity(const Trajectory& traj, double alpha_L, double alpha_R,
                                         double mu_P) {
  if (traj.diag.size() < 2 || traj.diag_every != 1)
    throw std::invalid_argument("lyapunov_monotonicity: per-step diagnostics required");
  MonotonicityResult out;
  out.max_increment = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k + 1 < traj.diag.size(); ++k) {
    const StepDiagnostics& a = traj.diag[k];
    const StepDiagnostics& b = traj.diag[k + 1];
    double rate = (b.lyapunov - a.lyapunov) / traj.dt;
    double v = rate + alpha_L * a.err_H * a.err_H + alpha_R * a.err_X * a.err_X +
               mu_P * a.err_P * a.err_P;
    out.max_increment = std::max(out.max_increment, v);
  }
  out.discretization_budget = out.max_increment / traj.dt;
  return out;
}

std::tuple<double, double, double> state_dependent_margin(double L_alpha, double L_beta,
                                                          double L_Q, double L_W,
                                                          double norm_H_star,
                                                          double norm_X_star) {
  if (L_alpha < 0 || L_beta < 0 || L_Q < 0 || L_W < 0 || norm_H_star < 0 || norm_X_star < 0)
    throw std::invalid_argument("state_dependent_margin: inputs must be nonnegative");
  double m_L = L_alpha * norm_X_star + L_Q * norm_H_star;
  double m_R = L_beta * norm_H_star + L_W * norm_X_star;
  return {m_L, m_R, std::max(m_L, m_R)};
}

std::pair<Eigen::Matrix3d, bool> executive_crossgain(double omega_L, double omega_R, double c_PH,
                                                     double c_PX, double c_PY, double L_PhiH,
                                                     double L_PhiX, double mu_P) {
  double eff_h = c_PH + c_PY * L_PhiH;
  double eff_x = c_PX + c_PY * L_PhiX;
  Eigen::Matrix3d m;
  m << omega_L, 0.0, -0.5 * eff_h,
       0.0, omega_R, -0.5 * eff_x,
       -0.5 * eff_h, -0.5 * eff_x, mu_P;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
  return {m, es.eigenvalues()[0] > 0.0};
}

SlowFastResult slowfast_bound_check(const Trajectory& traj, double kappa_Y,
                                    const std::function<Eigen::VectorXd(const StateVector&)>& phi) {
  if (traj.states.size() < 2)
    throw std::invalid_argument("slowfast_bound_check: recorded states required");
  SlowFastResult out;
  std::vector<Eigen::VectorXd> phis(traj.states.size());
  for (size_t k = 0; k < traj.states.size(); ++k) phis[k] = phi(traj.states[k]);
  for (size_t k = 0; k + 1 < phis.size(); ++k) {
    double dt = traj.times[k + 1] - traj.times[k];
    out.G1 = std::max(out.G1, (phis[k + 1] - phis[k]).norm() / dt);
  }
  double w0 = (traj.states.front().Y - phis.front()).norm();
  out.max_violation = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < phis.size(); ++k) {
    double w = (traj.states[k].Y - phis[k]).norm();
    double bound = std::exp(-kappa_Y * traj.times[k]) * w0 + out.G1 / kappa_Y;
    out.max_violation = std::max(out.max_violation, w - bound);
  }
  return out;
}

double one_sided_lipschitz_estimate(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& map,
    const std::function<Eigen::VectorXd(std::mt19937_64&)>& sampler, int n_pairs,
    std::mt19937_64& rng) {
  double worst = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_pairs; ++k) {
    Eigen::VectorXd u = sampler(rng);
    Eigen::VectorXd v = sampler(rng);
    double d2 = (u - v).squaredNorm();
    if (d2 < 1e-24) continue;  // degenerate pair
    double val = (map(u) - map(v)).dot(u - v) / d2;
    worst = std::max(worst, val);
  }
  return worst;
}

namespace {

double operator_norm(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues().size() > 0 ? svd.singularValues()[0] : 0.0;
}

Eigen::VectorXd ball_sample(std::mt19937_64& rng, int dim, double radius) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = gauss(rng);
  double n = v.norm();
  if (n == 0.0) return Eigen::VectorXd::Zero(dim);
  double r = radius * std::pow(unif(rng), 1.0 / dim);
  return (r / n) * v;
}

}  // namespace

StabilityReport build_stability_report(const ArchitectureConfig& cfg, const FieldParams& params,
                                       const ReportOptions& options) {
  validate_config(cfg, params);
  StabilityReport rep;
  std::mt19937_64 rng(options.seed);

  rep.C_K = cfg.coupling_budget();
  rep.mu_L = cfg.mu_L;
  rep.mu_R = cfg.mu_R;
  rep.mu_P = cfg.mu_P;
  std::tie(rep.small_gain_ok, rep.alpha_L, rep.alpha_R) =
      small_gain_check(rep.C_K, rep.mu_L, rep.mu_R);

  StateVector ref = params.frozen_values ? *params.frozen_values
                                         : project_state(StateVector::zeros(cfg), cfg);

  // measured radial damping margins at the ball boundaries
  {
    double worst_L = std::numeric_limits<double>::infinity();
    double worst_R = std::numeric_limits<double>::infinity();
    for (int k = 0; k < options.boundary_samples; ++k) {
      StateVector s = ref;
      Eigen::VectorXd h = ball_sample(rng, cfg.T * cfg.d_L, 1.0);
      h *= cfg.bounds.R_L / std::max(h.norm(), 1e-12);
      s.H_L = Eigen::Map<Eigen::MatrixXd>(h.data(), cfg.T, cfg.d_L);
      Eigen::MatrixXd rhs =
          symbolic_rhs(s, Eigen::MatrixXd::Zero(cfg.T, cfg.d_L), Eigen::VectorXd(), cfg, params);
      worst_L = std::min(worst_L, -(s.H_L.array() * rhs.array()).sum());

      StateVector sx = ref;
      Eigen::VectorXd x = ball_sample(rng, cfg.V * cfg.d_R, 1.0);
      x *= cfg.bounds.R_R * std::sqrt(static_cast<double>(cfg.V)) / std::max(x.norm(), 1e-12);
      sx.X_R = Eigen::Map<Eigen::MatrixXd>(x.data(), cfg.V, cfg.d_R);
      for (int i = 0; i < cfg.V; ++i) {
        double n = sx.X_R.row(i).norm();
        if (n > cfg.bounds.R_R) sx.X_R.row(i) *= cfg.bounds.R_R / n;
      }
      Eigen::MatrixXd rhs_x =
          geometric_rhs(sx, Eigen::MatrixXd::Zero(cfg.V, cfg.d_R), Eigen::VectorXd(), cfg, params);
      worst_R = std::min(worst_R, -(sx.X_R.array() * rhs_x.array()).sum());
    }
    rep.eta_L = worst_L;
    rep.eta_R = worst_R;
    rep.radial_ok = radial_margin_check(rep.eta_L, rep.eta_R, cfg.bounds.R_L, cfg.bounds.R_R,
                                        rep.C_K);
    rep.radial_by_projection = true;
  }

  // sampled operator Lipschitz constants of the state-dependent couplings
  {
    double la = 0.0, lb = 0.0, lq = 0.0, lw = 0.0;
    for (int k = 0; k < options.lipschitz_samples; ++k) {
      StateVector a = ref, b = ref;
      a.Y = ball_sample(rng, cfg.n_Y, cfg.bounds.R_Y);
      b.Y = ball_sample(rng, cfg.n_Y, cfg.bounds.R_Y);
      a.P = ball_sample(rng, cfg.n_P, cfg.bounds.R_P);
      b.P = ball_sample(rng, cfg.n_P, cfg.bounds.R_P);
      double dist = std::sqrt((a.Y - b.Y).squaredNorm() + (a.P - b.P).squaredNorm());
      if (dist < 1e-12) continue;
      if (cfg.kernel.gate_count() > 0) {
        Eigen::MatrixXd ka = materialize_blocks(cfg.kernel, gate_values(params.gates_fwd, a.Y, a.P));
        Eigen::MatrixXd kb = materialize_blocks(cfg.kernel, gate_values(params.gates_fwd, b.Y, b.P));
        la = std::max(la, operator_norm(ka - kb) / dist);
        Eigen::MatrixXd kat = materialize_blocks(cfg.kernel, gate_values(params.gates_adj, a.Y, a.P));
        Eigen::MatrixXd kbt = materialize_blocks(cfg.kernel, gate_values(params.gates_adj, b.Y, b.P));
        lb = std::max(lb, operator_norm(kat - kbt) / dist);
      }
      Eigen::VectorXd qa, qb;
      if (params.precision.mode == PrecisionMode::scalar_gate) {
        qa = scenario_precision_conductance(a.Y, cfg, params);
        qb = scenario_precision_conductance(b.Y, cfg, params);
      } else {
        qa = precision_field(neuromod_readout(a.Y, params.neuromod)[kMuACh], cfg, params);
        qb = precision_field(neuromod_readout(b.Y, params.neuromod)[kMuACh], cfg, params);
      }
      WeightedGraph ga = cfg.g_symbolic, gb = cfg.g_symbolic;
      ga.weights = qa;
      gb.weights = qb;
      lq = std::max(lq, operator_norm(laplacian_matrix(ga) - laplacian_matrix(gb)) / dist);

      AwarenessField awa = awareness_field(ref.X_R, 0.5, a.P, cfg, params);
      AwarenessField awb = awareness_field(ref.X_R, 0.5, b.P, cfg, params);
      WeightedGraph gga = cfg.g_geometric, ggb = cfg.g_geometric;
      gga.weights = awa.conductance;
      ggb.weights = awb.conductance;
      lw = std::max(lw, operator_norm(laplacian_matrix(gga) - laplacian_matrix(ggb)) / dist);
    }
    rep.L_alpha_sampled = la;
    rep.L_beta_sampled = lb;
    rep.L_Q_sampled = lq;
    rep.L_W_sampled = lw;
  }

  // analytic Lipschitz bounds where the scenario structure provides them
  {
    double lam_max_L = laplacian_spectrum(symmetrize_conductance(cfg.g_symbolic)).maxCoeff();
    double lam_max_R = laplacian_spectrum(symmetrize_conductance(cfg.g_geometric)).maxCoeff();
    bool scenario_form = params.precision.mode == PrecisionMode::scalar_gate &&
                         params.awareness.mode == AwarenessMode::scalar_gate &&
                         cfg.kernel.gate_count() == 1;
    if (scenario_form) {
      const auto* gm = std::get_if<GatedMixtureKernel>(&cfg.kernel.family);
      double channel_hs = gm ? hs_norm(gm->channels[0]) : 0.0;
      rep.L_alpha = cfg.sigma_alpha * channel_hs;
      rep.L_beta = cfg.sigma_beta * channel_hs;
      rep.L_Q = cfg.delta_Q * lam_max_L;
      rep.L_W = cfg.delta_W * lam_max_R;
    } else {
      rep.L_alpha = rep.L_alpha_sampled;
      rep.L_beta = rep.L_beta_sampled;
      rep.L_Q = rep.L_Q_sampled;
      rep.L_W = rep.L_W_sampled;
    }
    std::tie(rep.m_L, rep.m_R, rep.M_sdc) = state_dependent_margin(
        rep.L_alpha, rep.L_beta, rep.L_Q, rep.L_W, ref.H_L.norm(), ref.X_R.norm());
    rep.strengthened_ok = rep.C_K * rep.C_K + rep.M_sdc * rep.M_sdc < rep.mu_L * rep.mu_R;
  }

  // executive cross-gain condition (zero cross-gain in the frozen regime)
  {
    double c_PH = params.executive.a_P * (params.executive.w_H.size() ? operator_norm(params.executive.w_H) : 0.0);
    double c_PX = params.executive.a_P * (params.executive.w_X.size() ? operator_norm(params.executive.w_X) : 0.0);
    double c_PY = params.executive.a_P * (params.executive.w_Y.size() ? operator_norm(params.executive.w_Y) : 0.0);
    double scale = params.valuative.kappa_Y > 0 ? params.valuative.a_Y / params.valuative.kappa_Y : 0.0;
    double L_PhiH = scale * (params.valuative.w_H.size() ? operator_norm(params.valuative.w_H) : 0.0);
    double L_PhiX = scale * (params.valuative.w_X.size() ? operator_norm(params.valuative.w_X) : 0.0);
    if (params.frozen_auxiliaries) {
      c_PH = c_PX = c_PY = 0.0;
    }
    double omega_L = rep.alpha_L;
    double omega_R = rep.alpha_R;
    std::tie(rep.crossgain, rep.crossgain_ok) =
        executive_crossgain(omega_L, omega_R, c_PH, c_PX, c_PY, L_PhiH, L_PhiX, rep.mu_P);
  }

  // sampled one-sided dissipativity certificates for F_L, F_R, P
  {
    StateVector base = ref;
    auto map_h = [&](const Eigen::VectorXd& v) {
      StateVector s = base;
      s.H_L = Eigen::Map<const Eigen::MatrixXd>(v.data(), cfg.T, cfg.d_L);
      Eigen::MatrixXd r = symbolic_reaction(s, cfg, params);
      return Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(r.data(), r.size()));
    };
    auto map_x = [&](const Eigen::VectorXd& v) {
      StateVector s = base;
      s.X_R = Eigen::Map<const Eigen::MatrixXd>(v.data(), cfg.V, cfg.d_R);
      Eigen::MatrixXd r = geometric_reaction(s, cfg, params);
      return Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(r.data(), r.size()));
    };
    auto map_p = [&](const Eigen::VectorXd& v) {
      std::vector<Eigen::VectorXd> no_dtheta(cfg.n_policy, Eigen::VectorXd::Zero(cfg.n_actions));
      return executive_rhs(v, base.H_L, base.X_R, base.Y, no_dtheta, params);
    };
    auto sampler_h = [&](std::mt19937_64& r) { return ball_sample(r, cfg.T * cfg.d_L, cfg.bounds.R_L); };
    auto sampler_x = [&](std::mt19937_64& r) { return ball_sample(r, cfg.V * cfg.d_R, cfg.bounds.R_R); };
    auto sampler_p = [&](std::mt19937_64& r) { return ball_sample(r, cfg.n_P, cfg.bounds.R_P); };
    rep.osl_FL = one_sided_lipschitz_estimate(map_h, sampler_h, options.osl_pairs, rng);
    rep.osl_FR = one_sided_lipschitz_estimate(map_x, sampler_x, options.osl_pairs, rng);
    rep.osl_P = one_sided_lipschitz_estimate(map_p, sampler_p, options.osl_pairs, rng);
    rep.osl_ok = rep.osl_FL <= -rep.mu_L + 1e-6 && rep.osl_FR <= -rep.mu_R + 1e-6 &&
                 rep.osl_P <= -rep.mu_P + 1e-6;
  }

  rep.assumptions = check_assumptions(cfg, cfg.kernel, params);
  return rep;
}

}  // namespace refield
