#pragma once

#include <Eigen/Dense>
#include <functional>
#include <random>
#include <utility>

#include "refield/integrator.hpp"
#include "refield/state.hpp"

namespace refield {

struct StabilityReport {
  double C_K = 0.0;
  double mu_L = 0.0, mu_R = 0.0, mu_P = 0.0;
  double alpha_L = 0.0, alpha_R = 0.0;
  bool small_gain_ok = false;

  double eta_L = 0.0, eta_R = 0.0;  // measured radial damping margins
  bool radial_ok = false;
  bool radial_by_projection = true;  // projected relaxation flows meet the margin by construction

  double L_alpha = 0.0, L_beta = 0.0, L_Q = 0.0, L_W = 0.0;  // analytic bounds when available
  double L_alpha_sampled = 0.0, L_beta_sampled = 0.0, L_Q_sampled = 0.0, L_W_sampled = 0.0;
  double m_L = 0.0, m_R = 0.0, M_sdc = 0.0;
  bool strengthened_ok = false;

  Eigen::Matrix3d crossgain = Eigen::Matrix3d::Zero();
  bool crossgain_ok = false;

  double osl_FL = 0.0, osl_FR = 0.0, osl_P = 0.0;  // sampled one-sided constants
  bool osl_ok = false;

  AssumptionReport assumptions;
};

/// Small-gain condition: true iff C_K^2 < mu_L mu_R; returns the Schur margins
/// alpha_L = mu_L/2 - C_K^2/(2 mu_R) and alpha_R symmetric.
std::tuple<bool, double, double> small_gain_check(double C_K, double mu_L, double mu_R);

/// Radial margin condition: eta_L >= R_L C_K R_R and eta_R >= R_R C_K R_L
/// (non-strict).
bool radial_margin_check(double eta_L, double eta_R, double R_L, double R_R, double C_K);

/// Lyapunov-Krasovskii functional on the trailing history segment:
/// V = 1/2 (|H~(0)|^2 + |X~(0)|^2 + |P~(0)|^2)
///   + C_K^2/(2 mu_L) int_{-tau1}^0 |X~|^2 + C_K^2/(2 mu_R) int_{-tau2}^0 |H~|^2,
/// integrals by the trapezoid rule on the stored grid.
double lyapunov_value(const HistoryBuffer& history, double C_K, double mu_L, double mu_R,
                      const StateVector& z_star, double tau_rl, double tau_lr);

struct MonotonicityResult {
  double max_increment = 0.0;  // max over steps of dV/dt + alpha_L|H~|^2 + alpha_R|X~|^2 + mu_P|P~|^2
  double discretization_budget = 0.0;  // reported O(dt) allowance
};

/// Requires a trajectory recorded with per-step Lyapunov diagnostics.
MonotonicityResult lyapunov_monotonicity(const Trajectory& traj, double alpha_L, double alpha_R,
                                         double mu_P);

/// State-dependent perturbation load: m_L = L_alpha |X*| + L_Q |H*|,
/// m_R = L_beta |H*| + L_W |X*|, M_sdc = max(m_L, m_R).
std::tuple<double, double, double> state_dependent_margin(double L_alpha, double L_beta,
                                                          double L_Q, double L_W,
                                                          double norm_H_star,
                                                          double norm_X_star);

/// Executive cross-gain matrix and its positive-definiteness.
std::pair<Eigen::Matrix3d, bool> executive_crossgain(double omega_L, double omega_R, double c_PH,
                                                     double c_PX, double c_PY, double L_PhiH,
                                                     double L_PhiX, double mu_P);

struct SlowFastResult {
  double max_violation = 0.0;  // max_t |Y - phi| - (decay + G1/kappa_Y)
  double G1 = 0.0;             // max finite-difference |dphi/dt|
};

/// Slow-fast tracking bound along a recorded trajectory; phi maps a state to
/// the quasi-steady valuative readout.
SlowFastResult slowfast_bound_check(const Trajectory& traj, double kappa_Y,
                                    const std::function<Eigen::VectorXd(const StateVector&)>& phi);

/// Upper-biased sampled estimate of the one-sided Lipschitz constant:
/// max over pairs of <F(u)-F(v), u-v> / |u-v|^2.
double one_sided_lipschitz_estimate(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& map,
                                    const std::function<Eigen::VectorXd(std::mt19937_64&)>& sampler,
                                    int n_pairs, std::mt19937_64& rng);

struct ReportOptions {
  int osl_pairs = 10000;
  int lipschitz_samples = 2000;
  int boundary_samples = 200;
  unsigned long seed = 1234;
};

/// Assemble every certificate for a configured system. Analytic Lipschitz
/// bounds use the scenario constants when present; sampled estimates are
/// always reported alongside.
StabilityReport build_stability_report(const ArchitectureConfig& cfg, const FieldParams& params,
                                       const ReportOptions& options = {});

}  // namespace refield
