#include "refield/integrator.hpp"

#include <cmath>

#include "refield/stability.hpp"

namespace refield {

HistoryBuffer make_history(const ArchitectureConfig& cfg, const StateVector& z0) {
  // K = ceil(tau_max / dt), with one slot of slack so the one-step-back
  // prediction errors are defined even for instantaneous coupling
  int k = std::max(1, static_cast<int>(std::ceil(cfg.tau_max() / cfg.dt)));
  HistoryBuffer h(k, cfg.dt);
  h.init_constant(z0);
  return h;
}

double principal_error(const StateVector& z, const StateVector& z_star) {
  double h2 = (z.H_L - z_star.H_L).squaredNorm();
  double x2 = (z.X_R - z_star.X_R).squaredNorm();
  double p2 = (z.P - z_star.P).squaredNorm();
  return std::sqrt(h2 + x2 + p2);
}

Trajectory integrate(const ArchitectureConfig& cfg, const FieldParams& params,
                     const HistoryBuffer& initial, long steps, const IntegrateOptions& options) {
  validate_config(cfg, params);
  if (!initial.initialized()) throw std::invalid_argument("integrate: history not initialized");

  HistoryBuffer hist = initial;
  AuxState aux = options.initial_aux ? *options.initial_aux : AuxState::zeros(cfg);
  Trajectory out;
  out.dt = cfg.dt;
  out.record_every = options.record_every;
  out.diag_every = options.diag_every;
  out.steps = steps;

  auto diag_at = [&](double t) {
    StepDiagnostics d;
    d.t = t;
    const StateVector& z = hist.current();
    if (options.equilibrium) {
      d.err_H = (z.H_L - options.equilibrium->H_L).norm();
      d.err_X = (z.X_R - options.equilibrium->X_R).norm();
      d.err_P = (z.P - options.equilibrium->P).norm();
      d.principal_error = std::sqrt(d.err_H * d.err_H + d.err_X * d.err_X + d.err_P * d.err_P);
      if (options.lyapunov) {
        d.lyapunov = lyapunov_value(hist, options.lyapunov->C_K, options.lyapunov->mu_L,
                                    options.lyapunov->mu_R, *options.equilibrium, cfg.tau_r_to_l,
                                    cfg.tau_l_to_r);
      }
    }
    if (options.compute_residual) d.residual = residual_norm(z, cfg, params);
    if (options.validate_every_step)
      d.violations = static_cast<int>(validate_state(z, cfg).size());
    return d;
  };

  double t = 0.0;
  if (options.record_states) {
    out.times.push_back(t);
    out.states.push_back(hist.current());
    out.aux_h_norm.push_back(aux.h.size() ? aux.h.norm() : 0.0);
  }
  if (options.diag_every > 0) out.diag.push_back(diag_at(t));

  for (long step = 0; step < steps; ++step) {
    StepInputs in;
    if (options.inputs) in = options.inputs(step, t);
    if (in.u.size() == 0) in.u = Eigen::VectorXd::Zero(params.homeostat.n_u);
    StateVector z1;
    try {
      z1 = discrete_step(hist, aux, in, cfg, params);
    } catch (const std::runtime_error& e) {
      throw NumericAbort(step, std::string("integrate aborted at step ") + std::to_string(step) +
                                   ": " + e.what());
    }
    hist.push(z1);
    t = (step + 1) * cfg.dt;
    bool record = options.record_states &&
                  ((step + 1) % options.record_every == 0 || step + 1 == steps);
    if (record) {
      out.times.push_back(t);
      out.states.push_back(z1);
      out.aux_h_norm.push_back(aux.h.norm());
    }
    if (options.diag_every > 0 && ((step + 1) % options.diag_every == 0 || step + 1 == steps))
      out.diag.push_back(diag_at(t));
  }
  out.final_history = hist;
  out.final_aux = aux;
  return out;
}

double residual_norm(const StateVector& z, const ArchitectureConfig& cfg,
                     const FieldParams& params, const Eigen::VectorXd* u) {
  Eigen::VectorXd uu = u ? *u : Eigen::VectorXd::Zero(params.homeostat.n_u);
  StateVector v = continuous_rhs(z, z, z, uu, cfg, params);
  return v.flatten().norm();
}

EquilibriumResult find_equilibrium(const ArchitectureConfig& cfg, const FieldParams& params,
                                   double tol, int max_iters, double damping) {
  validate_config(cfg, params);
  double gamma = estimate_stiffness(cfg, params);
  double step = damping / gamma;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(params.homeostat.n_u);

  EquilibriumResult best;
  StateVector z = project_state(StateVector::zeros(cfg), cfg);
  best.z = z;
  best.residual = std::numeric_limits<double>::infinity();

  for (int it = 0; it < max_iters; ++it) {
    StateVector v = continuous_rhs(z, z, z, u, cfg, params);
    double r = v.flatten().norm();
    if (r < best.residual) {
      best.residual = r;
      best.z = z;
      best.iterations = it;
    }
    if (r <= tol) {
      best.converged = true;
      return best;
    }
    z = project_state(z + step * v, cfg);
    if (!z.all_finite()) break;
  }
  best.converged = best.residual <= tol;
  return best;
}

}  // namespace refield
