#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "refield/fields.hpp"
#include "refield/state.hpp"

namespace refield {

/// Raised when a state component turns NaN/Inf; carries the step index.
struct NumericAbort : std::runtime_error {
  long step;
  NumericAbort(long s, const std::string& what) : std::runtime_error(what), step(s) {}
};

struct StepDiagnostics {
  double t = 0.0;
  double principal_error = 0.0;  // sqrt(|H~|^2 + |X~|^2 + |P~|^2) when an equilibrium is given
  double lyapunov = 0.0;         // Lyapunov-Krasovskii value when tracking is on
  double err_H = 0.0, err_X = 0.0, err_P = 0.0;
  double residual = 0.0;  // continuous RHS magnitude (only when requested)
  int violations = 0;
};

struct Trajectory {
  double dt = 0.0;
  int record_every = 1;
  int diag_every = 0;
  std::vector<double> times;
  std::vector<StateVector> states;       // every record_every steps, plus the end state
  std::vector<StepDiagnostics> diag;     // every diag_every steps when diagnostics are on
  std::vector<double> aux_h_norm;        // homeostatic deviation magnitude per record
  HistoryBuffer final_history{0, 1.0};   // for checkpoint/resume
  AuxState final_aux;
  long steps = 0;
};

struct LyapunovSpec {
  double C_K = 0.0;
  double mu_L = 1.0, mu_R = 1.0, mu_P = 1.0;
};

struct IntegrateOptions {
  int record_every = 1;
  bool record_states = true;
  int diag_every = 0;                         // 0 = off; 1 = per step (needed for monotonicity)
  bool compute_residual = false;              // costly; off by default
  std::optional<StateVector> equilibrium;     // reference for errors and V
  std::optional<LyapunovSpec> lyapunov;       // track V along the run
  std::function<StepInputs(long, double)> inputs;  // default: zeros
  bool validate_every_step = false;           // full validate_state audit per step
  std::optional<AuxState> initial_aux;        // resume support
};

/// Explicit Euler with integer delay taps, projection splitting after each
/// step. Aborts with NumericAbort on NaN/Inf.
Trajectory integrate(const ArchitectureConfig& cfg, const FieldParams& params,
                     const HistoryBuffer& initial, long steps,
                     const IntegrateOptions& options = {});

/// History sized for the configured delays (at least one slot of slack so the
/// one-step-back prediction errors are always defined).
HistoryBuffer make_history(const ArchitectureConfig& cfg, const StateVector& z0);

struct EquilibriumResult {
  StateVector z;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Damped fixed-point iteration on the stationary target map
/// z <- project(z + (damping / stiffness) RHS(z)).
EquilibriumResult find_equilibrium(const ArchitectureConfig& cfg, const FieldParams& params,
                                   double tol = 1e-10, int max_iters = 50000,
                                   double damping = 0.5);

/// Magnitude of the continuous-time RHS at a constant history pinned at z.
double residual_norm(const StateVector& z, const ArchitectureConfig& cfg,
                     const FieldParams& params,
                     const Eigen::VectorXd* u = nullptr);

/// sqrt(|H - H*|^2 + |X - X*|^2 + |P - P*|^2).
double principal_error(const StateVector& z, const StateVector& z_star);

}  // namespace refield
