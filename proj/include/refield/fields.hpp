#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "refield/state.hpp"

namespace refield {

/// Bounded Lipschitz surrogate x -> gain * tanh(W x + b). An empty W makes
/// the map constant gain * tanh(b) (zero when b is empty too).
struct TanhLinearMap {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
  double gain = 1.0;

  bool is_zero() const { return W.size() == 0 && b.size() == 0; }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  double lipschitz() const;  // gain * largest singular value of W
  /// Rescale W so that lipschitz() <= bound.
  void clip_lipschitz(double bound);
};

struct SymbolicParams {
  double alpha_H = 1.0;        // residual damping of F_L
  Eigen::MatrixXd offset;      // T x d_L constant (equilibrium pin)
  TanhLinearMap phi;           // on [vec(H); B_theta; P; M], output vec(T x d_L)
};

struct GeometricParams {
  double alpha_X = 1.0;
  Eigen::MatrixXd offset;      // V x d_R per-node data
  TanhLinearMap phi_local;     // shared node-local map on [x_i; agg_i; s_i], output d_R
  Eigen::VectorXd edge_feat;   // ||t_ij||^2 per edge of G_R (fixed SE(d) invariants)
};

struct ValuativeParams {
  double kappa_Y = 1.0;
  double a_Y = 0.0;                  // tanh gain of G_Y; 0 = pure decay
  Eigen::MatrixXd w_H, w_X, w_P;     // n_Y x (T dL), n_Y x (V dR), n_Y x n_P
  Eigen::VectorXd c_H, c_X;          // readout centers
  Eigen::MatrixXd w_h;               // n_Y x n_u (homeostatic deviation)
  Eigen::MatrixXd w_aux;             // n_Y x 3: [eps_pred, novelty, outcome r]
};

struct ExecutiveParams {
  double kappa_P = 1.0;
  Eigen::MatrixXd W_P;               // n_P x n_P, ||W_P||_op < mu_P when nonzero
  double a_P = 0.0;                  // readout tanh gain
  Eigen::MatrixXd w_H, w_X, w_Y;     // readout weights
  Eigen::VectorXd c_H, c_X;
  Eigen::MatrixXd w_dtheta;          // n_P x total theta dim (parameter deltas)
};

struct NeuromodParams {
  Eigen::MatrixXd W;  // 5 x n_Y
  Eigen::VectorXd b;  // 5
};

/// Indices into the neuromodulatory 5-vector.
enum NeuromodIndex { kMuDA = 0, kMuACh = 1, kMuNE = 2, kMu5HT = 3, kMuOP = 4 };

enum class PrecisionMode { logistic, scalar_gate };

struct PrecisionParams {
  PrecisionMode mode = PrecisionMode::logistic;
  Eigen::VectorXd a_logits, b_logits;  // per edge of G_L (logistic); b >= 0
  double delta_Q = 0.0;                // scalar_gate: Q = (1 + delta_Q tanh(w.Y)) * base
  Eigen::VectorXd w_gate;              // n_Y
};

enum class AwarenessMode { sparsemax_logits, scalar_gate };

struct AwarenessParams {
  AwarenessMode mode = AwarenessMode::sparsemax_logits;
  Eigen::VectorXd omega_base;  // per directed edge of G_R
  double omega_x_scale = 0.0;  // logit term from x_src . x_dst
  Eigen::VectorXd ne_shift;    // per edge, scaled by mu_NE
  double overlay_scale = 0.0;  // conductance overlay from symmetrized simplex weights
  double delta_W = 0.0;        // scalar_gate: cond = (1 + delta_W tanh(w.P)) * backbone
  Eigen::VectorXd w_gate;      // n_P
};

struct MemoryParams {
  double eps_M = 1e-6;     // per-step gate floor margin
  double gate_rate = 1.0;  // continuous consolidation rate; per-step gate ~ dt * rate
  Eigen::VectorXd w_gate;  // optional n_Y modulation of the rate (sigmoid)
  double C_M = 1.0;        // write bound, <= R_M
  TanhLinearMap phi;       // on centered [pool(H); Y], output n_M
  Eigen::VectorXd c_in;    // input center
};

struct PolicyParams {
  Eigen::VectorXd lambda_z;  // continuous trace leak rate per family
  Eigen::VectorXd eta;       // continuous learning rate per family
  double lambda_reg = 0.5;
  double D = 1.0;            // credit bound
  bool signed_delta = true;  // delta = 2 mu_DA - 1; false: delta = mu_DA
  double eps_floor = 0.01;   // policy flooring epsilon
};

enum class ReliabilityKernelKind { gaussian, inverse, tent };

struct ReliabilityParams {
  double rate = 1.0;  // continuous relaxation rate; per-step alpha ~ dt * rate
  ReliabilityKernelKind kernel = ReliabilityKernelKind::gaussian;
  double tent_sigma = 1.0;
};

struct HomeostatParams {
  double kappa_h = 1.0;
  double B_u = 1.0;
  int n_u = 1;
};

struct RoutingParams {
  Eigen::MatrixXd base_scores;  // n_s x n_s
  double beta_rho = 0.0;        // reliability salience boost
  double w_sal_h = 0.0;         // symbolic-column salience from mean(H)
  double w_sal_x = 0.0;         // geometric-column salience from mean(X)
  double relax_rate = 1.0;      // continuous relaxation rate toward the sparsemax target
};

/// State-dependent mixture gate g(Z) = k_base + sigma * tanh(w . source).
struct GateSpec {
  enum class Source { none, valuative, executive };
  double k_base = 0.0;
  double sigma = 0.0;
  Source source = Source::none;
  Eigen::VectorXd w;

  double eval(const Eigen::VectorXd& Y, const Eigen::VectorXd& P) const;
  double bound() const { return std::abs(k_base) + std::abs(sigma); }
};

struct FieldParams {
  SymbolicParams symbolic;
  GeometricParams geometric;
  ValuativeParams valuative;
  ExecutiveParams executive;
  NeuromodParams neuromod;
  PrecisionParams precision;
  AwarenessParams awareness;
  MemoryParams memory;
  PolicyParams policy;
  ReliabilityParams reliability;
  HomeostatParams homeostat;
  RoutingParams routing;
  std::vector<GateSpec> gates_fwd;  // one per kernel mixture channel
  std::vector<GateSpec> gates_adj;

  /// Closed principal regime (A7): auxiliaries pinned at frozen_values,
  /// kernel gates evaluated at the pinned state.
  bool frozen_auxiliaries = false;
  std::optional<StateVector> frozen_values;
};

/// Throws std::invalid_argument when an admissibility invariant fails
/// (Lip(phi) >= damping, ||W_P||_op >= mu_P, a_Y > kappa_Y R_Y, dt out of
/// bounds, disconnected backbone, gate bounds exceeding the kernel's).
void validate_config(const ArchitectureConfig& cfg, const FieldParams& params);

/// Conservative stiffness estimate used for the explicit-Euler step bound.
double estimate_stiffness(const ArchitectureConfig& cfg, const FieldParams& params);

struct StepInputs {
  Eigen::VectorXd u;
  int action = 0;
  double outcome_r = 0.0;
};

/// Stagewise-derived variables carried alongside the trajectory (the
/// homeostatic deviation is not a component of Z).
struct AuxState {
  Eigen::VectorXd h;
  Eigen::VectorXd u_prev;
  double eps_pred = 0.0;
  double novelty = 0.0;
  double delta_credit = 0.0;
  Eigen::MatrixXd C_RL, C_LR;
  std::vector<Eigen::VectorXd> delta_theta;

  static AuxState zeros(const ArchitectureConfig& cfg);
};

// ---- component vector fields and stage maps --------------------------------

/// Reaction residual F_L = -alpha_H H + offset + phi([vec H; B_Theta; P; M]).
Eigen::MatrixXd symbolic_reaction(const StateVector& z, const ArchitectureConfig& cfg,
                                  const FieldParams& params);

/// dH = -Lap(Q_L) H + F_L(Z) + C_RL.
Eigen::MatrixXd symbolic_rhs(const StateVector& z, const Eigen::MatrixXd& c_rl,
                             const Eigen::VectorXd& u, const ArchitectureConfig& cfg,
                             const FieldParams& params);

/// Reaction residual F_R; node-local shared map over awareness-weighted
/// aggregates and SE(d)-invariant edge scalars.
Eigen::MatrixXd geometric_reaction(const StateVector& z, const ArchitectureConfig& cfg,
                                   const FieldParams& params);

/// Mirror for X_R with the awareness conductance Laplacian; the reaction
/// consumes only SE(d)-invariant edge scalars.
Eigen::MatrixXd geometric_rhs(const StateVector& z, const Eigen::MatrixXd& c_lr,
                              const Eigen::VectorXd& u, const ArchitectureConfig& cfg,
                              const FieldParams& params);

/// dY = -kappa_Y Y + a_Y tanh(r_Y(H, X, P)) + auxiliary readout channels.
Eigen::VectorXd valuative_rhs(const Eigen::VectorXd& Y, const Eigen::MatrixXd& H,
                              const Eigen::MatrixXd& X, const Eigen::VectorXd& P,
                              const Eigen::VectorXd& h, double eps_pred, double novelty,
                              double outcome_r, const FieldParams& params);

/// dP = -kappa_P P + tanh(W_P P) + a_P tanh(r_P(H, X, Y)) + w_dtheta . dtheta.
Eigen::VectorXd executive_rhs(const Eigen::VectorXd& P, const Eigen::MatrixXd& H,
                              const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                              const std::vector<Eigen::VectorXd>& delta_theta,
                              const FieldParams& params);

/// mu = sigma(W Y + b) in (0,1)^5.
Eigen::VectorXd neuromod_readout(const Eigen::VectorXd& Y, const NeuromodParams& params);

/// Q_L = eps_Q + (R_Q - eps_Q) sigma(a_L + mu_ACh b_L) per edge (logistic mode).
Eigen::VectorXd precision_field(double mu_ACh, const ArchitectureConfig& cfg,
                                const FieldParams& params);

/// Scalar-gate conductance Q(Y) = (1 + delta_Q tanh(w.Y)) * base weights.
Eigen::VectorXd scenario_precision_conductance(const Eigen::VectorXd& Y,
                                               const ArchitectureConfig& cfg,
                                               const FieldParams& params);

struct AwarenessField {
  Eigen::VectorXd simplex_weights;  // per directed edge, in-groups on simplices
  Eigen::VectorXd conductance;      // symmetrized, backbone + nonnegative overlay
};

/// Per-node sparsemax awareness weights plus the spectral-gap-carrying
/// conductance field W_base + overlay.
AwarenessField awareness_field(const Eigen::MatrixXd& X, double mu_NE, const Eigen::VectorXd& P,
                               const ArchitectureConfig& cfg, const FieldParams& params);

struct InterconnectorSignals {
  Eigen::MatrixXd C_RL;  // T x d_L
  Eigen::MatrixXd C_LR;  // V x d_R
  double gate_rl = 0.0, gate_lr = 0.0;  // routing gates in [0,1]
};

/// Gated, delayed kernel applications. Routing gates are the cross entries
/// of R_Theta; mixture gate values are supplied per direction.
InterconnectorSignals interconnector_signals(
    const HistoryBuffer& history, const Eigen::MatrixXd& r_theta, const CouplingKernel& kernel,
    const std::optional<Eigen::MatrixXd>& alpha, const std::optional<Eigen::MatrixXd>& beta,
    const std::vector<double>& gates_fwd, const std::vector<double>& gates_adj, int n_rl,
    int n_lr);

/// Leaky integrator h+ = (1 - kappa_h dt) h + dt f_h(u), f_h = clip to B_u.
Eigen::VectorXd homeostatic_step(const Eigen::VectorXd& h, const Eigen::VectorXd& u,
                                 double kappa_h, double B_u, double dt);

double reliability_kernel(double normalized_error, const ReliabilityParams& params);

/// rho+ = (1 - alpha) rho + alpha phi(||eps|| / sqrt(d_i)).
double reliability_update(double rho, const Eigen::VectorXd& eps, double alpha,
                          const ReliabilityParams& params, int d_i);

/// REINFORCE score d/dtheta log pi^eps(action) for the floored sparsemax policy.
Eigen::VectorXd policy_score(const Eigen::VectorXd& theta, int action, double eps_floor);

struct PolicyUpdate {
  Eigen::VectorXd z_next, theta_next, delta_theta;
};

/// z+ = lambda z + score; dtheta = eta (delta z - lambda_reg theta) using the
/// OLD trace; theta+ = ball projection. Requires |delta| <= D.
PolicyUpdate eligibility_policy_update(const Eigen::VectorXd& z, const Eigen::VectorXd& theta,
                                       double delta, const Eigen::VectorXd& score,
                                       double lambda_step, double eta_step, double lambda_reg,
                                       double D, double R_theta);

/// Bounded write projection Phi_M on centered [pool(H); Y], ||.|| <= C_M.
Eigen::VectorXd memory_write(const Eigen::MatrixXd& H, const Eigen::VectorXd& Y,
                             const FieldParams& params);

/// M+ = (1 - g_M) M + g_M Phi_M(H+, Y+), g_M in [eps_M, 1 - eps_M].
Eigen::VectorXd memory_update(const Eigen::VectorXd& M, double g_M, const Eigen::MatrixXd& H_next,
                              const Eigen::VectorXd& Y_next, const FieldParams& params);

/// Rows: sparsemax(score row + beta_rho * rho broadcast over columns).
Eigen::MatrixXd routing_update(const Eigen::MatrixXd& scores, const Eigen::VectorXd& rho,
                               double beta_rho);

// ---- the 8-stage discrete update -------------------------------------------

struct StageRecord {
  std::string output;
  std::string stage;
  std::vector<std::string> inputs;
};

struct StageTrace {
  std::vector<StageRecord> records;
};

/// True when every recorded input was produced before its consumer
/// (current-state, history, and exogenous inputs are sources).
bool trace_acyclic(const StageTrace& trace);

/// One step of the stagewise map: Stage 1 (neuromod) -> 2 (Q_L, W_R) ->
/// 3 (interconnector) -> 4 (H_L) -> 5 (X_R) -> 6 (Y) -> 7 (routing) ->
/// 8.1-8.5 (delta, rho, z/theta, P, M), in exactly this order. The result
/// passes validate_state; aux is advanced in place.
StateVector discrete_step(const HistoryBuffer& history, AuxState& aux, const StepInputs& in,
                          const ArchitectureConfig& cfg, const FieldParams& params,
                          StageTrace* trace = nullptr);

/// Continuous-time right-hand side of the master equation at the given
/// current/delayed states. Components updated by direct stagewise assignment
/// are given unit-rate relaxation velocities target(Z) - current.
StateVector continuous_rhs(const StateVector& z, const StateVector& z_delay_rl,
                           const StateVector& z_delay_lr, const Eigen::VectorXd& u,
                           const ArchitectureConfig& cfg, const FieldParams& params);

/// Effective mixture gate values at a state (empty for ungated kernels).
std::vector<double> gate_values(const std::vector<GateSpec>& specs, const Eigen::VectorXd& Y,
                                const Eigen::VectorXd& P);

}  // namespace refield
