#pragma once

#include <string>
#include <vector>

#include "refield/fields.hpp"
#include "refield/state.hpp"

namespace refield {

struct Scenario {
  std::string name;
  ArchitectureConfig cfg;
  FieldParams params;
  StateVector z_star;  // closed-form equilibrium of the built-in scenarios
};

/// K3 symbolic / P3 geometric worked example: scalar conductances
/// Q(Y) = 1 + delta_Q tanh Y and W(P) = 1 + delta_W tanh P, one-channel gated
/// mixture kernel K0 with gates k + sigma tanh(.), and reaction residuals
/// pinned so that Z* = (e1, e1, 0, 0) is an equilibrium.
Scenario build_k3p3(double k = 0.05, double sigma_alpha = 0.05, double sigma_beta = 0.05,
                    double delta_Q = 0.05, double delta_W = 0.05, double alpha_H = 1.0,
                    double alpha_X = 1.0, double kappa_Y = 1.0, double kappa_P = 1.0);

/// Same equilibrium with bounded dissipative valuation-executive dynamics:
/// dY = -kappa_Y Y + a_Y tanh(r_Y), dP = -kappa_P P + a_P tanh(r_P) with
/// centered readouts. Requires 0 < a_Y <= kappa_Y and 0 < a_P <= kappa_P.
Scenario build_k3p3_valuation(double k = 0.05, double sigma_alpha = 0.05,
                              double sigma_beta = 0.05, double delta_Q = 0.05,
                              double delta_W = 0.05, double alpha_H = 1.0, double alpha_X = 1.0,
                              double kappa_Y = 1.0, double kappa_P = 1.0, double a_Y = 0.5,
                              double a_P = 0.5);

/// Generic-mode scenario with logistic precision, sparsemax awareness over a
/// connected backbone, random bounded surrogates, and a random admissible
/// kernel family. Every admissibility invariant is enforced by construction.
Scenario random_scenario(unsigned long seed);

/// The k3p3 scenario with the kernel gates and auxiliaries frozen at the
/// equilibrium: the closed principal regime with fixed coupling operators.
Scenario frozen_principal_regime(const Scenario& base);

struct ClassCheck {
  std::string name;       // abstract operator class
  std::string criterion;  // human-readable condition
  double measured = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

struct CoarseGrainReport {
  std::vector<ClassCheck> checks;
  bool all_pass = false;
};

/// Membership certificates for the nine abstract operator classes. Performs
/// no config validation so that failing variants can be diagnosed.
CoarseGrainReport coarse_grain_report(const ArchitectureConfig& cfg, const FieldParams& params,
                                      unsigned long seed = 99);

/// Scenario lookup by name ("k3p3", "k3p3-valuation"); throws on unknown names.
Scenario scenario_by_name(const std::string& name);

}  // namespace refield
