#pragma once

#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>

#include "refield/integrator.hpp"
#include "refield/scenarios.hpp"
#include "refield/stability.hpp"

namespace refield {

/// Malformed or inconsistent configuration input; message carries the
/// location of the first offending key.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

nlohmann::json config_to_json(const Scenario& scenario);
/// Strict parser: unknown keys are errors, not warnings.
Scenario config_from_json(const nlohmann::json& j);
Scenario load_config_file(const std::string& path);
void save_config_file(const Scenario& scenario, const std::string& path);

nlohmann::json state_to_json(const StateVector& z);
StateVector state_from_json(const nlohmann::json& j, const ArchitectureConfig& cfg);

nlohmann::json kernel_to_json(const CouplingKernel& k);
CouplingKernel kernel_from_json(const nlohmann::json& j, const std::string& path);

nlohmann::json report_to_json(const StabilityReport& rep);
std::string report_to_text(const StabilityReport& rep);

nlohmann::json coarse_grain_to_json(const CoarseGrainReport& rep);
std::string coarse_grain_to_text(const CoarseGrainReport& rep);

/// CSV: one row per recorded step (t, flattened state, diagnostics columns).
void write_trajectory_csv(const std::string& path, const Trajectory& traj,
                          const ArchitectureConfig& cfg, const FieldParams& params,
                          const std::optional<StateVector>& z_star);
void write_trajectory_json(const std::string& path, const Trajectory& traj,
                           const ArchitectureConfig& cfg, const FieldParams& params,
                           const std::optional<StateVector>& z_star);

struct Checkpoint {
  HistoryBuffer history{0, 1.0};
  AuxState aux;
  long steps_done = 0;
};

nlohmann::json checkpoint_to_json(const Trajectory& traj);
Checkpoint checkpoint_from_json(const nlohmann::json& j, const ArchitectureConfig& cfg);

}  // namespace refield
