#pragma once

#include <memory>
#include <string>
#include <vector>

#include "synccav/types.hpp"

namespace synccav::scenario {

class ValidatedScenario {
 public:
  const ScenarioConfig& config() const { return *cfg_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  // Indices into config().vehicles of the two subject CAVs, ordered by id.
  int subject(int k) const { return subjects_[k]; }
  double big_m() const { return cfg_->big_m; }
  // Reaction time of vehicle expressed in whole steps (tau / delta).
  int reaction_steps(int vehicle_index) const;

 private:
  friend ValidatedScenario validate_scenario(const ScenarioConfig&);
  std::shared_ptr<const ScenarioConfig> cfg_;
  std::vector<std::string> warnings_;
  int subjects_[2] = {-1, -1};
};

// Throws ValidationError listing every violated invariant.
ValidatedScenario validate_scenario(const ScenarioConfig& config);

Phase initial_phase(const ValidatedScenario& scenario);

ScenarioConfig parse_scenario_json(const std::string& text);
ScenarioConfig load_scenario_file(const std::string& path);
std::string scenario_to_json(const ScenarioConfig& config);

}  // namespace synccav::scenario
