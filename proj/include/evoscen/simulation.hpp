#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "evoscen/control.hpp"
#include "evoscen/models.hpp"
#include "evoscen/observation.hpp"
#include "evoscen/rewards.hpp"
#include "evoscen/world.hpp"

namespace evoscen {

struct SimulationConfig {
  MapSpec map = MapSpec::default_highway();
  SpawnConfig spawn;
  DynamicsConfig dynamics;
  ControlConfig control;
  ObservationConfig observation;
  RewardConfig reward;
  NilssonParams nilsson;
  StackelbergParams stackelberg;
  int max_steps = 600;
};

/// How one vehicle is driven during an episode.
struct Driver {
  ModelKind kind = ModelKind::Nilsson;
  const Mlp* policy = nullptr;  // DualDM only
  bool explore = false;         // Gaussian noise on the policy output
  bool learner = false;         // receives rewards
  double cruise = 0.0;          // ConstantSpeed; 0 keeps the spawn speed
};

struct EpisodeOptions {
  /// Compute the SV-neighborhood cooperative reward and share it among
  /// learners inside the adversarial area.
  bool cooperative = true;
  double explore_sigma = 0.1;
};

/// Everything known about one joint step; references are valid only during
/// the observer call.
struct StepInfo {
  const WorldState& before;
  const WorldState& after;
  const std::vector<Event>& events;
  const ControlMap& controls;
  const std::map<int, DriverDecision>& decisions;
  const std::map<int, ActionPair>& actions;           // DualDM vehicles, as executed
  const std::map<int, ActionPair>& policy_outputs;    // DualDM vehicles, before noise
  const std::map<int, ObservationGrid>& grids;        // DualDM vehicles at `before`
  const std::map<int, ObservationGrid>& next_grids;   // DualDM vehicles at `after`
  const std::vector<RewardBreakdown>& rewards;        // learners, ascending id
  const std::vector<int>& in_area;                    // BVs in the adversarial area at `before`
  double r_coop;
  bool done;       // a terminal event happened
  bool truncated;  // the step cap was reached without a terminal event
};

using StepObserver = std::function<void(const StepInfo&)>;

struct EpisodeResult {
  WorldState initial;
  WorldState final_world;
  long steps = 0;
  bool truncated = false;
};

/// Spawns a world from `seed` and drives it until a terminal event or
/// `max_steps`. `drivers[id]` drives vehicle `id`; the vector must cover
/// every spawned vehicle.
EpisodeResult run_episode(const RoadGeometry& road, const SimulationConfig& cfg, const std::vector<Driver>& drivers,
                          std::uint64_t seed, const EpisodeOptions& opts = {}, const StepObserver& observer = {});

}  // namespace evoscen
