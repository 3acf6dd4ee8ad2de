#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "evoscen/nn.hpp"
#include "evoscen/observation.hpp"
#include "evoscen/signals.hpp"
#include "evoscen/world.hpp"

namespace evoscen {

/// Target-speed output (Nilsson, Stackelberg, constant speed).
struct StrategicDecision {
  double v_target = 0.0;
  LaneChange lane_change = LaneChange::Keep;
  friend bool operator==(const StrategicDecision&, const StrategicDecision&) = default;
};

/// Direct longitudinal command (Dual-DM).
struct OperationalDecision {
  double a_long = 0.0;
  LaneChange lane_change = LaneChange::Keep;
  friend bool operator==(const OperationalDecision&, const OperationalDecision&) = default;
};

using DriverDecision = std::variant<StrategicDecision, OperationalDecision>;

LaneChange lane_change_of(const DriverDecision& d);

enum class ModelKind { Nilsson, Stackelberg, DualDM, ConstantSpeed };

std::string to_string(ModelKind kind);
/// Accepts the names produced by to_string, case-insensitively.
ModelKind model_kind_from_string(const std::string& name);

struct NilssonParams {
  double w1 = 1.0;          // per metre of drivable distance
  double w2 = 0.5;          // per m/s of lane mean speed
  double w3 = 0.3;          // per lane of displacement
  double hysteresis = 1.0;  // utility margin required to leave the current lane
  double g_min = 12.0;      // m, front and rear gap acceptance
  double ttc_min = 3.0;     // s
  double lookahead = 100.0; // m
  double time_gap = 1.5;    // s
  double standstill = 2.0;  // m
};

/// Lane-utility driver with gap acceptance. Never proposes the ramp lane.
StrategicDecision nilsson_decide(const WorldState& world, const RoadGeometry& road, int ego_id,
                                 const NilssonParams& params = {});

/// Gap acceptance used by nilsson_decide for a move of `ego` into `lane`.
bool nilsson_gap_accepted(const WorldState& world, const VehicleState& ego, int lane, const NilssonParams& params);

struct StackelbergParams {
  double horizon = 2.0;          // s, look-ahead of the one-shot game
  double decel_step = 5.0;       // m/s, speed drop of the decel action
  double w_progress = 1.0;       // per v/v_max
  double w_gap = 1.0;            // weight of the squared time-gap shortfall
  double lane_change_cost = 0.1;
  double g_min = 12.0;           // m, minimum accepted gap in a target lane
  double time_gap = 1.2;         // s, desired time headway
  double standstill = 2.0;       // m
  double assumed_accel = 2.0;    // m/s^2, speed change rate used in prediction
  double assumed_decel = 4.0;    // m/s^2
};

enum class SpeedAction { Hold, Accel, Decel };

struct StackelbergChoice {
  LaneChange lane = LaneChange::Keep;
  SpeedAction speed = SpeedAction::Hold;
  double payoff = 0.0;
};

/// Scores every admissible SV action under the follower's best response,
/// in tie-break order (keep, left, right) x (hold, accel, decel).
std::vector<StackelbergChoice> stackelberg_options(const WorldState& world, const RoadGeometry& road, int sv_id,
                                                   const StackelbergParams& params = {});

/// Leader-follower one-shot game over {keep, left, right} x {accel, hold, decel}.
StrategicDecision stackelberg_decide(const WorldState& world, const RoadGeometry& road, int sv_id,
                                     const StackelbergParams& params = {});

/// Cruise at `cruise` (m/s) but never closer than the time gap to a leader.
StrategicDecision constant_speed_decide(const WorldState& world, int ego_id, double cruise,
                                        double time_gap = 1.5, double standstill = 2.0);

inline constexpr int kObservationSize = static_cast<int>(ObservationGrid::kSize);
inline constexpr int kActionSize = 2;

/// Actor network of the shared policy: 625 -> 256 -> 256 -> 2, tanh output.
Mlp make_actor(Rng& rng, int hidden = 256);

/// Loads an actor from a weight file, or from `actor.txt` when `path` is a
/// checkpoint directory. Throws ConfigError on shape mismatch.
Mlp load_policy(const std::filesystem::path& path);

Eigen::VectorXd flatten(const ObservationGrid& grid);

/// Deterministic policy action for each grid, in order.
std::vector<ActionPair> policy_actions(const Mlp& actor, const std::vector<ObservationGrid>& grids);

OperationalDecision dualdm_decide(const ObservationGrid& grid, const Mlp& actor);

OperationalDecision to_decision(const ActionPair& action);

struct ModelBinding {
  int vehicle_id = 0;
  ModelKind kind = ModelKind::Nilsson;
  friend bool operator==(const ModelBinding&, const ModelBinding&) = default;
};

struct PopulationConfig {
  std::map<ModelKind, double> proportions{{ModelKind::Nilsson, 1.0}};
};

/// Binds the SV (id 0) to Stackelberg and BVs 1..bv_count to NPC kinds by
/// largest-remainder rounding of the proportions, shuffled by `seed`.
/// Throws ConfigError when proportions are negative, name the SUT kind, or do
/// not sum to 1.
std::vector<ModelBinding> population_schedule(const PopulationConfig& cfg, int bv_count, std::uint64_t seed);

}  // namespace evoscen
