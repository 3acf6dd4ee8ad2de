#pragma once

#include <optional>
#include <set>
#include <vector>

#include "evoscen/observation.hpp"
#include "evoscen/signals.hpp"
#include "evoscen/world.hpp"

namespace evoscen {

/// Individual and cooperative reward constants. Field names follow the
/// reward parameter table; d_cap bounds distances when nothing is ahead.
struct RewardConfig {
  double r_c = -3.0;
  double mu = 1.0;
  double lambda = 10.0;
  double d_desired = 15.0;
  double delta1 = 8000.0;
  double delta2 = 3000.0;
  double p_lc = -0.1;
  double r_rv = -0.3;
  double eta1 = 400.0;
  double eta2 = 4000.0;
  double d_cap = 100.0;
  double gap_buffer = 10.0;  // m, lane-change buffer of the gap constraints

  /// Throws ConfigError when a sign or positivity invariant is broken.
  void validate() const;
};

/// r_d = -(d_front - d_desired)^2 / delta1
double following_reward(double d_front, const RewardConfig& cfg);

/// r_cf = mu * r_d_after + lambda * (r_d_after - r_d_before)
double car_following_reward(double r_d_before, double r_d_after, const RewardConfig& cfg);

/// sgn(D) * (D / delta2)^2 + p_lc with D = d_target - d_current; 0 when no
/// lane-change decision was emitted.
double lane_change_reward(double d_target, double d_current, bool lane_change_made, const RewardConfig& cfg);

enum class Violation { LeftAtLeftmost, RightAtRightmost, LeftGapOccupied, RightGapOccupied, EnterRamp };
using ViolationSet = std::set<Violation>;

/// Behavioral constraints broken by `decision` of vehicle `ego_id`; empty
/// for Keep.
ViolationSet violations(const WorldState& world, const RoadGeometry& road, int ego_id, LaneChange decision,
                        const RewardConfig& cfg);

/// Bumper gap from `ego` to the nearest vehicle ahead in `lane`, capped at
/// d_cap (d_cap when none, 0 when a body overlaps longitudinally).
double front_gap(const WorldState& world, const VehicleState& ego, int lane, double d_cap);

/// Bumper gap from `ego` back to the nearest vehicle behind in `lane`.
double rear_gap(const WorldState& world, const VehicleState& ego, int lane, double d_cap);

struct StepContext {
  bool collided = false;  // collision or boundary violation this step
  double d_front_before = 0.0;
  double d_front_after = 0.0;
  LaneChange decision = LaneChange::Keep;
  double d_target = 0.0;
  double d_current = 0.0;
  ViolationSet violations;
};

struct IndividualReward {
  double r_cf = 0.0;
  double r_lc = 0.0;
  double r_rv = 0.0;
  double total = 0.0;
};

/// r_c on collision, otherwise r_cf + r_lc + (r_rv if any violation).
IndividualReward individual_reward(const StepContext& ctx, const RewardConfig& cfg);

/// Builds the context for vehicle `ego_id` from the snapshots around one
/// joint step. `decision` is the lane-change decision emitted at `before`.
StepContext step_context(const WorldState& before, const WorldState& after, const std::vector<Event>& events,
                         const RoadGeometry& road, int ego_id, LaneChange decision, const RewardConfig& cfg);

/// SV-relative gaps; a side is nullopt when that adjacent lane is missing.
struct NeighborDistances {
  struct Side {
    double front = 0.0;
    double back = 0.0;
  };
  std::optional<Side> left;
  std::optional<Side> right;
  double front = 0.0;
};

NeighborDistances sv_neighbors(const WorldState& world, const RoadGeometry& road, const RewardConfig& cfg);

/// r_coop = r_l + r_r + r_f from the SV neighborhood before and after a joint
/// step. A side missing in either snapshot contributes 0.
double cooperative_reward(const NeighborDistances& before, const NeighborDistances& after, const RewardConfig& cfg);

struct RewardBreakdown {
  int agent_id = -1;
  double r_ind = 0.0;
  double r_cf = 0.0;
  double r_lc = 0.0;
  double r_rv_applied = 0.0;
  double r_coop_share = 0.0;
  double total = 0.0;
  Modality modality = Modality::NonAdversarial;
};

struct AgentReward {
  int agent_id = -1;
  IndividualReward individual;
};

/// Even split of r_coop over the agents in `adversarial_ids`. Throws
/// ContractError when r_coop is nonzero and no agent is adversarial.
std::vector<RewardBreakdown> allocate(const std::vector<AgentReward>& individual, double r_coop,
                                      const std::vector<int>& adversarial_ids);

}  // namespace evoscen
