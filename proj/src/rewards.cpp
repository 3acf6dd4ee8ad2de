#include "evoscen/rewards.hpp"

#include <algorithm>
#include <cmath>

#include "evoscen/control.hpp"
#include "evoscen/errors.hpp"

namespace evoscen {

void RewardConfig::validate() const {
  if (!(delta1 > 0 && delta2 > 0 && eta1 > 0 && eta2 > 0)) {
    throw ConfigError("rewards: delta1, delta2, eta1, eta2 must be positive");
  }
  if (r_c > 0 || p_lc > 0 || r_rv > 0) throw ConfigError("rewards: r_c, p_lc, r_rv must be non-positive");
  if (!(d_cap > 0)) throw ConfigError("rewards: d_cap must be positive");
}

double following_reward(double d_front, const RewardConfig& cfg) {
  const double e = d_front - cfg.d_desired;
  return -(e * e) / cfg.delta1;
}

double car_following_reward(double r_d_before, double r_d_after, const RewardConfig& cfg) {
  return cfg.mu * r_d_after + cfg.lambda * (r_d_after - r_d_before);
}

double lane_change_reward(double d_target, double d_current, bool lane_change_made, const RewardConfig& cfg) {
  if (!lane_change_made) return 0.0;
  const double delta = d_target - d_current;
  const double sgn = delta > 0 ? 1.0 : (delta < 0 ? -1.0 : 0.0);
  const double ratio = delta / cfg.delta2;
  return sgn * ratio * ratio + cfg.p_lc;
}

namespace {

bool is_ahead(const VehicleState& other, const VehicleState& ego) {
  return other.s > ego.s || (other.s == ego.s && other.id > ego.id);
}

double bumper_gap(const VehicleState& a, const VehicleState& b) {
  return std::abs(a.s - b.s) - 0.5 * (a.length + b.length);
}

}  // namespace

double front_gap(const WorldState& world, const VehicleState& ego, int lane, double d_cap) {
  double best = d_cap;
  for (const auto& o : world.vehicles) {
    if (o.id == ego.id || o.lane != lane || !is_ahead(o, ego)) continue;
    best = std::min(best, std::max(bumper_gap(o, ego), 0.0));
  }
  return best;
}

double rear_gap(const WorldState& world, const VehicleState& ego, int lane, double d_cap) {
  double best = d_cap;
  for (const auto& o : world.vehicles) {
    if (o.id == ego.id || o.lane != lane || is_ahead(o, ego)) continue;
    best = std::min(best, std::max(bumper_gap(o, ego), 0.0));
  }
  return best;
}

ViolationSet violations(const WorldState& world, const RoadGeometry& road, int ego_id, LaneChange decision,
                        const RewardConfig& cfg) {
  ViolationSet out;
  if (decision == LaneChange::Keep) return out;
  const VehicleState& ego = world.vehicle(ego_id);
  const int count = road.lane_count_at(ego.s);
  auto occupied = [&](int lane) {
    return std::any_of(world.vehicles.begin(), world.vehicles.end(), [&](const VehicleState& o) {
      return o.id != ego.id && o.lane == lane && bumper_gap(o, ego) <= cfg.gap_buffer;
    });
  };
  if (decision == LaneChange::Left) {
    if (ego.lane <= 1) {
      out.insert(Violation::LeftAtLeftmost);
    } else if (occupied(ego.lane - 1)) {
      out.insert(Violation::LeftGapOccupied);
    }
  } else {
    if (ego.lane >= count) {
      out.insert(Violation::RightAtRightmost);
    } else {
      if (road.is_ramp_lane(ego.lane + 1)) out.insert(Violation::EnterRamp);
      if (occupied(ego.lane + 1)) out.insert(Violation::RightGapOccupied);
    }
  }
  return out;
}

IndividualReward individual_reward(const StepContext& ctx, const RewardConfig& cfg) {
  IndividualReward r;
  if (ctx.collided) {
    r.total = cfg.r_c;
    return r;
  }
  r.r_cf = car_following_reward(following_reward(ctx.d_front_before, cfg),
                                following_reward(ctx.d_front_after, cfg), cfg);
  r.r_lc = lane_change_reward(ctx.d_target, ctx.d_current, ctx.decision != LaneChange::Keep, cfg);
  r.r_rv = ctx.violations.empty() ? 0.0 : cfg.r_rv;
  r.total = r.r_cf + r.r_lc + r.r_rv;
  return r;
}

StepContext step_context(const WorldState& before, const WorldState& after, const std::vector<Event>& events,
                         const RoadGeometry& road, int ego_id, LaneChange decision, const RewardConfig& cfg) {
  StepContext ctx;
  const VehicleState& e0 = before.vehicle(ego_id);
  const VehicleState& e1 = after.vehicle(ego_id);
  ctx.collided = std::any_of(events.begin(), events.end(), [ego_id](const Event& ev) {
    return ev.kind != EventKind::SvReachedEnd && ev.involves(ego_id);
  });
  ctx.d_front_before = front_gap(before, e0, e0.lane, cfg.d_cap);
  ctx.d_front_after = front_gap(after, e1, e1.lane, cfg.d_cap);
  ctx.decision = decision;
  if (decision != LaneChange::Keep) {
    ctx.d_current = ctx.d_front_before;
    const auto target = lane_change_target(decision, e0.lane, road.lane_count_at(e0.s));
    ctx.d_target = target ? front_gap(before, e0, *target, cfg.d_cap) : 0.0;
  }
  ctx.violations = violations(before, road, ego_id, decision, cfg);
  return ctx;
}

NeighborDistances sv_neighbors(const WorldState& world, const RoadGeometry& road, const RewardConfig& cfg) {
  const VehicleState& sv = world.sv();
  NeighborDistances out;
  const int count = road.lane_count_at(sv.s);
  auto side = [&](int lane) -> std::optional<NeighborDistances::Side> {
    if (lane < 1 || lane > count) return std::nullopt;
    return NeighborDistances::Side{front_gap(world, sv, lane, cfg.d_cap), rear_gap(world, sv, lane, cfg.d_cap)};
  };
  out.left = side(sv.lane - 1);
  out.right = side(sv.lane + 1);
  out.front = front_gap(world, sv, sv.lane, cfg.d_cap);
  return out;
}

double cooperative_reward(const NeighborDistances& before, const NeighborDistances& after, const RewardConfig& cfg) {
  auto side_term = [&](const std::optional<NeighborDistances::Side>& b, const std::optional<NeighborDistances::Side>& a) {
    if (!b || !a) return 0.0;
    const double m0 = std::min(b->front * b->front, b->back * b->back);
    const double m1 = std::min(a->front * a->front, a->back * a->back);
    return (m0 - m1) / cfg.eta1;
  };
  const double r_l = side_term(before.left, after.left);
  const double r_r = side_term(before.right, after.right);
  const double r_f = (before.front * before.front - after.front * after.front) / cfg.eta2;
  return r_l + r_r + r_f;
}

std::vector<RewardBreakdown> allocate(const std::vector<AgentReward>& individual, double r_coop,
                                      const std::vector<int>& adversarial_ids) {
  if (adversarial_ids.empty() && r_coop != 0.0) {
    throw ContractError("allocate: cooperative reward without any adversarial agent");
  }
  const double share = adversarial_ids.empty() ? 0.0 : r_coop / static_cast<double>(adversarial_ids.size());
  std::vector<RewardBreakdown> out;
  out.reserve(individual.size());
  for (const auto& agent : individual) {
    RewardBreakdown b;
    b.agent_id = agent.agent_id;
    b.r_ind = agent.individual.total;
    b.r_cf = agent.individual.r_cf;
    b.r_lc = agent.individual.r_lc;
    b.r_rv_applied = agent.individual.r_rv;
    const bool adversarial =
        std::find(adversarial_ids.begin(), adversarial_ids.end(), agent.agent_id) != adversarial_ids.end();
    b.modality = adversarial ? Modality::Adversarial : Modality::NonAdversarial;
    b.r_coop_share = adversarial ? share : 0.0;
    b.total = adversarial ? b.r_ind + share : b.r_ind;
    out.push_back(b);
  }
  return out;
}

}  // namespace evoscen
