#include "evoscen/simulation.hpp"

#include <algorithm>

#include "evoscen/errors.hpp"
#include "evoscen/rng.hpp"

namespace evoscen {

namespace {

std::map<int, ObservationGrid> encode_all(const WorldState& world, const std::vector<Driver>& drivers,
                                          const ObservationConfig& cfg) {
  std::map<int, ObservationGrid> out;
  for (std::size_t id = 0; id < drivers.size(); ++id) {
    if (drivers[id].kind == ModelKind::DualDM) out.emplace(static_cast<int>(id), encode(world, static_cast<int>(id), cfg));
  }
  return out;
}

}  // namespace

EpisodeResult run_episode(const RoadGeometry& road, const SimulationConfig& cfg, const std::vector<Driver>& drivers,
                          std::uint64_t seed, const EpisodeOptions& opts, const StepObserver& observer) {
  EpisodeResult result;
  WorldState world = spawn(road, cfg.spawn, derive_seed(seed, 0));
  if (drivers.size() != world.vehicles.size()) {
    throw ContractError("run_episode: " + std::to_string(drivers.size()) + " drivers for " +
                        std::to_string(world.vehicles.size()) + " vehicles");
  }
  for (std::size_t id = 0; id < drivers.size(); ++id) {
    if (drivers[id].kind == ModelKind::DualDM && !drivers[id].policy) {
      throw ContractError("run_episode: DualDM driver without a policy");
    }
  }
  result.initial = world;
  Rng noise(derive_seed(seed, 1));

  std::map<int, double> cruise;
  for (const auto& v : world.vehicles) {
    const Driver& d = drivers[static_cast<std::size_t>(v.id)];
    cruise[v.id] = d.cruise > 0.0 ? d.cruise : v.v_s;
  }
  std::map<int, VehicleController> controllers;
  std::map<int, ObservationGrid> grids = encode_all(world, drivers, cfg.observation);
  std::vector<int> learners;
  for (std::size_t id = 0; id < drivers.size(); ++id) {
    if (drivers[id].learner) learners.push_back(static_cast<int>(id));
  }

  while (true) {
    // Batched forward per distinct policy.
    std::map<const Mlp*, std::vector<int>> by_policy;
    for (const auto& [id, grid] : grids) by_policy[drivers[static_cast<std::size_t>(id)].policy].push_back(id);
    std::map<int, ActionPair> raw, actions;
    for (const auto& [policy, ids] : by_policy) {
      std::vector<ObservationGrid> batch;
      for (int id : ids) batch.push_back(grids.at(id));
      const auto out = policy_actions(*policy, batch);
      for (std::size_t k = 0; k < ids.size(); ++k) raw[ids[k]] = out[k];
    }
    for (const auto& [id, a] : raw) {
      if (drivers[static_cast<std::size_t>(id)].explore) {
        const double n0 = noise.normal(0.0, opts.explore_sigma);
        const double n1 = noise.normal(0.0, opts.explore_sigma);
        actions[id] = ActionPair::clamped(a.a_long + n0, a.a_lat + n1);
      } else {
        actions[id] = a;
      }
    }

    std::map<int, DriverDecision> decisions;
    ControlMap controls;
    for (const auto& v : world.vehicles) {
      const Driver& d = drivers[static_cast<std::size_t>(v.id)];
      DriverDecision decision;
      switch (d.kind) {
        case ModelKind::Nilsson: decision = nilsson_decide(world, road, v.id, cfg.nilsson); break;
        case ModelKind::Stackelberg: decision = stackelberg_decide(world, road, v.id, cfg.stackelberg); break;
        case ModelKind::ConstantSpeed: decision = constant_speed_decide(world, v.id, cruise.at(v.id)); break;
        case ModelKind::DualDM: decision = to_decision(actions.at(v.id)); break;
      }
      VehicleController& ctl = controllers[v.id];
      if (const auto* s = std::get_if<StrategicDecision>(&decision)) {
        controls[v.id] = ctl.track_speed(s->v_target, s->lane_change, v, road, cfg.control, cfg.dynamics);
      } else {
        const auto& o = std::get<OperationalDecision>(decision);
        controls[v.id] = ctl.direct(o.a_long, o.lane_change, v, road, cfg.control, cfg.dynamics);
      }
      decisions.emplace(v.id, decision);
    }

    StepResult next = step(world, controls, road, cfg.dynamics);
    ++result.steps;
    const bool done = next.world.terminal();
    const bool truncated = !done && result.steps >= cfg.max_steps;
    std::map<int, ObservationGrid> next_grids = encode_all(next.world, drivers, cfg.observation);

    std::vector<int> in_area;
    double r_coop = 0.0;
    if (opts.cooperative) {
      const VehicleState& sv = world.sv();
      for (const auto& v : world.vehicles) {
        if (v.role == Role::BV && adversarial_area_contains(v, sv)) in_area.push_back(v.id);
      }
      r_coop = cooperative_reward(sv_neighbors(world, road, cfg.reward), sv_neighbors(next.world, road, cfg.reward),
                                  cfg.reward);
    }

    std::vector<RewardBreakdown> rewards;
    if (!learners.empty()) {
      std::vector<AgentReward> individual;
      std::vector<int> adversarial;
      for (int id : learners) {
        const auto ctx = step_context(world, next.world, next.events, road, id, lane_change_of(decisions.at(id)),
                                      cfg.reward);
        individual.push_back({id, individual_reward(ctx, cfg.reward)});
        if (std::find(in_area.begin(), in_area.end(), id) != in_area.end()) adversarial.push_back(id);
      }
      rewards = allocate(individual, adversarial.empty() ? 0.0 : r_coop, adversarial);
    }

    if (observer) {
      observer(StepInfo{world, next.world, next.events, controls, decisions, actions, raw, grids, next_grids, rewards,
                        in_area, r_coop, done, truncated});
    }
    world = std::move(next.world);
    grids = std::move(next_grids);
    if (done || truncated) {
      result.truncated = truncated;
      break;
    }
  }
  result.final_world = std::move(world);
  return result;
}

}  // namespace evoscen
