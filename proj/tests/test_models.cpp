#include <algorithm>
#include <set>

#include "doctest.h"

#include "evoscen/errors.hpp"
#include "evoscen/models.hpp"
#include "evoscen/rewards.hpp"

using namespace evoscen;

namespace {

const RoadGeometry kRoad(MapSpec::straight(1200.0));

VehicleState car(int id, int lane, double s, double v, Role role = Role::BV) {
  VehicleState c;
  c.id = id;
  c.role = role;
  c.lane = lane;
  c.s = s;
  c.v_s = v;
  return c;
}

WorldState world_of(std::vector<VehicleState> vs) {
  WorldState w;
  w.vehicles = std::move(vs);
  return w;
}

}  // namespace

TEST_CASE("nilsson on an empty road keeps lane at v_max") {
  const WorldState w = world_of({car(0, 2, 500.0, 25.0, Role::SV), car(1, 2, 100.0, 20.0)});
  const StrategicDecision d = nilsson_decide(w, kRoad, 1);
  CHECK(d.lane_change == LaneChange::Keep);
  CHECK(d.v_target == 33.3);
}

TEST_CASE("nilsson leaves a slow leader for an empty lane") {
  // lane 2: drivable 15.3 m, mean speed 15 -> 15.3 + 7.5 = 22.8
  // lanes 1 and 3: drivable 100 m, mean speed v_max -> 100 + 16.65 - 0.3
  const WorldState w = world_of({car(0, 4, 900.0, 25.0, Role::SV), car(1, 2, 500.0, 25.0), car(2, 2, 520.0, 15.0)});
  const StrategicDecision d = nilsson_decide(w, kRoad, 1);
  CHECK(d.lane_change == LaneChange::Left);
  CHECK(d.v_target == doctest::Approx((15.3 - 2.0) / 1.5).epsilon(1e-12));
}

TEST_CASE("nilsson gap acceptance blocks a better lane") {
  // lane 1: 22.8; lane 2: 8 + 16.5 - 0.3 = 24.2 > 22.8 + hysteresis, but the front gap is 8 m < 12 m
  WorldState w = world_of({car(0, 4, 900.0, 25.0, Role::SV), car(1, 1, 500.0, 25.0), car(2, 1, 520.0, 15.0),
                           car(3, 2, 500.0 + 4.7 + 8.0, 33.0)});
  CHECK(nilsson_decide(w, kRoad, 1).lane_change == LaneChange::Keep);
  CHECK_FALSE(nilsson_gap_accepted(w, w.vehicle(1), 2, NilssonParams{}));
  w.vehicles[3].s = 500.0 + 4.7 + 13.0;  // 13 + 16.5 - 0.3 = 29.2, gap accepted, ttc not binding at 33 m/s
  CHECK(nilsson_decide(w, kRoad, 1).lane_change == LaneChange::Right);
}

TEST_CASE("nilsson never breaks its own gap gate") {
  Rng rng(17);
  const NilssonParams p;
  int changes = 0;
  for (int k = 0; k < 3000; ++k) {
    std::vector<VehicleState> vs{car(0, 1 + static_cast<int>(rng.below(4)), rng.uniform(400, 600), rng.uniform(15, 33), Role::SV)};
    const int n = 1 + static_cast<int>(rng.below(10));
    for (int i = 1; i <= n; ++i) {
      vs.push_back(car(i, 1 + static_cast<int>(rng.below(4)), rng.uniform(400, 600), rng.uniform(10, 33)));
    }
    const WorldState w = world_of(vs);
    for (int i = 1; i <= n; ++i) {
      const StrategicDecision d = nilsson_decide(w, kRoad, i);
      CHECK(d.v_target >= 0.0);
      CHECK(d.v_target <= 33.3);
      if (d.lane_change == LaneChange::Keep) continue;
      ++changes;
      const VehicleState& ego = w.vehicle(i);
      const int target = ego.lane + (d.lane_change == LaneChange::Left ? -1 : 1);
      REQUIRE(target >= 1);
      REQUIRE(target <= 4);
      const VehicleState* lead = nullptr;
      const VehicleState* foll = nullptr;
      for (const auto& o : w.vehicles) {
        if (o.id == ego.id || o.lane != target) continue;
        CHECK(std::abs(o.s - ego.s) - 0.5 * (o.length + ego.length) >= p.g_min);
        if (o.s > ego.s && (!lead || o.s < lead->s)) lead = &o;
        if (o.s < ego.s && (!foll || o.s > foll->s)) foll = &o;
      }
      if (lead && ego.v_s > lead->v_s) CHECK((lead->s - ego.s - 4.7) / (ego.v_s - lead->v_s) >= p.ttc_min - 1e-12);
      if (foll && foll->v_s > ego.v_s) CHECK((ego.s - foll->s - 4.7) / (foll->v_s - ego.v_s) >= p.ttc_min - 1e-12);
    }
  }
  CHECK(changes > 50);
}

TEST_CASE("nilsson stays off the ramp") {
  const RoadGeometry road(MapSpec::default_highway());
  Rng rng(3);
  for (int k = 0; k < 500; ++k) {
    const double s = rng.uniform(0, 2000);
    const int lanes = road.lane_count_at(s);
    const int lane = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(lanes)));
    const WorldState w = world_of({car(0, 1, s + 300, 25.0, Role::SV), car(1, lane, s, 25.0), car(2, lane, s + 15.0, 5.0)});
    const StrategicDecision d = nilsson_decide(w, road, 1);
    if (d.lane_change == LaneChange::Right) CHECK_FALSE(road.is_ramp_lane(lane + 1));
  }
}

TEST_CASE("stackelberg on a free road") {
  const WorldState slow = world_of({car(0, 2, 500.0, 25.0, Role::SV)});
  const StrategicDecision a = stackelberg_decide(slow, kRoad, 0);
  CHECK(a.lane_change == LaneChange::Keep);
  CHECK(a.v_target == 33.3);
  const WorldState fast = world_of({car(0, 2, 500.0, 33.3, Role::SV)});
  const StrategicDecision b = stackelberg_decide(fast, kRoad, 0);
  CHECK(b.lane_change == LaneChange::Keep);
  CHECK(b.v_target == 33.3);
}

TEST_CASE("stackelberg passes a slow leader on the free side") {
  // keep/hold ends 20 m behind the leader against a 32 m headway; left/accel
  // only pays the 0.1 change cost and a small early shortfall
  const WorldState w = world_of({car(0, 2, 500.0, 25.0, Role::SV), car(1, 2, 544.7, 15.0), car(2, 3, 500.0, 25.0)});
  const auto options = stackelberg_options(w, kRoad, 0);
  for (const auto& o : options) CHECK(o.lane != LaneChange::Right);
  const auto best = std::max_element(options.begin(), options.end(),
                                     [](const auto& x, const auto& y) { return x.payoff < y.payoff; });
  REQUIRE(best != options.end());
  CHECK(best->lane == LaneChange::Left);
  const StrategicDecision d = stackelberg_decide(w, kRoad, 0);
  CHECK(d.lane_change == LaneChange::Left);
  CHECK(d.v_target == 33.3);
}

TEST_CASE("stackelberg boxed in decelerates") {
  // hold and accel reach the leader within 2 s; decel to 20 m/s keeps ~2 m
  const WorldState w = world_of({car(0, 2, 500.0, 25.0, Role::SV), car(1, 2, 520.0, 15.0), car(2, 1, 505.0, 25.0),
                                 car(3, 3, 495.0, 25.0)});
  const auto options = stackelberg_options(w, kRoad, 0);
  REQUIRE(options.size() == 1);
  CHECK(options[0].lane == LaneChange::Keep);
  CHECK(options[0].speed == SpeedAction::Decel);
  const StrategicDecision d = stackelberg_decide(w, kRoad, 0);
  CHECK(d.lane_change == LaneChange::Keep);
  CHECK(d.v_target == 20.0);
}

TEST_CASE("stackelberg tie-break prefers keep and hold") {
  StackelbergParams p;
  p.w_progress = 0.0;
  p.lane_change_cost = 0.0;
  const WorldState w = world_of({car(0, 2, 500.0, 25.0, Role::SV)});
  const auto options = stackelberg_options(w, kRoad, 0, p);
  REQUIRE(options.size() == 9);
  CHECK(options[0].lane == LaneChange::Keep);
  CHECK(options[0].speed == SpeedAction::Hold);
  const StrategicDecision d = stackelberg_decide(w, kRoad, 0, p);
  CHECK(d.lane_change == LaneChange::Keep);
  CHECK(d.v_target == 25.0);
}

TEST_CASE("constant speed keeps a time gap") {
  const WorldState w = world_of({car(0, 2, 500.0, 25.0, Role::SV), car(1, 2, 520.0, 15.0), car(2, 1, 300.0, 20.0)});
  CHECK(constant_speed_decide(w, 2, 22.0) == StrategicDecision{22.0, LaneChange::Keep});
  CHECK(constant_speed_decide(w, 0, 30.0).v_target == doctest::Approx((15.3 - 2.0) / 1.5).epsilon(1e-12));
}

TEST_CASE("dual-dm decisions") {
  Rng rng(4);
  Mlp zero({kObservationSize, 8, 8, 2}, Activation::Relu, Activation::Tanh);
  ObservationGrid g;
  g.at(Layer::Occupancy, 8, 2) = 1.0f;
  CHECK(dualdm_decide(g, zero) == OperationalDecision{0.0, LaneChange::Keep});

  const Mlp actor = make_actor(rng, 16);
  const OperationalDecision a = dualdm_decide(g, actor);
  for (int i = 0; i < 5; ++i) CHECK(dualdm_decide(g, actor) == a);
  CHECK(a.a_long >= -1.0);
  CHECK(a.a_long <= 1.0);

  const std::vector<ActionPair> batch = policy_actions(actor, {g, ObservationGrid{}, g});
  REQUIRE(batch.size() == 3);
  CHECK(batch[0].a_long == batch[2].a_long);
  CHECK(to_decision(batch[0]) == a);
}

TEST_CASE("policy files must be policy-shaped") {
  Rng rng(2);
  const auto dir = std::filesystem::temp_directory_path() / "evoscen_policy_test";
  std::filesystem::create_directories(dir);
  save_mlp(dir / "critic.txt", Mlp::random({kObservationSize + 2, 4, 1}, Activation::Relu, Activation::Identity, rng));
  CHECK_THROWS_AS(load_policy(dir / "critic.txt"), ConfigError);
  CHECK_THROWS_AS(load_policy(dir / "missing.txt"), ConfigError);
  const Mlp actor = make_actor(rng, 4);
  save_mlp(dir / "actor.txt", actor);
  CHECK(load_policy(dir) == actor);
  std::filesystem::remove_all(dir);
}

TEST_CASE("population schedule") {
  PopulationConfig all;
  all.proportions = {{ModelKind::DualDM, 1.0}};
  const auto b = population_schedule(all, 15, 1);
  REQUIRE(b.size() == 16);
  CHECK(b[0] == ModelBinding{0, ModelKind::Stackelberg});
  for (int i = 1; i <= 15; ++i) CHECK(b[static_cast<std::size_t>(i)] == ModelBinding{i, ModelKind::DualDM});

  const auto n = population_schedule(PopulationConfig{}, 15, 1);
  for (int i = 1; i <= 15; ++i) CHECK(n[static_cast<std::size_t>(i)].kind == ModelKind::Nilsson);

  PopulationConfig mix;
  mix.proportions = {{ModelKind::Nilsson, 0.4}, {ModelKind::DualDM, 0.3}, {ModelKind::ConstantSpeed, 0.3}};
  const auto m1 = population_schedule(mix, 15, 9);
  CHECK(m1 == population_schedule(mix, 15, 9));
  std::map<ModelKind, int> counts;
  for (std::size_t i = 1; i < m1.size(); ++i) ++counts[m1[i].kind];
  CHECK(counts[ModelKind::Nilsson] == 6);
  CHECK(counts[ModelKind::DualDM] + counts[ModelKind::ConstantSpeed] == 9);
  CHECK(std::abs(counts[ModelKind::DualDM] - counts[ModelKind::ConstantSpeed]) == 1);

  PopulationConfig bad;
  bad.proportions = {{ModelKind::Nilsson, 0.5}, {ModelKind::DualDM, 0.4}};
  CHECK_THROWS_AS(population_schedule(bad, 15, 1), ConfigError);
  bad.proportions = {{ModelKind::Stackelberg, 1.0}};
  CHECK_THROWS_AS(population_schedule(bad, 15, 1), ConfigError);
  bad.proportions = {{ModelKind::Nilsson, 1.5}, {ModelKind::DualDM, -0.5}};
  CHECK_THROWS_AS(population_schedule(bad, 15, 1), ConfigError);
}

TEST_CASE("model kind names") {
  for (ModelKind k : {ModelKind::Nilsson, ModelKind::Stackelberg, ModelKind::DualDM, ModelKind::ConstantSpeed}) {
    CHECK(model_kind_from_string(to_string(k)) == k);
  }
  CHECK(model_kind_from_string("NILSSON") == ModelKind::Nilsson);
  CHECK_THROWS_AS(model_kind_from_string("idm"), ConfigError);
  CHECK(lane_change_of(DriverDecision{OperationalDecision{0.3, LaneChange::Left}}) == LaneChange::Left);
  CHECK(lane_change_of(DriverDecision{StrategicDecision{10.0, LaneChange::Right}}) == LaneChange::Right);
}
