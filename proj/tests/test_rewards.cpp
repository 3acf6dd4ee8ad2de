#include <numeric>

#include "doctest.h"

#include "evoscen/errors.hpp"
#include "evoscen/rewards.hpp"
#include "evoscen/rng.hpp"

using namespace evoscen;

namespace {

const RewardConfig kCfg;

VehicleState car(int id, int lane, double s, Role role = Role::BV) {
  VehicleState c;
  c.id = id;
  c.role = role;
  c.lane = lane;
  c.s = s;
  c.v_s = 20.0;
  return c;
}

}  // namespace

TEST_CASE("following reward by hand") {
  CHECK(following_reward(15.0, kCfg) == 0.0);
  CHECK(following_reward(35.0, kCfg) == -0.05);
  CHECK(following_reward(100.0, kCfg) == -0.903125);
  for (double d = 0.0; d <= 100.0; d += 0.5) {
    if (d != 15.0) CHECK(following_reward(d, kCfg) < 0.0);
    if (d > 15.0) CHECK(following_reward(d, kCfg) < following_reward(d - 0.5, kCfg));
  }
}

TEST_CASE("car-following reward by hand") {
  CHECK(car_following_reward(-0.05, 0.0, kCfg) == 0.5);
  CHECK(car_following_reward(0.0, -0.05, kCfg) == -0.55);
  for (double x : {-0.9, -0.3, 0.0}) CHECK(car_following_reward(x, x, kCfg) == x);
}

TEST_CASE("lane-change reward by hand") {
  CHECK(lane_change_reward(40.0, 40.0, true, kCfg) == -0.1);
  CHECK(lane_change_reward(100.0, 40.0, true, kCfg) == doctest::Approx(-0.0996).epsilon(1e-15));
  CHECK(lane_change_reward(40.0, 100.0, true, kCfg) == doctest::Approx(-0.1004).epsilon(1e-15));
  CHECK(lane_change_reward(100.0, 40.0, false, kCfg) == 0.0);
}

TEST_CASE("behavioral constraints") {
  const RoadGeometry road(MapSpec::default_highway());
  WorldState w;
  w.vehicles = {car(0, 3, 1500.0, Role::SV), car(1, 1, 1000.0), car(2, 2, 1000.0), car(3, 1, 1000.0 + 4.7 + 8.0)};
  CHECK(violations(w, road, 1, LaneChange::Left, kCfg) == ViolationSet{Violation::LeftAtLeftmost});
  CHECK(violations(w, road, 2, LaneChange::Left, kCfg) == ViolationSet{Violation::LeftGapOccupied});
  CHECK(violations(w, road, 2, LaneChange::Keep, kCfg).empty());
  CHECK(violations(w, road, 2, LaneChange::Right, kCfg).empty());
  w.vehicles[2].lane = 4;
  CHECK(violations(w, road, 2, LaneChange::Right, kCfg) == ViolationSet{Violation::RightAtRightmost});
  w.vehicles[2].s = 150.0;
  CHECK(violations(w, road, 2, LaneChange::Right, kCfg) == ViolationSet{Violation::EnterRamp});
}

TEST_CASE("individual reward") {
  StepContext ctx;
  ctx.collided = true;
  ctx.d_front_before = 15.0;
  ctx.d_front_after = 40.0;
  ctx.decision = LaneChange::Left;
  ctx.violations = {Violation::LeftAtLeftmost};
  CHECK(individual_reward(ctx, kCfg).total == -3.0);

  StepContext cruise;
  cruise.d_front_before = cruise.d_front_after = 15.0;
  CHECK(individual_reward(cruise, kCfg).total == 0.0);

  StepContext illegal;
  illegal.d_front_before = illegal.d_front_after = 35.0;
  illegal.decision = LaneChange::Left;
  illegal.d_target = illegal.d_current = 35.0;
  illegal.violations = {Violation::LeftAtLeftmost, Violation::LeftGapOccupied};
  const IndividualReward r = individual_reward(illegal, kCfg);
  CHECK(r.r_cf == -0.05);
  CHECK(r.r_lc == -0.1);
  CHECK(r.r_rv == -0.3);
  CHECK(r.total == -0.05 + -0.1 + -0.3);
}

TEST_CASE("step context reads gaps around the joint step") {
  const RoadGeometry road(MapSpec::straight(2000.0));
  WorldState before, after;
  before.vehicles = {car(0, 3, 500.0, Role::SV), car(1, 2, 100.0), car(2, 2, 100.0 + 4.7 + 20.0)};
  after = before;
  after.vehicles[1].s += 5.0;
  const StepContext ctx = step_context(before, after, {}, road, 1, LaneChange::Keep, kCfg);
  CHECK(ctx.d_front_before == doctest::Approx(20.0));
  CHECK(ctx.d_front_after == doctest::Approx(15.0));
  CHECK_FALSE(ctx.collided);
  const StepContext hit = step_context(before, after, {{EventKind::CollisionBvBv, 1, 1, 2}}, road, 1,
                                       LaneChange::Keep, kCfg);
  CHECK(hit.collided);
}

TEST_CASE("cooperative reward by hand") {
  NeighborDistances b, a;
  b.left = NeighborDistances::Side{20.0, 30.0};
  a.left = NeighborDistances::Side{10.0, 30.0};
  b.front = a.front = 50.0;
  CHECK(cooperative_reward(b, a, kCfg) == 0.75);
  NeighborDistances f0, f1;
  f0.front = 40.0;
  f1.front = 20.0;
  CHECK(cooperative_reward(f0, f1, kCfg) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(cooperative_reward(b, b, kCfg) == 0.0);
  Rng rng(8);
  for (int k = 0; k < 1000; ++k) {
    NeighborDistances x, y;
    x.front = rng.uniform(0, 100);
    y.front = rng.uniform(0, 100);
    x.left = NeighborDistances::Side{rng.uniform(0, 100), rng.uniform(0, 100)};
    y.left = NeighborDistances::Side{rng.uniform(0, 100), rng.uniform(0, 100)};
    CHECK(cooperative_reward(x, y, kCfg) == -cooperative_reward(y, x, kCfg));
  }
}

TEST_CASE("allocation") {
  const std::vector<AgentReward> agents{{1, {0, 0, 0, 0.2}}, {2, {0, 0, 0, 0.2}}, {3, {0, 0, 0, 0.2}}, {4, {0, 0, 0, 0.2}}};
  const auto out = allocate(agents, 0.6, {1, 2, 3});
  for (int i = 0; i < 3; ++i) {
    CHECK(out[static_cast<std::size_t>(i)].total == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(out[static_cast<std::size_t>(i)].modality == Modality::Adversarial);
  }
  CHECK(out[3].total == 0.2);
  CHECK(out[3].modality == Modality::NonAdversarial);
  CHECK(allocate(agents, 0.6, {2})[1].r_coop_share == 0.6);
  CHECK_THROWS_AS(allocate(agents, 0.6, {}), ContractError);
  CHECK(allocate(agents, 0.0, {})[0].total == 0.2);
}

TEST_CASE("allocation conserves the cooperative reward") {
  Rng rng(77);
  for (int k = 0; k < 10000; ++k) {
    const int n = 1 + static_cast<int>(rng.below(12));
    std::vector<AgentReward> agents;
    std::vector<int> adv;
    for (int i = 0; i < n; ++i) {
      agents.push_back({i, {0, 0, 0, rng.uniform(-3, 1)}});
      if (rng.below(2)) adv.push_back(i);
    }
    if (adv.empty()) adv.push_back(0);
    const double coop = rng.uniform(-5, 5);
    const auto out = allocate(agents, coop, adv);
    double sum = 0.0;
    for (const auto& b : out) sum += b.r_coop_share;
    CHECK(std::abs(sum - coop) < 1e-12);
  }
}

TEST_CASE("reward config validation") {
  RewardConfig bad;
  bad.delta1 = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = RewardConfig{};
  bad.r_c = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_NOTHROW(kCfg.validate());
}
