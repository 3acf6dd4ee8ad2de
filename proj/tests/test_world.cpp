#include <cmath>

#include "doctest.h"

#include "evoscen/errors.hpp"
#include "evoscen/rng.hpp"
#include "evoscen/world.hpp"

using namespace evoscen;

namespace {

VehicleState car(int id, int lane, double s, double v, Role role = Role::BV) {
  VehicleState c;
  c.id = id;
  c.role = role;
  c.lane = lane;
  c.s = s;
  c.v_s = v;
  return c;
}

WorldState two_cars(VehicleState a, VehicleState b) {
  WorldState w;
  w.vehicles = {a, b};
  return w;
}

}  // namespace

TEST_CASE("default map: ramp lane only inside the merge window") {
  const RoadGeometry road(MapSpec::default_highway());
  CHECK(road.total_length() == doctest::Approx(2400.0).epsilon(1e-12));
  CHECK(road.lane_count_at(50.0) == 4);
  CHECK(road.lane_count_at(150.0) == 5);
  CHECK(road.lane_count_at(299.0) == 5);
  CHECK(road.lane_count_at(300.0) == 4);
  CHECK(road.is_ramp_lane(5));
  CHECK_FALSE(road.lane_exists(5, 1000.0));
}

TEST_CASE("straight map keeps a constant heading") {
  const RoadGeometry road(MapSpec::straight(2400.0));
  for (double s : {0.0, 10.0, 1234.5, 2399.0}) CHECK(road.heading_at(s) == 0.0);
  CHECK(road.centerline_pose(1, 500.0).x == doctest::Approx(500.0));
}

TEST_CASE("curve heading is the integral of curvature") {
  MapSpec spec = MapSpec::straight(100.0);
  spec.segments.push_back({SegmentKind::Curve, 300.0, 1.0 / 500.0});
  const RoadGeometry road(spec);
  CHECK(road.heading_at(400.0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(road.heading_at(250.0) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("map validation") {
  MapSpec spec = MapSpec::default_highway();
  spec.init_area = {50.0, 150.0};
  CHECK_THROWS_AS(RoadGeometry{spec}, ConfigError);
  spec = MapSpec::default_highway();
  spec.main_lane_count = 1;
  CHECK_THROWS_AS(RoadGeometry{spec}, ConfigError);
  spec = MapSpec::default_highway();
  spec.lane_width = 0.0;
  CHECK_THROWS_AS(RoadGeometry{spec}, ConfigError);
}

TEST_CASE("spawn is deterministic and respects gaps and speeds") {
  MapSpec spec = MapSpec::straight(2400.0, 4, {0.0, 200.0});
  const RoadGeometry road(spec);
  SpawnConfig cfg;
  cfg.v_max_choices_kmh = {120.0};
  const WorldState a = spawn(road, cfg, 42);
  CHECK(a == spawn(road, cfg, 42));
  REQUIRE(a.vehicles.size() == 16);
  int svs = 0;
  for (const auto& v : a.vehicles) {
    svs += v.role == Role::SV;
    CHECK(v.v_s >= 120.0 / 3.6 * 0.5);
    CHECK(v.v_s <= 120.0 / 3.6 * 0.8);
    CHECK(v.v_s >= 16.66);
    CHECK(v.v_s <= 26.67);
    for (const auto& o : a.vehicles) {
      if (o.id <= v.id) continue;
      CHECK_FALSE(rectangles_overlap(v, lateral_position(v, 3.5), o, lateral_position(o, 3.5)));
      if (o.lane == v.lane) CHECK(std::abs(o.s - v.s) - v.length >= 10.0 - 1e-9);
    }
  }
  CHECK(svs == 1);
  CHECK(a.sv().id == 0);
}

TEST_CASE("spawn reports an init area that is too small") {
  const RoadGeometry road(MapSpec::straight(2400.0, 4, {0.0, 30.0}));
  SpawnConfig cfg;
  CHECK_THROWS_AS(spawn(road, cfg, 1), SpawnError);
}

TEST_CASE("Euler step by hand") {
  const RoadGeometry road(MapSpec::straight(2400.0));
  DynamicsConfig dyn;
  dyn.drag = 0.0;
  WorldState w = two_cars(car(0, 1, 100.0, 20.0, Role::SV), car(1, 3, 100.0, 20.0));
  const StepResult r = step(w, {{0, {1.0, 0.0, 0.0}}, {1, {0.0, 0.0, 0.0}}}, road, dyn);
  CHECK(r.world.vehicles[0].v_s == doctest::Approx(20.3).epsilon(1e-14));
  CHECK(r.world.vehicles[0].s - 100.0 == doctest::Approx(2.03).epsilon(1e-12));
  CHECK(r.world.vehicles[1].v_s == 20.0);
  CHECK(r.world.t == doctest::Approx(0.1));
  CHECK(r.events.empty());
}

TEST_CASE("time stays an exact multiple of dt") {
  const RoadGeometry road(MapSpec::straight(5000.0));
  WorldState w = two_cars(car(0, 1, 100.0, 20.0, Role::SV), car(1, 3, 100.0, 20.0));
  const ControlMap u{{0, {}}, {1, {}}};
  for (int k = 1; k <= 500; ++k) {
    w = step(w, u, road, DynamicsConfig{}).world;
    CHECK(w.t == static_cast<double>(k) * 0.1);
  }
}

TEST_CASE("step contract: missing control and terminal world") {
  const RoadGeometry road(MapSpec::straight(2400.0));
  const WorldState w = two_cars(car(0, 1, 100.0, 20.0, Role::SV), car(1, 3, 100.0, 20.0));
  CHECK_THROWS_AS(step(w, {{0, {}}}, road, DynamicsConfig{}), ContractError);
  WorldState done = w;
  done.events.push_back({EventKind::SvReachedEnd, 0, 0, -1});
  CHECK_THROWS_AS(step(done, {{0, {}}, {1, {}}}, road, DynamicsConfig{}), ContractError);
}

TEST_CASE("closing vehicles 0.3 m apart collide within one step") {
  const RoadGeometry road(MapSpec::straight(2400.0));
  for (Role lead_role : {Role::BV, Role::SV}) {
    VehicleState back = car(1, 2, 100.0, 25.0);
    VehicleState front = car(lead_role == Role::SV ? 0 : 2, 2, 100.0 + 4.7 + 0.3, 20.0, lead_role);
    VehicleState sv = car(0, 4, 300.0, 20.0, Role::SV);
    WorldState w;
    w.vehicles = {back, front};
    if (lead_role == Role::BV) w.vehicles.push_back(sv);
    ControlMap u;
    for (const auto& v : w.vehicles) u[v.id] = {};
    const StepResult r = step(w, u, road, DynamicsConfig{});
    REQUIRE(r.events.size() == 1);
    CHECK(r.events[0].kind == (lead_role == Role::SV ? EventKind::CollisionSvBv : EventKind::CollisionBvBv));
    CHECK(r.events[0].step == 1);
  }
}

TEST_CASE("collision sweep catches every overlap seen by a 10x substep oracle") {
  const RoadGeometry road(MapSpec::straight(5000.0));
  SpawnConfig cfg;
  cfg.bv_count = 12;
  cfg.min_gap = 2.0;
  Rng rng(99);
  int oracle_hits = 0;
  for (int episode = 0; episode < 60; ++episode) {
    WorldState w = spawn(road, cfg, derive_seed(7, static_cast<std::uint64_t>(episode)));
    for (int k = 0; k < 300 && !w.terminal(); ++k) {
      ControlMap u;
      for (const auto& v : w.vehicles) {
        const double a = rng.uniform(-1.0, 1.0);
        u[v.id] = {std::max(a, 0.0), std::max(-a, 0.0), rng.uniform(-0.02, 0.02)};
      }
      const StepResult r = step(w, u, road, DynamicsConfig{});
      for (std::size_t i = 0; i < w.vehicles.size(); ++i) {
        for (std::size_t j = i + 1; j < w.vehicles.size(); ++j) {
          bool hit = false;
          for (int sub = 0; sub <= 10 && !hit; ++sub) {
            const double f = sub / 10.0;
            auto mix = [f](const VehicleState& p, const VehicleState& q) {
              VehicleState m = p;
              m.s = p.s + f * (q.s - p.s);
              m.heading_err = p.heading_err + f * (q.heading_err - p.heading_err);
              return m;
            };
            const double yi = lateral_position(w.vehicles[i], 3.5) +
                              f * (lateral_position(r.world.vehicles[i], 3.5) - lateral_position(w.vehicles[i], 3.5));
            const double yj = lateral_position(w.vehicles[j], 3.5) +
                              f * (lateral_position(r.world.vehicles[j], 3.5) - lateral_position(w.vehicles[j], 3.5));
            hit = rectangles_overlap(mix(w.vehicles[i], r.world.vehicles[i]), yi,
                                     mix(w.vehicles[j], r.world.vehicles[j]), yj);
          }
          if (!hit) continue;
          ++oracle_hits;
          const int a = w.vehicles[i].id, b = w.vehicles[j].id;
          const bool flagged = std::any_of(r.events.begin(), r.events.end(), [&](const Event& e) {
            return (e.kind == EventKind::CollisionSvBv || e.kind == EventKind::CollisionBvBv) && e.involves(a) &&
                   e.involves(b);
          });
          CHECK(flagged);
        }
      }
      w = r.world;
    }
  }
  CHECK(oracle_hits > 0);
}

TEST_CASE("replaying identical controls is bit-identical") {
  const RoadGeometry road(MapSpec::default_highway());
  const WorldState start = spawn(road, SpawnConfig{}, 5);
  auto run = [&] {
    WorldState w = start;
    Rng rng(3);
    std::vector<WorldState> trace;
    for (int k = 0; k < 100 && !w.terminal(); ++k) {
      ControlMap u;
      for (const auto& v : w.vehicles) u[v.id] = {rng.uniform(0.0, 0.5), 0.0, rng.uniform(-0.001, 0.001)};
      w = step(w, u, road, DynamicsConfig{}).world;
      trace.push_back(w);
    }
    return trace;
  };
  CHECK(run() == run());
}

TEST_CASE("TTC by hand") {
  WorldState w = two_cars(car(0, 2, 100.0, 30.0, Role::SV), car(1, 2, 100.0 + 4.7 + 10.0, 10.0));
  CHECK(ttc_sv(w) == doctest::Approx(0.5).epsilon(1e-12));
  w = two_cars(car(0, 2, 100.0, 30.0, Role::SV), car(1, 3, 400.0, 10.0));
  CHECK(ttc_sv(w) == kInfinity);
  w = two_cars(car(0, 2, 100.0, 20.0, Role::SV), car(1, 2, 80.0, 20.0));
  CHECK(ttc_sv(w) == kInfinity);
}

TEST_CASE("adversarial area bounds and symmetry") {
  const VehicleState sv = car(0, 3, 500.0, 20.0, Role::SV);
  CHECK(adversarial_area_contains(car(1, 1, 522.5, 20.0), sv));
  CHECK(adversarial_area_contains(car(1, 5, 477.5, 20.0), sv));
  CHECK_FALSE(adversarial_area_contains(car(1, 3, 522.6, 20.0), sv));
  CHECK_FALSE(adversarial_area_contains(car(1, 6, 500.0, 20.0), sv));
  Rng rng(4);
  for (int k = 0; k < 1000; ++k) {
    const double ds = rng.uniform(-30.0, 30.0);
    const int dl = static_cast<int>(rng.below(7)) - 3;
    const bool a = adversarial_area_contains(car(1, 3 + dl, 500.0 + ds, 20.0), sv);
    CHECK(a == adversarial_area_contains(car(1, 3 - dl, 500.0 - ds, 20.0), sv));
  }
}
