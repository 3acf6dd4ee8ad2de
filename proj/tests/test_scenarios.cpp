#include <fstream>

#include "doctest.h"

#include "evoscen/errors.hpp"
#include "evoscen/scenarios.hpp"

using namespace evoscen;

namespace {

// Log with `n` steps, no vehicles, infinite TTC.
TrajectoryLog blank_log(int n) {
  TrajectoryLog log;
  log.seed = 42;
  log.round = 3;
  for (int k = 0; k < n; ++k) {
    LogStep s;
    s.step = k;
    s.t = 0.1 * k;
    log.steps.push_back(s);
  }
  return log;
}

void collide(TrajectoryLog& log, int k, EventKind kind = EventKind::CollisionSvBv) {
  log.steps[static_cast<std::size_t>(k)].events.push_back(Event{kind, k, 0, 1});
}

VehicleState car(int id, int lane, double s, double v, Role role = Role::BV) {
  VehicleState c;
  c.id = id;
  c.role = role;
  c.lane = lane;
  c.s = s;
  c.v_s = v;
  return c;
}

// A BV under full throttle closing on a coasting SV, logged step by step.
TrajectoryLog rear_end_log(const RoadGeometry& road, const DynamicsConfig& dyn) {
  WorldState w;
  w.vehicles = {car(0, 2, 300.0, 20.0, Role::SV), car(1, 2, 240.0, 30.0), car(2, 1, 250.0, 25.0)};
  TrajectoryLog log;
  log.lane_width = w.lane_width;
  std::vector<Event> arrived;
  const ControlMap controls{{0, ControlSignal{0.2, 0.0, 0.0}}, {1, ControlSignal{1.0, 0.0, 0.0}},
                            {2, ControlSignal{0.0, 0.1, 0.0}}};
  while (true) {
    LogStep s;
    s.step = w.step_index;
    s.t = w.t;
    s.vehicles = w.vehicles;
    s.events = arrived;
    s.ttc_sv = ttc_sv(w);
    if (w.terminal()) {
      log.steps.push_back(s);
      break;
    }
    s.controls = controls;
    s.in_area = {1};
    s.r_coop = s.step % 5 == 0 ? 0.25 : -0.1;
    log.steps.push_back(s);
    StepResult r = step(w, controls, road, dyn);
    arrived = r.events;
    w = std::move(r.world);
  }
  return log;
}

}  // namespace

TEST_CASE("crash window arithmetic") {
  TrajectoryLog log = blank_log(201);
  collide(log, 200);
  const auto records = detect_and_extract(log, "dualdm");
  REQUIRE(records.size() == 1);
  const ScenarioRecord& r = records[0];
  CHECK(r.label == ScenarioLabel::Crash);
  CHECK(r.trigger_step == 200);
  REQUIRE(r.window.size() == 35);
  CHECK(r.window.front().step == 166);
  CHECK(r.window.back().step == 200);
  CHECK_FALSE(r.padded());
  CHECK(r.arm == "dualdm");
  CHECK(r.seed == 42);
  CHECK(r.round == 3);
}

TEST_CASE("near-crash excursions") {
  TrajectoryLog log = blank_log(300);
  for (int k = 120; k < 126; ++k) log.steps[static_cast<std::size_t>(k)].ttc_sv = 0.4;
  auto records = detect_and_extract(log);
  REQUIRE(records.size() == 1);
  CHECK(records[0].label == ScenarioLabel::NearCrash);
  CHECK(records[0].trigger_step == 120);

  // a second excursion after recovery is a second record
  log.steps[130].ttc_sv = 0.3;
  log.steps[131].ttc_sv = 0.5;  // 0.5 is not below the threshold
  records = detect_and_extract(log);
  REQUIRE(records.size() == 2);
  CHECK(records[1].trigger_step == 130);
  CHECK(records[0].trigger_step != records[1].trigger_step);
}

TEST_CASE("crash suppresses a near-crash within the window") {
  TrajectoryLog log = blank_log(260);
  for (int k = 180; k < 200; ++k) log.steps[static_cast<std::size_t>(k)].ttc_sv = 0.2;
  collide(log, 214);  // 34 steps after the near-crash onset
  auto records = detect_and_extract(log);
  REQUIRE(records.size() == 1);
  CHECK(records[0].label == ScenarioLabel::Crash);

  TrajectoryLog later = blank_log(260);
  for (int k = 180; k < 200; ++k) later.steps[static_cast<std::size_t>(k)].ttc_sv = 0.2;
  collide(later, 215);  // 35 steps later: both survive
  records = detect_and_extract(later);
  REQUIRE(records.size() == 2);
  CHECK(records[0].label == ScenarioLabel::NearCrash);
  CHECK(records[1].label == ScenarioLabel::Crash);
}

TEST_CASE("collisions between BVs produce no record") {
  TrajectoryLog log = blank_log(100);
  collide(log, 80, EventKind::CollisionBvBv);
  log.steps[80].ttc_sv = 0.1;
  CHECK(detect_and_extract(log).empty());
  CHECK(detect_and_extract(blank_log(50)).empty());
}

TEST_CASE("early triggers are padded at the front") {
  TrajectoryLog log = blank_log(40);
  log.steps[0].vehicles = {car(0, 2, 10.0, 20.0, Role::SV)};
  log.steps[10].ttc_sv = 0.1;
  const auto records = detect_and_extract(log);
  REQUIRE(records.size() == 1);
  const ScenarioRecord& r = records[0];
  CHECK(r.padding == 24);
  REQUIRE(r.window.size() == 35);
  CHECK(r.window[0].step == -24);
  CHECK(r.window[23].vehicles.empty());
  CHECK(r.window[24].step == 0);
  CHECK(r.window[24].vehicles.size() == 1);
  CHECK(r.window.back().step == 10);
}

TEST_CASE("adversarial participants come from coop-positive steps") {
  TrajectoryLog log = blank_log(100);
  log.steps[90].in_area = {3, 5};
  log.steps[90].r_coop = 0.2;
  log.steps[91].in_area = {7};
  log.steps[91].r_coop = -0.2;
  log.steps[40].in_area = {9};  // outside the window
  log.steps[40].r_coop = 1.0;
  log.steps[99].vehicles = {car(0, 2, 0, 0, Role::SV), car(3, 1, 0, 0), car(5, 1, 0, 0), car(7, 1, 0, 0)};
  collide(log, 99);
  const auto records = detect_and_extract(log);
  REQUIRE(records.size() == 1);
  CHECK(records[0].adversarial_participants == std::vector<int>{3, 5});
  CHECK(records[0].participants == std::vector<int>{0, 3, 5, 7});
}

TEST_CASE("summary counts") {
  std::vector<ScenarioRecord> records(429);
  for (int i = 0; i < 206; ++i) records[static_cast<std::size_t>(i)].label = ScenarioLabel::Crash;
  for (int i = 206; i < 429; ++i) records[static_cast<std::size_t>(i)].label = ScenarioLabel::NearCrash;
  const RunSummary s = summarize(records, 500, "dualdm.jsonl", "dualdm", 1);
  CHECK(s.crash == 206);
  CHECK(s.near_crash == 223);
  CHECK(s.total == 429);
  CHECK(s.records.front() == "dualdm.jsonl#1");
  CHECK(s.records.back() == "dualdm.jsonl#429");

  std::vector<ScenarioRecord> nilsson(129);
  for (int i = 0; i < 62; ++i) nilsson[static_cast<std::size_t>(i)].label = ScenarioLabel::Crash;
  for (int i = 62; i < 129; ++i) nilsson[static_cast<std::size_t>(i)].label = ScenarioLabel::NearCrash;
  const RunSummary n = summarize(nilsson, 500, "nilsson.jsonl");
  CHECK(n.crash == 62);
  CHECK(n.near_crash == 67);
  CHECK(n.total == 129);

  const RunSummary e = summarize({}, 0, "x");
  CHECK(e.crash == 0);
  CHECK(e.near_crash == 0);
  CHECK(e.total == 0);
  CHECK(e.records.empty());

  CHECK(summary_from_json(summary_to_json(s)) == s);
}

TEST_CASE("records round-trip through the archive") {
  const RoadGeometry road(MapSpec::straight(1200.0));
  TrajectoryLog log = rear_end_log(road, DynamicsConfig{});
  log.steps[3].vehicles[1].s = 0.1 + 0.2;
  log.steps[3].vehicles[1].d = 1.0 / 3.0;
  log.steps[3].decisions = {{1, LaneChange::Left}, {2, LaneChange::Right}};
  const auto records = detect_and_extract(log, "fixture");
  REQUIRE_FALSE(records.empty());
  for (const auto& r : records) CHECK(record_from_json(record_to_json(r)) == r);
  CHECK(log_from_json(log_to_json(log)) == log);

  const auto dir = std::filesystem::temp_directory_path() / "evoscen_archive_test";
  std::filesystem::create_directories(dir);
  std::vector<ScenarioRecord> many;
  for (int i = 0; i < 429; ++i) {
    ScenarioRecord r = records[static_cast<std::size_t>(i) % records.size()];
    r.round = i;
    many.push_back(r);
  }
  write_archive(dir / "a.jsonl", many);
  const auto back = load_archive(dir / "a.jsonl");
  REQUIRE(back.size() == 429);
  CHECK(back == many);

  write_logs(dir / "l.jsonl", {log, log});
  CHECK(load_logs(dir / "l.jsonl") == std::vector<TrajectoryLog>{log, log});

  {
    std::ofstream out(dir / "bad.jsonl");
    out << record_to_json(records[0]) << '\n' << record_to_json(records[0]) << '\n' << "{\"schema\": 1, \"label\":\n";
  }
  try {
    load_archive(dir / "bad.jsonl");
    FAIL("malformed archive accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("replaying a window reproduces the log") {
  const RoadGeometry road(MapSpec::straight(1200.0));
  const DynamicsConfig dyn;
  const TrajectoryLog log = rear_end_log(road, dyn);
  const auto records = detect_and_extract(log);
  REQUIRE_FALSE(records.empty());
  CHECK(records.back().label == ScenarioLabel::Crash);
  for (const auto& r : records) {
    CHECK(r.window.size() == 35);
    const ScenarioRecord back = record_from_json(record_to_json(r));
    CHECK(replay_deviation(back, road, dyn) <= 1e-9);
  }
  ScenarioRecord tampered = records.back();
  tampered.window[20].controls.at(1).throttle = 0.0;
  CHECK(replay_deviation(tampered, road, dyn) > 1e-3);
}
