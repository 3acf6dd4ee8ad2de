#include "evoscen/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"

#include "evoscen/errors.hpp"

namespace evoscen {

using Json = nlohmann::ordered_json;

LogRecorder::LogRecorder(std::uint64_t seed, int round) {
  log_.seed = seed;
  log_.round = round;
}

namespace {

LogStep snapshot(const WorldState& world, const std::vector<Event>& arrived) {
  LogStep s;
  s.step = world.step_index;
  s.t = world.t;
  s.vehicles = world.vehicles;
  s.events = arrived;
  s.ttc_sv = ttc_sv(world);
  return s;
}

}  // namespace

void LogRecorder::operator()(const StepInfo& info) {
  if (log_.steps.empty()) {
    log_.lane_width = info.before.lane_width;
    log_.steps.push_back(snapshot(info.before, {}));
  }
  LogStep& cur = log_.steps.back();
  cur.controls = info.controls;
  for (const auto& [id, d] : info.decisions) cur.decisions[id] = lane_change_of(d);
  cur.in_area = info.in_area;
  cur.r_coop = info.r_coop;
  log_.steps.push_back(snapshot(info.after, info.events));
}

std::string to_string(ScenarioLabel label) { return label == ScenarioLabel::Crash ? "crash" : "near_crash"; }

namespace {

ScenarioLabel label_from_string(const std::string& s) {
  if (s == "crash") return ScenarioLabel::Crash;
  if (s == "near_crash") return ScenarioLabel::NearCrash;
  throw ConfigError("unknown scenario label '" + s + "'");
}

bool has_sv_collision(const LogStep& s) {
  return std::any_of(s.events.begin(), s.events.end(),
                     [](const Event& e) { return e.kind == EventKind::CollisionSvBv; });
}

bool has_collision(const LogStep& s) {
  return std::any_of(s.events.begin(), s.events.end(), [](const Event& e) {
    return e.kind == EventKind::CollisionSvBv || e.kind == EventKind::CollisionBvBv;
  });
}

ScenarioRecord make_record(const TrajectoryLog& log, std::size_t trigger, ScenarioLabel label, const std::string& arm) {
  ScenarioRecord r;
  r.label = label;
  r.trigger_step = log.steps[trigger].step;
  r.arm = arm;
  r.seed = log.seed;
  r.round = log.round;
  r.lane_width = log.lane_width;
  const long first = static_cast<long>(trigger) - (kWindowSteps - 1);
  r.padding = first < 0 ? static_cast<int>(-first) : 0;
  std::set<int> adversarial;
  for (long i = first; i <= static_cast<long>(trigger); ++i) {
    if (i < 0) {
      LogStep pad;
      pad.step = r.trigger_step - static_cast<long>(trigger) + i;
      pad.t = static_cast<double>(pad.step) * kTimeStep;
      r.window.push_back(pad);
      continue;
    }
    const LogStep& s = log.steps[static_cast<std::size_t>(i)];
    r.window.push_back(s);
    if (s.r_coop > 0.0) adversarial.insert(s.in_area.begin(), s.in_area.end());
  }
  for (const auto& v : log.steps[trigger].vehicles) r.participants.push_back(v.id);
  r.adversarial_participants.assign(adversarial.begin(), adversarial.end());
  return r;
}

}  // namespace

std::vector<ScenarioRecord> detect_and_extract(const TrajectoryLog& log, const std::string& arm) {
  std::vector<std::size_t> crashes;
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    if (has_sv_collision(log.steps[i])) crashes.push_back(i);
  }
  std::vector<ScenarioRecord> out;
  bool was_below = false;
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    const bool below = log.steps[i].ttc_sv < kNearCrashTtc;
    if (below && !was_below && !has_collision(log.steps[i])) {
      const bool crash_follows = std::any_of(crashes.begin(), crashes.end(), [i](std::size_t c) {
        return c >= i && c - i < static_cast<std::size_t>(kWindowSteps);
      });
      if (!crash_follows) out.push_back(make_record(log, i, ScenarioLabel::NearCrash, arm));
    }
    was_below = below;
  }
  for (std::size_t c : crashes) out.push_back(make_record(log, c, ScenarioLabel::Crash, arm));
  std::sort(out.begin(), out.end(),
            [](const ScenarioRecord& a, const ScenarioRecord& b) { return a.trigger_step < b.trigger_step; });
  return out;
}

RunSummary summarize(const std::vector<ScenarioRecord>& records, int rounds, const std::string& archive_name,
                     const std::string& arm, std::uint64_t seed) {
  RunSummary s;
  s.arm = arm;
  s.seed = seed;
  s.rounds = rounds;
  for (std::size_t i = 0; i < records.size(); ++i) {
    (records[i].label == ScenarioLabel::Crash ? s.crash : s.near_crash) += 1;
    s.records.push_back(archive_name + "#" + std::to_string(i + 1));
  }
  s.total = s.crash + s.near_crash;
  return s;
}

namespace {

double max_deviation(const std::vector<VehicleState>& a, const std::vector<VehicleState>& b) {
  if (a.size() != b.size()) return kInfinity;
  double dev = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id || a[i].lane != b[i].lane) return kInfinity;
    for (auto field : {&VehicleState::s, &VehicleState::d, &VehicleState::heading_err, &VehicleState::v_s,
                       &VehicleState::v_t, &VehicleState::a}) {
      dev = std::max(dev, std::abs(a[i].*field - b[i].*field));
    }
  }
  return dev;
}

}  // namespace

double replay_deviation(const ScenarioRecord& record, const RoadGeometry& road, const DynamicsConfig& dyn) {
  const std::size_t start = static_cast<std::size_t>(record.padding);
  if (start >= record.window.size()) throw ContractError("replay: window holds no logged state");
  WorldState world;
  world.step_index = record.window[start].step;
  world.t = record.window[start].t;
  world.vehicles = record.window[start].vehicles;
  world.lane_width = record.lane_width;
  double dev = 0.0;
  for (std::size_t j = start + 1; j < record.window.size(); ++j) {
    const ControlMap& controls = record.window[j - 1].controls;
    if (controls.empty()) throw ContractError("replay: missing controls before the trigger");
    world = step(world, controls, road, dyn).world;
    dev = std::max(dev, max_deviation(world.vehicles, record.window[j].vehicles));
    dev = std::max(dev, std::abs(world.t - record.window[j].t));
  }
  return dev;
}

// ---------------------------------------------------------------- JSON

namespace {

constexpr int kSchema = 1;

Json number_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }
double number_or_inf(const Json& j) { return j.is_null() ? kInfinity : j.get<double>(); }

// Vehicle columns: id, role, lane, s, d, heading_err, v_s, v_t, a, length, width, v_max.
Json vehicle_json(const VehicleState& v) {
  return Json::array({v.id, v.role == Role::SV ? "SV" : "BV", v.lane, v.s, v.d, v.heading_err, v.v_s, v.v_t, v.a,
                      v.length, v.width, v.v_max});
}

VehicleState vehicle_from(const Json& j) {
  if (!j.is_array() || j.size() != 12) throw ConfigError("vehicle entry must have 12 columns");
  VehicleState v;
  v.id = j[0].get<int>();
  const auto role = j[1].get<std::string>();
  if (role != "SV" && role != "BV") throw ConfigError("vehicle role must be SV or BV");
  v.role = role == "SV" ? Role::SV : Role::BV;
  v.lane = j[2].get<int>();
  v.s = j[3].get<double>();
  v.d = j[4].get<double>();
  v.heading_err = j[5].get<double>();
  v.v_s = j[6].get<double>();
  v.v_t = j[7].get<double>();
  v.a = j[8].get<double>();
  v.length = j[9].get<double>();
  v.width = j[10].get<double>();
  v.v_max = j[11].get<double>();
  return v;
}

Json step_json(const LogStep& s) {
  Json j;
  j["step"] = s.step;
  j["t"] = s.t;
  Json vehicles = Json::array();
  for (const auto& v : s.vehicles) vehicles.push_back(vehicle_json(v));
  j["vehicles"] = vehicles;
  Json events = Json::array();
  for (const auto& e : s.events) events.push_back(Json::array({to_string(e.kind), e.step, e.first, e.second}));
  j["events"] = events;
  Json controls = Json::array();
  for (const auto& [id, u] : s.controls) controls.push_back(Json::array({id, u.throttle, u.brake, u.steering}));
  j["controls"] = controls;
  Json decisions = Json::array();
  for (const auto& [id, d] : s.decisions) decisions.push_back(Json::array({id, static_cast<int>(d)}));
  j["decisions"] = decisions;
  j["in_area"] = s.in_area;
  j["r_coop"] = s.r_coop;
  j["ttc_sv"] = number_or_null(s.ttc_sv);
  return j;
}

LogStep step_from(const Json& j) {
  LogStep s;
  s.step = j.at("step").get<long>();
  s.t = j.at("t").get<double>();
  for (const auto& v : j.at("vehicles")) s.vehicles.push_back(vehicle_from(v));
  for (const auto& e : j.at("events")) {
    try {
      s.events.push_back({event_kind_from_string(e.at(0).get<std::string>()), e.at(1).get<long>(), e.at(2).get<int>(),
                          e.at(3).get<int>()});
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(ex.what());
    }
  }
  for (const auto& c : j.at("controls")) {
    s.controls[c.at(0).get<int>()] = ControlSignal{c.at(1).get<double>(), c.at(2).get<double>(), c.at(3).get<double>()};
  }
  for (const auto& d : j.at("decisions")) {
    const int v = d.at(1).get<int>();
    if (v < -1 || v > 1) throw ConfigError("lane-change decision must be -1, 0 or 1");
    s.decisions[d.at(0).get<int>()] = static_cast<LaneChange>(v);
  }
  s.in_area = j.at("in_area").get<std::vector<int>>();
  s.r_coop = j.at("r_coop").get<double>();
  s.ttc_sv = number_or_inf(j.at("ttc_sv"));
  return s;
}

void check_schema(const Json& j, const char* kind) {
  if (!j.is_object() || j.value("schema", 0) != kSchema || j.value("kind", std::string()) != kind) {
    throw ConfigError(std::string("not a schema 1 ") + kind + " entry");
  }
}

template <typename F>
auto parse_guarded(const std::string& text, F&& f) {
  try {
    return f(Json::parse(text));
  } catch (const Json::exception& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

std::string record_to_json(const ScenarioRecord& r) {
  Json j;
  j["schema"] = kSchema;
  j["kind"] = "scenario";
  j["label"] = to_string(r.label);
  j["trigger_step"] = r.trigger_step;
  j["padding"] = r.padding;
  j["arm"] = r.arm;
  j["seed"] = r.seed;
  j["round"] = r.round;
  j["lane_width"] = r.lane_width;
  j["participants"] = r.participants;
  j["adversarial_participants"] = r.adversarial_participants;
  Json window = Json::array();
  for (const auto& s : r.window) window.push_back(step_json(s));
  j["window"] = window;
  return j.dump();
}

ScenarioRecord record_from_json(const std::string& line) {
  return parse_guarded(line, [](const Json& j) {
    check_schema(j, "scenario");
    ScenarioRecord r;
    r.label = label_from_string(j.at("label").get<std::string>());
    r.trigger_step = j.at("trigger_step").get<long>();
    r.padding = j.at("padding").get<int>();
    r.arm = j.at("arm").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.round = j.at("round").get<int>();
    r.lane_width = j.at("lane_width").get<double>();
    r.participants = j.at("participants").get<std::vector<int>>();
    r.adversarial_participants = j.at("adversarial_participants").get<std::vector<int>>();
    for (const auto& s : j.at("window")) r.window.push_back(step_from(s));
    if (r.window.size() != static_cast<std::size_t>(kWindowSteps)) {
      throw ConfigError("scenario window must hold " + std::to_string(kWindowSteps) + " steps");
    }
    if (r.padding < 0 || r.padding >= kWindowSteps) throw ConfigError("scenario padding out of range");
    return r;
  });
}

std::string log_to_json(const TrajectoryLog& log) {
  Json j;
  j["schema"] = kSchema;
  j["kind"] = "trajectory";
  j["seed"] = log.seed;
  j["round"] = log.round;
  j["lane_width"] = log.lane_width;
  Json steps = Json::array();
  for (const auto& s : log.steps) steps.push_back(step_json(s));
  j["steps"] = steps;
  return j.dump();
}

TrajectoryLog log_from_json(const std::string& line) {
  return parse_guarded(line, [](const Json& j) {
    check_schema(j, "trajectory");
    TrajectoryLog log;
    log.seed = j.at("seed").get<std::uint64_t>();
    log.round = j.at("round").get<int>();
    log.lane_width = j.at("lane_width").get<double>();
    for (const auto& s : j.at("steps")) log.steps.push_back(step_from(s));
    for (std::size_t i = 0; i < log.steps.size(); ++i) {
      if (log.steps[i].step != static_cast<long>(i)) throw ConfigError("trajectory steps must count up from 0");
    }
    return log;
  });
}

std::string summary_to_json(const RunSummary& s) {
  Json j;
  j["schema"] = kSchema;
  j["kind"] = "run_summary";
  j["arm"] = s.arm;
  j["seed"] = s.seed;
  j["rounds"] = s.rounds;
  j["crash"] = s.crash;
  j["near_crash"] = s.near_crash;
  j["total"] = s.total;
  j["records"] = s.records;
  return j.dump(2) + "\n";
}

RunSummary summary_from_json(const std::string& text) {
  return parse_guarded(text, [](const Json& j) {
    check_schema(j, "run_summary");
    RunSummary s;
    s.arm = j.at("arm").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.rounds = j.at("rounds").get<int>();
    s.crash = j.at("crash").get<int>();
    s.near_crash = j.at("near_crash").get<int>();
    s.total = j.at("total").get<int>();
    s.records = j.at("records").get<std::vector<std::string>>();
    if (s.total != s.crash + s.near_crash) throw ConfigError("run summary total differs from crash + near_crash");
    return s;
  });
}

namespace {

template <typename T, typename Encode>
void write_lines(const std::filesystem::path& path, const std::vector<T>& items, Encode encode) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& item : items) out << encode(item) << '\n';
  if (!out) throw ConfigError("failed writing " + path.string());
}

template <typename Decode>
auto read_lines(const std::filesystem::path& path, Decode decode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::vector<decltype(decode(std::string()))> out;
  std::string line;
  for (long n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    try {
      out.push_back(decode(line));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

void write_archive(const std::filesystem::path& path, const std::vector<ScenarioRecord>& records) {
  write_lines(path, records, record_to_json);
}

std::vector<ScenarioRecord> load_archive(const std::filesystem::path& path) {
  return read_lines(path, record_from_json);
}

void write_logs(const std::filesystem::path& path, const std::vector<TrajectoryLog>& logs) {
  write_lines(path, logs, log_to_json);
}

std::vector<TrajectoryLog> load_logs(const std::filesystem::path& path) { return read_lines(path, log_from_json); }

}  // namespace evoscen
