#include "evoscen/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "evoscen/errors.hpp"

namespace evoscen {

using Json = nlohmann::ordered_json;

namespace {

std::string segment_kind_name(SegmentKind k) {
  switch (k) {
    case SegmentKind::Straight: return "straight";
    case SegmentKind::Curve: return "curve";
    case SegmentKind::OnRampMerge: return "on_ramp_merge";
  }
  return "straight";
}

SegmentKind segment_kind_from(const std::string& s, const std::string& where) {
  if (s == "straight") return SegmentKind::Straight;
  if (s == "curve") return SegmentKind::Curve;
  if (s == "on_ramp_merge") return SegmentKind::OnRampMerge;
  throw ConfigError(where + ": unknown segment kind '" + s + "'");
}

class Writer {
 public:
  explicit Writer(Json& j) : j_(j) {}

  template <class T>
  void operator()(const char* key, const T& v) {
    j_[key] = v;
  }

  void operator()(const char* key, const PidGains& g) { j_[key] = {g.kp, g.ki, g.kd}; }

  void operator()(const char* key, const std::vector<Segment>& segs) {
    Json list = Json::array();
    for (const auto& s : segs) {
      Json e;
      e["kind"] = segment_kind_name(s.kind);
      e["length"] = s.arc_length;
      e["curvature"] = s.curvature;
      list.push_back(e);
    }
    j_[key] = list;
  }

  template <class F>
  void section(const char* key, F&& f) {
    Json sub = Json::object();
    Writer w(sub);
    f(w);
    j_[key] = sub;
  }

 private:
  Json& j_;
};

class Reader {
 public:
  Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  void operator()(const char* key, double& v) {
    if (const Json* e = find(key)) {
      if (!e->is_number()) fail(key, "a number");
      v = e->get<double>();
    }
  }

  void operator()(const char* key, int& v) {
    if (const Json* e = find(key)) {
      if (!e->is_number_integer()) fail(key, "an integer");
      v = e->get<int>();
    }
  }

  void operator()(const char* key, std::size_t& v) {
    if (const Json* e = find(key)) {
      if (!e->is_number_unsigned()) fail(key, "a non-negative integer");
      v = e->get<std::size_t>();
    }
  }

  void operator()(const char* key, bool& v) {
    if (const Json* e = find(key)) {
      if (!e->is_boolean()) fail(key, "a boolean");
      v = e->get<bool>();
    }
  }

  void operator()(const char* key, std::string& v) {
    if (const Json* e = find(key)) {
      if (!e->is_string()) fail(key, "a string");
      v = e->get<std::string>();
    }
  }

  void operator()(const char* key, std::array<double, 2>& v) {
    if (const Json* e = find(key)) {
      if (!e->is_array() || e->size() != 2 || !(*e)[0].is_number() || !(*e)[1].is_number()) fail(key, "[lo, hi]");
      v = {(*e)[0].get<double>(), (*e)[1].get<double>()};
    }
  }

  void operator()(const char* key, std::vector<double>& v) {
    if (const Json* e = find(key)) {
      if (!e->is_array()) fail(key, "an array of numbers");
      v.clear();
      for (const auto& x : *e) {
        if (!x.is_number()) fail(key, "an array of numbers");
        v.push_back(x.get<double>());
      }
    }
  }

  void operator()(const char* key, PidGains& g) {
    if (const Json* e = find(key)) {
      if (!e->is_array() || e->size() != 3) fail(key, "[kp, ki, kd]");
      for (const auto& x : *e) {
        if (!x.is_number()) fail(key, "[kp, ki, kd]");
      }
      g = {(*e)[0].get<double>(), (*e)[1].get<double>(), (*e)[2].get<double>()};
    }
  }

  void operator()(const char* key, std::vector<Segment>& segs) {
    if (const Json* e = find(key)) {
      if (!e->is_array() || e->empty()) fail(key, "a non-empty array of segments");
      segs.clear();
      for (const auto& x : *e) {
        Reader r(x, where_ + "." + key);
        Segment s;
        std::string kind = "straight";
        r("kind", kind);
        r("length", s.arc_length);
        r("curvature", s.curvature);
        r.finish();
        s.kind = segment_kind_from(kind, where_ + "." + key);
        segs.push_back(s);
      }
    }
  }

  template <class F>
  void section(const char* key, F&& f) {
    if (const Json* e = find(key)) {
      Reader r(*e, where_ + "." + key);
      f(r);
      r.finish();
    }
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const Json* find(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError(where_ + "." + key + ": expected " + what);
  }

  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <class B>
void bind(B& b, RunConfig& c) {
  SimulationConfig& sim = c.train.sim;
  b.section("map", [&](auto& s) {
    s("segments", sim.map.segments);
    s("main_lane_count", sim.map.main_lane_count);
    s("lane_width", sim.map.lane_width);
    s("has_ramp", sim.map.has_ramp);
    s("merge_window", sim.map.merge_window);
    s("init_area", sim.map.init_area);
  });
  b.section("spawn", [&](auto& s) {
    s("v_max_choices_kmh", sim.spawn.v_max_choices_kmh);
    s("min_gap", sim.spawn.min_gap);
    s("speed_lo", sim.spawn.speed_lo);
    s("speed_hi", sim.spawn.speed_hi);
    s("length", sim.spawn.length);
    s("width", sim.spawn.width);
  });
  b.section("dynamics", [&](auto& s) {
    s("a_max", sim.dynamics.a_max);
    s("b_max", sim.dynamics.b_max);
    s("drag", sim.dynamics.drag);
    s("lane_change_duration", sim.dynamics.lane_change_duration);
    s("wheelbase", sim.dynamics.wheelbase);
    s("speed_overshoot", sim.dynamics.speed_overshoot);
  });
  b.section("control", [&](auto& s) {
    s("alpha", sim.control.lateral.alpha);
    s("beta", sim.control.lateral.beta);
    s("lateral_pid", sim.control.lateral.lateral);
    s("yaw_pid", sim.control.lateral.yaw);
    s("s_min", sim.control.lateral.s_min);
    s("s_max", sim.control.lateral.s_max);
    s("speed_pid", sim.control.speed.gains);
  });
  b.section("observation", [&](auto& s) {
    s("v_max_norm", sim.observation.v_max_norm);
    s("v_lat_norm", sim.observation.v_lat_norm);
  });
  b.section("reward", [&](auto& s) {
    RewardConfig& r = sim.reward;
    s("r_c", r.r_c);
    s("mu", r.mu);
    s("lambda", r.lambda);
    s("d_desired", r.d_desired);
    s("delta1", r.delta1);
    s("delta2", r.delta2);
    s("p_lc", r.p_lc);
    s("r_rv", r.r_rv);
    s("eta1", r.eta1);
    s("eta2", r.eta2);
    s("d_cap", r.d_cap);
    s("gap_buffer", r.gap_buffer);
  });
  b.section("nilsson", [&](auto& s) {
    NilssonParams& p = sim.nilsson;
    s("w1", p.w1);
    s("w2", p.w2);
    s("w3", p.w3);
    s("hysteresis", p.hysteresis);
    s("g_min", p.g_min);
    s("ttc_min", p.ttc_min);
    s("lookahead", p.lookahead);
    s("time_gap", p.time_gap);
    s("standstill", p.standstill);
  });
  b.section("stackelberg", [&](auto& s) {
    StackelbergParams& p = sim.stackelberg;
    s("horizon", p.horizon);
    s("decel_step", p.decel_step);
    s("w_progress", p.w_progress);
    s("w_gap", p.w_gap);
    s("lane_change_cost", p.lane_change_cost);
    s("g_min", p.g_min);
    s("time_gap", p.time_gap);
    s("standstill", p.standstill);
    s("assumed_accel", p.assumed_accel);
    s("assumed_decel", p.assumed_decel);
  });
  b("max_steps", sim.max_steps);
  b.section("td3", [&](auto& s) {
    Td3Config& t = c.train.td3;
    s("buffer_max", t.buffer_max);
    s("lr_actor", t.lr_actor);
    s("lr_critic1", t.lr_critic1);
    s("lr_critic2", t.lr_critic2);
    s("batch", t.batch);
    s("iters_per_round", t.iters_per_round);
    s("tau", t.tau);
    s("gamma", t.gamma);
    s("explore_sigma", t.explore_sigma);
    s("target_noise", t.target_noise);
    s("target_noise_clip", t.target_noise_clip);
    s("policy_delay", t.policy_delay);
    s("hidden", t.hidden);
  });
  b.section("stages", [&](auto& s) {
    s("others", c.train.others);
    s("agents", c.train.agents);
    s("divergence_window", c.train.divergence_window);
    s("divergence_fraction", c.train.divergence_fraction);
    s.section("rounds", [&](auto& r) {
      r("level1", c.stage_rounds[Stage::Level1]);
      r("level2", c.stage_rounds[Stage::Level2]);
      r("marl", c.stage_rounds[Stage::Marl]);
    });
  });
  b.section("simulate", [&](auto& s) {
    s("rounds", c.simulate_rounds);
    s("bvs", c.simulate_bvs);
    s("jobs", c.jobs);
  });
}

}  // namespace

TrainConfig RunConfig::stage_config(Stage stage) const {
  TrainConfig t = train;
  const auto it = stage_rounds.find(stage);
  if (it != stage_rounds.end()) t.td3.rounds = it->second;
  return t;
}

void RunConfig::validate() const {
  train.td3.validate();
  train.sim.reward.validate();
  for (const auto& [stage, rounds] : stage_rounds) {
    if (rounds <= 0) throw ConfigError("stages.rounds." + to_string(stage) + " must be positive");
  }
  if (train.others < 0 || train.agents < 1) throw ConfigError("stages: others must be >= 0 and agents >= 1");
  if (train.divergence_window < 1 || !(train.divergence_fraction > 0.0 && train.divergence_fraction <= 1.0)) {
    throw ConfigError("stages: divergence_window >= 1 and divergence_fraction in (0, 1] required");
  }
  if (simulate_rounds < 1) throw ConfigError("simulate.rounds must be positive");
  if (simulate_bvs < 0) throw ConfigError("simulate.bvs must be non-negative");
  if (jobs < 1) throw ConfigError("simulate.jobs must be positive");
  if (train.sim.max_steps < 1) throw ConfigError("max_steps must be positive");
  if (train.sim.map.segments.empty()) throw ConfigError("map.segments must not be empty");
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "paper") {
    c.train.sim.map = MapSpec::default_highway();
    c.train.others = 12;
    c.train.agents = 12;
    c.stage_rounds = {{Stage::Level1, 90000}, {Stage::Level2, 90000}, {Stage::Marl, 90000}};
    c.simulate_rounds = 500;
    c.simulate_bvs = 12;
  } else if (name == "desk") {
    c.train.sim.map = MapSpec::straight(1200.0);
    c.train.others = 6;
    c.train.agents = 6;
    c.train.td3.iters_per_round = 10;
    c.train.td3.tau = 0.005;
    c.stage_rounds = {{Stage::Level1, 2000}, {Stage::Level2, 1000}, {Stage::Marl, 1500}};
    c.simulate_rounds = 100;
    c.simulate_bvs = 6;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
  }
  return c;
}

Json config_to_json(const RunConfig& cfg) {
  Json j;
  j["schema"] = 1;
  j["preset"] = cfg.preset;
  RunConfig copy = cfg;
  Writer w(j);
  bind(w, copy);
  return j;
}

RunConfig config_from_json(const Json& doc, const std::optional<std::string>& preset) {
  if (!doc.is_object()) throw ConfigError("config: expected an object");
  const auto schema = doc.find("schema");
  if (schema == doc.end() || !schema->is_number_integer() || schema->get<int>() != 1) {
    throw ConfigError("config: schema must be 1");
  }
  std::string name = "desk";
  if (const auto p = doc.find("preset"); p != doc.end()) {
    if (!p->is_string()) throw ConfigError("config.preset: expected a string");
    name = p->get<std::string>();
  }
  if (preset) name = *preset;
  RunConfig c = preset_config(name);
  Reader r(doc, "config");
  std::string ignored;
  int schema_seen = 0;
  r("schema", schema_seen);
  r("preset", ignored);
  bind(r, c);
  r.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path, const std::optional<std::string>& preset) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return config_from_json(doc, preset);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace evoscen
