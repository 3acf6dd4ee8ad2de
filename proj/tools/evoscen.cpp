#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "evoscen/config.hpp"
#include "evoscen/errors.hpp"
#include "evoscen/learner.hpp"
#include "evoscen/metrics.hpp"
#include "evoscen/rng.hpp"
#include "evoscen/scenarios.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace evoscen;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string manifest_path(const fs::path& p, const fs::path& out) {
  const fs::path rel = fs::absolute(p).lexically_normal().lexically_relative(fs::absolute(out).lexically_normal());
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return fs::absolute(p).lexically_normal().generic_string();
}

fs::path resolve(const std::string& s, const fs::path& out) {
  const fs::path p(s);
  return p.is_absolute() ? p : out / p;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

/// Adds or replaces the step with the same id in out/manifest.json.
void record_step(const fs::path& out, const Json& step) {
  const fs::path path = out / "manifest.json";
  Json doc;
  if (fs::exists(path)) {
    std::ifstream in(path);
    try {
      doc = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  } else {
    doc["schema"] = 1;
    doc["kind"] = "manifest";
    doc["tool"] = "evoscen";
    doc["version"] = kVersion;
    doc["steps"] = Json::array();
  }
  Json& steps = doc["steps"];
  const auto it = std::find_if(steps.begin(), steps.end(), [&](const Json& s) { return s["id"] == step["id"]; });
  if (it != steps.end()) {
    *it = step;
  } else {
    steps.push_back(step);
  }
  write_text(path, doc.dump(2) + "\n");
}

RunConfig resolve_config(const std::string& config_path, const std::string& preset) {
  const std::optional<std::string> p = preset.empty() ? std::nullopt : std::optional<std::string>(preset);
  RunConfig cfg = config_path.empty() ? preset_config(p.value_or("desk")) : load_config(config_path, p);
  cfg.validate();
  return cfg;
}

// ---- train ----

struct TrainArgs {
  std::string stage = "level1";
  std::uint64_t seed = 1;
  std::optional<int> rounds;
  std::string init;
};

std::optional<Stage> previous_stage(Stage s) {
  if (s == Stage::Level2) return Stage::Level1;
  if (s == Stage::Marl) return Stage::Level2;
  return std::nullopt;
}

int run_train(const TrainArgs& args, RunConfig cfg, const fs::path& out) {
  const Stage stage = stage_from_string(args.stage);
  if (args.rounds) cfg.stage_rounds[stage] = *args.rounds;
  cfg.validate();
  const TrainConfig tc = cfg.stage_config(stage);

  std::optional<fs::path> init_dir;
  if (!args.init.empty()) {
    init_dir = resolve(args.init, out);
  } else if (const auto prev = previous_stage(stage)) {
    const fs::path guess = out / "checkpoints" / to_string(*prev);
    if (fs::exists(guess / "actor.txt")) init_dir = guess;
  }
  std::optional<Td3Networks> init;
  if (init_dir) init = load_checkpoint(*init_dir);

  const int total = tc.td3.rounds;
  const int every = std::max(1, total / 10);
  double acc = 0.0;
  int n = 0;
  StageResult res = run_stage(stage, tc, args.seed, init, [&](const RoundStats& r) {
    acc += r.mean_reward;
    ++n;
    if ((r.round + 1) % every == 0 || r.round + 1 == total) {
      std::cerr << to_string(stage) << " round " << r.round + 1 << "/" << total << " mean_reward "
                << format_double(acc / n) << "\n";
      acc = 0.0;
      n = 0;
    }
  });

  const fs::path ckpt = out / "checkpoints" / to_string(stage);
  const fs::path curve = out / "reports" / (to_string(stage) + "_curve.csv");
  save_checkpoint(ckpt, res.nets);
  fs::create_directories(curve.parent_path());
  write_curve_csv(curve, res.curve);

  Json step;
  step["id"] = "train:" + to_string(stage);
  step["command"] = "train";
  step["stage"] = to_string(stage);
  step["seed"] = args.seed;
  step["init"] = init_dir ? Json(manifest_path(*init_dir, out)) : Json(nullptr);
  step["config"] = config_to_json(cfg);
  step["outputs"] = {{"checkpoint", manifest_path(ckpt, out)}, {"curve", manifest_path(curve, out)}};
  step["diverged"] = res.diverged;
  record_step(out, step);
  if (res.diverged) {
    std::cerr << "warning: policy saturation flagged at round " << *res.diverged_at << "\n";
  }
  std::cout << "trained " << to_string(stage) << " for " << total << " rounds -> " << ckpt.string() << "\n";
  return 0;
}

// ---- simulate ----

struct SimulateArgs {
  std::string npc = "nilsson";
  std::string policy;
  std::optional<int> rounds;
  std::uint64_t seed = 1;
  int jobs = 0;
  bool trajectories = false;
};

struct RoundOutput {
  std::vector<ScenarioRecord> records;
  std::optional<TrajectoryLog> log;
};

int run_simulate(const SimulateArgs& args, RunConfig cfg, const fs::path& out) {
  if (args.npc != "nilsson" && args.npc != "dualdm" && args.npc != "external") {
    throw ConfigError("--npc must be nilsson, dualdm or external");
  }
  const bool learned = args.npc != "nilsson";
  if (learned && args.policy.empty()) throw ConfigError("--npc " + args.npc + " requires --policy");
  if (args.rounds) cfg.simulate_rounds = *args.rounds;
  if (args.jobs > 0) cfg.jobs = args.jobs;
  cfg.validate();

  std::optional<fs::path> policy_path;
  std::optional<Mlp> policy;
  if (learned) {
    policy_path = resolve(args.policy, out);
    policy = load_policy(*policy_path);
  }

  SimulationConfig sim = cfg.train.sim;
  sim.spawn.bv_count = cfg.simulate_bvs;
  sim.observation.mark_adversarial = true;
  const RoadGeometry road(sim.map);
  std::vector<Driver> drivers(static_cast<std::size_t>(cfg.simulate_bvs) + 1);
  drivers[0] = Driver{ModelKind::Stackelberg};
  for (std::size_t i = 1; i < drivers.size(); ++i) {
    drivers[i] = learned ? Driver{ModelKind::DualDM, &*policy} : Driver{ModelKind::Nilsson};
  }
  EpisodeOptions opts;
  opts.cooperative = true;

  const int rounds = cfg.simulate_rounds;
  std::vector<RoundOutput> results(static_cast<std::size_t>(rounds));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(rounds));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < rounds; r = next++) {
      try {
        LogRecorder rec(args.seed, r);
        run_episode(road, sim, drivers, derive_seed(args.seed, static_cast<std::uint64_t>(r)), opts,
                    [&rec](const StepInfo& info) { rec(info); });
        RoundOutput& o = results[static_cast<std::size_t>(r)];
        o.records = detect_and_extract(rec.log(), args.npc);
        if (args.trajectories) o.log = rec.take();
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
      }
    }
  };
  const int jobs = std::min(cfg.jobs, rounds);
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<ScenarioRecord> records;
  std::vector<TrajectoryLog> logs;
  for (auto& o : results) {
    for (auto& rec : o.records) records.push_back(std::move(rec));
    if (o.log) logs.push_back(std::move(*o.log));
  }
  const fs::path archive = out / "archives" / (args.npc + ".jsonl");
  const fs::path summary = out / "reports" / (args.npc + "_summary.json");
  fs::create_directories(archive.parent_path());
  write_archive(archive, records);
  const RunSummary s = summarize(records, rounds, archive.filename().string(), args.npc, args.seed);
  write_text(summary, summary_to_json(s));

  Json outputs = {{"archive", manifest_path(archive, out)}, {"summary", manifest_path(summary, out)}};
  if (args.trajectories) {
    const fs::path traj = out / "archives" / (args.npc + "_trajectories.jsonl");
    write_logs(traj, logs);
    outputs["trajectories"] = manifest_path(traj, out);
  }
  Json step;
  step["id"] = "simulate:" + args.npc;
  step["command"] = "simulate";
  step["npc"] = args.npc;
  step["policy"] = policy_path ? Json(manifest_path(*policy_path, out)) : Json(nullptr);
  step["seed"] = args.seed;
  step["trajectories"] = args.trajectories;
  step["config"] = config_to_json(cfg);
  step["outputs"] = outputs;
  record_step(out, step);
  std::cout << args.npc << ": " << rounds << " rounds, " << s.crash << " crash, " << s.near_crash
            << " near-crash, " << s.total << " total\n";
  return 0;
}

// ---- filter ----

struct FilterArgs {
  std::string logs;
  std::string arm;
};

int run_filter(const FilterArgs& args, const fs::path& out) {
  const fs::path logs_path = resolve(args.logs, out);
  const auto logs = load_logs(logs_path);
  if (logs.empty()) throw ConfigError(logs_path.string() + ": no trajectory logs");
  std::string arm = args.arm;
  if (arm.empty()) {
    arm = logs_path.stem().string();
    const std::string suffix = "_trajectories";
    if (arm.size() > suffix.size() && arm.compare(arm.size() - suffix.size(), suffix.size(), suffix) == 0) {
      arm.resize(arm.size() - suffix.size());
    }
    arm += "_filtered";
  }
  std::vector<ScenarioRecord> records;
  for (const auto& log : logs) {
    for (auto& r : detect_and_extract(log, arm)) records.push_back(std::move(r));
  }
  const fs::path archive = out / "archives" / (arm + ".jsonl");
  const fs::path summary = out / "reports" / (arm + "_summary.json");
  fs::create_directories(archive.parent_path());
  write_archive(archive, records);
  const RunSummary s = summarize(records, static_cast<int>(logs.size()), archive.filename().string(), arm, logs.front().seed);
  write_text(summary, summary_to_json(s));

  Json step;
  step["id"] = "filter:" + arm;
  step["command"] = "filter";
  step["logs"] = manifest_path(logs_path, out);
  step["arm"] = arm;
  step["outputs"] = {{"archive", manifest_path(archive, out)}, {"summary", manifest_path(summary, out)}};
  record_step(out, step);
  std::cout << arm << ": " << logs.size() << " logs, " << s.crash << " crash, " << s.near_crash << " near-crash\n";
  return 0;
}

// ---- evaluate ----

struct EvaluateArgs {
  std::string archive;
  std::string highd;
  std::string summary;
  std::optional<int> rounds;
  std::string report;
  bool plots = false;
};

std::vector<fs::path> highd_files(const fs::path& p) {
  if (fs::is_regular_file(p)) return {p};
  if (!fs::is_directory(p)) throw ConfigError("--highd: no such file or directory " + p.string());
  std::vector<fs::path> all, tracks;
  for (const auto& e : fs::directory_iterator(p)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    all.push_back(e.path());
    const std::string name = e.path().filename().string();
    if (name.size() > 11 && name.compare(name.size() - 11, 11, "_tracks.csv") == 0) tracks.push_back(e.path());
  }
  std::vector<fs::path>& chosen = tracks.empty() ? all : tracks;
  std::sort(chosen.begin(), chosen.end());
  if (chosen.empty()) throw ConfigError("--highd: no CSV files in " + p.string());
  return chosen;
}

int run_evaluate(const EvaluateArgs& args, const fs::path& out) {
  const fs::path archive = resolve(args.archive, out);
  const auto records = load_archive(archive);
  std::optional<fs::path> summary_path;
  long rounds = 0;
  if (args.rounds) {
    rounds = *args.rounds;
  } else if (!args.summary.empty()) {
    summary_path = resolve(args.summary, out);
    std::ifstream in(*summary_path);
    if (!in) throw ConfigError("cannot read " + summary_path->string());
    std::stringstream ss;
    ss << in.rdbuf();
    rounds = summary_from_json(ss.str()).rounds;
  } else {
    throw ConfigError("evaluate needs --rounds or --summary");
  }
  if (rounds <= 0) throw ConfigError("--rounds must be positive");

  MetricsReport rep;
  rep.rounds = rounds;
  rep.scenarios = static_cast<long>(records.size());
  for (const auto& r : records) (r.label == ScenarioLabel::Crash ? rep.crash : rep.near_crash)++;
  rep.efficiency = efficiency(rep.scenarios, rounds);
  if (!records.empty()) {
    double sum = 0.0;
    for (const auto& r : records) {
      const PositionComplexity pos = complexity_pos(r);
      if (pos.degenerate) ++rep.degenerate_records;
      sum += complexity(pos.value, complexity_act(r));
    }
    rep.complexity = sum / static_cast<double>(records.size());
  }
  rep.diversity = diversity(records);

  const BehaviorDistributions generated = behavior_distributions(records);
  std::optional<BehaviorDistributions> reference;
  std::optional<fs::path> highd_path;
  if (args.highd.empty()) {
    rep.fidelity_note = "no reference data supplied";
  } else {
    highd_path = resolve(args.highd, out);
    std::vector<HighDRow> rows;
    for (const auto& f : highd_files(*highd_path)) {
      auto part = read_highd_csv(f);
      rows.insert(rows.end(), part.begin(), part.end());
    }
    reference = highd_distributions(rows);
    std::vector<std::string> notes;
    if (generated.velocity.total() > 0 && reference->velocity.total() > 0) {
      rep.js_velocity = js_divergence(generated.velocity, reference->velocity);
    } else {
      notes.push_back("velocity: empty histogram");
    }
    if (generated.lane_changes > 0 && reference->lane_changes > 0) {
      rep.js_lane_change_ttc = js_divergence(generated.lane_change_ttc, reference->lane_change_ttc);
    } else {
      notes.push_back("lane-change TTC: no lane changes in " +
                      std::string(generated.lane_changes == 0 ? "the archive" : "the reference data"));
    }
    for (std::size_t i = 0; i < notes.size(); ++i) rep.fidelity_note += (i ? "; " : "") + notes[i];
  }

  const std::string stem = archive.stem().string();
  const fs::path report = args.report.empty() ? out / "reports" / (stem + "_metrics.json") : resolve(args.report, out);
  write_text(report, report_to_json(rep));
  Json outputs = {{"report", manifest_path(report, out)}};
  if (args.plots) {
    const fs::path dir = out / "plots";
    const std::optional<Histogram> ref_v = reference ? std::optional<Histogram>(reference->velocity) : std::nullopt;
    const std::optional<Histogram> ref_t =
        reference ? std::optional<Histogram>(reference->lane_change_ttc) : std::nullopt;
    write_text(dir / (stem + "_velocity.svg"), histogram_svg(generated.velocity, ref_v, "Velocity", "m/s"));
    write_text(dir / (stem + "_lane_change_ttc.svg"),
               histogram_svg(generated.lane_change_ttc, ref_t, "TTC at lane change", "s"));
    write_text(dir / (stem + "_participants.svg"), participants_svg(rep.diversity));
    outputs["plots"] = manifest_path(dir, out);
  }

  Json step;
  step["id"] = "evaluate:" + manifest_path(report, out);
  step["command"] = "evaluate";
  step["archive"] = manifest_path(archive, out);
  step["highd"] = highd_path ? Json(manifest_path(*highd_path, out)) : Json(nullptr);
  step["rounds"] = rounds;
  step["plots"] = args.plots;
  step["outputs"] = outputs;
  record_step(out, step);
  std::cout << "E = " << format_double(rep.efficiency) << " (" << rep.scenarios << "/" << rounds << "), report "
            << report.string() << "\n";
  return 0;
}

// ---- rerun ----

std::string optional_string(const Json& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() || it->is_null() ? std::string() : it->get<std::string>();
}

int run_rerun(const fs::path& manifest, const fs::path& out) {
  std::ifstream in(manifest);
  if (!in) throw ConfigError("cannot read " + manifest.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(manifest.string() + ": " + e.what());
  }
  if (doc.value("kind", "") != "manifest" || !doc.contains("steps")) throw ConfigError(manifest.string() + ": not a manifest");
  const fs::path base = manifest.parent_path().empty() ? fs::path(".") : manifest.parent_path();
  // Inputs outside the original run directory are kept as absolute paths.
  auto input = [&](const std::string& s) {
    if (s.empty()) return s;
    const fs::path p(s);
    return fs::absolute(p.is_absolute() ? p : (fs::exists(out / p) ? out / p : base / p)).string();
  };
  try {
    for (const Json& step : doc["steps"]) {
      const std::string cmd = step.at("command").get<std::string>();
      if (cmd == "train") {
        TrainArgs a;
        a.stage = step.at("stage").get<std::string>();
        a.seed = step.at("seed").get<std::uint64_t>();
        a.init = input(optional_string(step, "init"));
        run_train(a, config_from_json(step.at("config")), out);
      } else if (cmd == "simulate") {
        SimulateArgs a;
        a.npc = step.at("npc").get<std::string>();
        a.policy = input(optional_string(step, "policy"));
        a.seed = step.at("seed").get<std::uint64_t>();
        a.trajectories = step.at("trajectories").get<bool>();
        run_simulate(a, config_from_json(step.at("config")), out);
      } else if (cmd == "filter") {
        FilterArgs a;
        a.logs = input(step.at("logs").get<std::string>());
        a.arm = step.at("arm").get<std::string>();
        run_filter(a, out);
      } else if (cmd == "evaluate") {
        EvaluateArgs a;
        a.archive = input(step.at("archive").get<std::string>());
        a.highd = input(optional_string(step, "highd"));
        a.rounds = step.at("rounds").get<int>();
        a.report = step.at("outputs").at("report").get<std::string>();
        a.plots = step.at("plots").get<bool>();
        run_evaluate(a, out);
      } else {
        throw ConfigError(manifest.string() + ": unknown command '" + cmd + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(manifest.string() + ": " + e.what());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Highway scenario generation with adversarially trained background vehicles"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string out = ".";
  std::string config_path, preset;

  auto* train = app.add_subcommand("train", "Train one stage of the driver model");
  TrainArgs ta;
  train->add_option("--stage", ta.stage, "level1, level2 or marl")->required();
  train->add_option("--config", config_path, "JSON config file");
  train->add_option("--preset", preset, "desk or paper");
  train->add_option("--seed", ta.seed, "Master seed");
  train->add_option("--rounds", ta.rounds, "Override the stage's round count");
  train->add_option("--init", ta.init, "Checkpoint directory of the previous stage");
  train->add_option("--out", out, "Run directory");

  auto* simulate = app.add_subcommand("simulate", "Run test rounds against a background-vehicle model");
  SimulateArgs sa;
  simulate->add_option("--npc", sa.npc, "nilsson, dualdm or external")->required();
  simulate->add_option("--policy", sa.policy, "Actor file or checkpoint directory");
  simulate->add_option("--rounds", sa.rounds, "Number of rounds");
  simulate->add_option("--seed", sa.seed, "Master seed");
  simulate->add_option("--jobs", sa.jobs, "Parallel workers");
  simulate->add_flag("--trajectories", sa.trajectories, "Also write the full trajectory logs");
  simulate->add_option("--config", config_path, "JSON config file");
  simulate->add_option("--preset", preset, "desk or paper");
  simulate->add_option("--out", out, "Run directory");

  auto* filter = app.add_subcommand("filter", "Extract critical scenarios from trajectory logs");
  FilterArgs fa;
  filter->add_option("--logs", fa.logs, "Trajectory log file")->required();
  filter->add_option("--arm", fa.arm, "Arm name for the archive");
  filter->add_option("--out", out, "Run directory");

  auto* evaluate = app.add_subcommand("evaluate", "Compute metrics for a scenario archive");
  EvaluateArgs ea;
  evaluate->add_option("--archive", ea.archive, "Scenario archive")->required();
  evaluate->add_option("--highd", ea.highd, "HighD tracks CSV file or directory");
  evaluate->add_option("--summary", ea.summary, "Run summary giving the round count");
  evaluate->add_option("--rounds", ea.rounds, "Number of simulated rounds");
  evaluate->add_option("--report", ea.report, "Report path");
  evaluate->add_flag("--plots", ea.plots, "Write SVG plots");
  evaluate->add_option("--out", out, "Run directory");

  auto* rerun = app.add_subcommand("rerun", "Repeat every step recorded in a manifest");
  std::string manifest;
  rerun->add_option("--manifest", manifest, "manifest.json")->required();
  rerun->add_option("--out", out, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  auto absolute = [](std::string& s) {
    if (!s.empty()) s = fs::absolute(s).string();
  };
  for (std::string* s : {&ta.init, &sa.policy, &fa.logs, &ea.archive, &ea.highd, &ea.summary, &ea.report}) absolute(*s);

  try {
    fs::create_directories(out);
    if (*train) return run_train(ta, resolve_config(config_path, preset), out);
    if (*simulate) return run_simulate(sa, resolve_config(config_path, preset), out);
    if (*filter) return run_filter(fa, out);
    if (*evaluate) return run_evaluate(ea, out);
    if (*rerun) return run_rerun(manifest, out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
