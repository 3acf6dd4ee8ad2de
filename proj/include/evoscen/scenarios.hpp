#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "evoscen/simulation.hpp"
#include "evoscen/world.hpp"

namespace evoscen {

/// One logged simulation step k.
struct LogStep {
  long step = 0;
  double t = 0.0;
  std::vector<VehicleState> vehicles;  // state at k
  std::vector<Event> events;           // events that arrived at k
  ControlMap controls;                 // applied from k to k + 1; empty on the last step
  std::map<int, LaneChange> decisions; // lane-change decisions emitted at k
  std::vector<int> in_area;            // BVs inside the adversarial area at k
  double r_coop = 0.0;                 // cooperative reward of the transition k -> k + 1
  double ttc_sv = kInfinity;           // SV time-to-collision at k

  friend bool operator==(const LogStep&, const LogStep&) = default;
};

struct TrajectoryLog {
  std::uint64_t seed = 0;
  int round = 0;
  double lane_width = 3.5;
  std::vector<LogStep> steps;

  friend bool operator==(const TrajectoryLog&, const TrajectoryLog&) = default;
};

/// Episode observer that accumulates a TrajectoryLog.
class LogRecorder {
 public:
  LogRecorder(std::uint64_t seed, int round);
  void operator()(const StepInfo& info);
  const TrajectoryLog& log() const { return log_; }
  TrajectoryLog take() { return std::move(log_); }

 private:
  TrajectoryLog log_;
};

enum class ScenarioLabel { Crash, NearCrash };

std::string to_string(ScenarioLabel label);

inline constexpr int kWindowSteps = 35;
inline constexpr double kNearCrashTtc = 0.5;

struct ScenarioRecord {
  ScenarioLabel label = ScenarioLabel::Crash;
  long trigger_step = 0;
  /// Zero steps prepended when the trigger comes within the first 34 steps.
  int padding = 0;
  /// kWindowSteps entries ending at the trigger; padded entries carry no vehicles.
  std::vector<LogStep> window;
  std::vector<int> participants;
  /// BVs inside the adversarial area at a window step with positive r_coop.
  std::vector<int> adversarial_participants;
  std::string arm;
  std::uint64_t seed = 0;
  int round = 0;
  double lane_width = 3.5;

  bool padded() const { return padding > 0; }
  friend bool operator==(const ScenarioRecord&, const ScenarioRecord&) = default;
};

/// Crash records for SV collisions and near-crash records for each entry of
/// ttc_sv below 0.5 s; a near-crash followed by a crash within 35 steps is
/// dropped. Sorted by trigger step.
std::vector<ScenarioRecord> detect_and_extract(const TrajectoryLog& log, const std::string& arm = {});

struct RunSummary {
  std::string arm;
  std::uint64_t seed = 0;
  int rounds = 0;
  int crash = 0;
  int near_crash = 0;
  int total = 0;
  std::vector<std::string> records;  // "<archive>#<line>" in archive order

  friend bool operator==(const RunSummary&, const RunSummary&) = default;
};

RunSummary summarize(const std::vector<ScenarioRecord>& records, int rounds, const std::string& archive_name,
                     const std::string& arm = {}, std::uint64_t seed = 0);

/// Replays the window from its first unpadded state with the logged controls
/// and returns the largest absolute deviation of any position, speed or
/// heading field from the log.
double replay_deviation(const ScenarioRecord& record, const RoadGeometry& road, const DynamicsConfig& dyn);

/// One-line JSON encodings (schema 1). Numbers are shortest round-trip decimals.
std::string record_to_json(const ScenarioRecord& record);
ScenarioRecord record_from_json(const std::string& line);
std::string log_to_json(const TrajectoryLog& log);
TrajectoryLog log_from_json(const std::string& line);
std::string summary_to_json(const RunSummary& summary);
RunSummary summary_from_json(const std::string& text);

/// Archive = one record per line. Load errors name the offending line.
void write_archive(const std::filesystem::path& path, const std::vector<ScenarioRecord>& records);
std::vector<ScenarioRecord> load_archive(const std::filesystem::path& path);
void write_logs(const std::filesystem::path& path, const std::vector<TrajectoryLog>& logs);
std::vector<TrajectoryLog> load_logs(const std::filesystem::path& path);

}  // namespace evoscen
