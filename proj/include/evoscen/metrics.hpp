#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "evoscen/scenarios.hpp"

namespace evoscen {

/// Uniform bins [lo + k*width, lo + (k+1)*width); values outside the range
/// land in the first or last bin.
struct Histogram {
  double lo = 0.0;
  double width = 1.0;
  std::vector<double> counts;

  static Histogram uniform(double lo, double hi, double width);
  void add(double x, double weight = 1.0);
  double total() const;
  /// (c_k / total + eps) / (1 + K * eps); a uniform vector when empty.
  std::vector<double> probabilities(double eps = 1e-9) const;
  bool same_edges(const Histogram& other) const;
};

inline constexpr double kSmoothing = 1e-9;

/// Jensen-Shannon divergence in bits of two probability vectors.
double js_divergence(const std::vector<double>& p, const std::vector<double>& q);
/// Of two histograms after smoothing. Throws ContractError on different edges.
double js_divergence(const Histogram& p, const Histogram& q, double eps = kSmoothing);

Histogram velocity_histogram();     // 0-40 m/s, 1 m/s bins
Histogram lane_change_ttc_histogram();  // 0-20 s, 0.5 s bins

struct BehaviorDistributions {
  Histogram velocity = velocity_histogram();
  Histogram lane_change_ttc = lane_change_ttc_histogram();
  long lane_changes = 0;
};

/// Front-gap TTC of `ego` in its lane; infinity when not closing in.
double front_ttc(const std::vector<VehicleState>& vehicles, const VehicleState& ego);

/// BV speeds at every logged step, and the front-gap TTC of every BV at each
/// step where it starts emitting a lane-change decision.
BehaviorDistributions behavior_distributions(const std::vector<const std::vector<LogStep>*>& sequences);
BehaviorDistributions behavior_distributions(const std::vector<ScenarioRecord>& records);

struct HighDRow {
  long frame = 0;
  int id = 0;
  double x = 0.0;
  double y = 0.0;
  double x_velocity = 0.0;
  double y_velocity = 0.0;
  double x_acceleration = 0.0;
  int lane_id = 0;
};

/// Reads a HighD tracks CSV; only the needed columns are used, in any order.
std::vector<HighDRow> read_highd_csv(const std::filesystem::path& path);
/// Speeds |xVelocity| of every row; TTC to the nearest leader in the new lane
/// at each frame where a vehicle's laneId changes.
BehaviorDistributions highd_distributions(const std::vector<HighDRow>& rows, double vehicle_length = 4.7);

/// min(n / N, 1).
double efficiency(long n, long rounds);

struct ComplexityConfig {
  double c_act = 1.0;
  double c_noact = 0.0;
  double accel_threshold = 4.0;  // m/s^2
  double eta_c = 3.0;
  double half_length = 22.5;     // m, longitudinal reach of every area
};

/// 8-area ring around the SV: 1 front, 2 rear, 3 front-left, 4 rear-left,
/// 5 front-right, 6 rear-right, 7 two lanes left, 8 two lanes right.
/// 0 when outside every area.
int ring_area(const VehicleState& bv, const VehicleState& sv, const ComplexityConfig& cfg = {});

/// 10-area grid over five lanes: columns are lanes from two left (0) to two
/// right (4) of the SV; front areas are 1..5, rear areas 6..10; 0 outside.
int grid_area(const VehicleState& bv, const VehicleState& sv, const ComplexityConfig& cfg = {});

struct PositionComplexity {
  double value = 0.0;
  int counted = 0;          // BVs inside the ring
  bool degenerate = false;  // no BV inside the ring
};

/// Entropy (bits) of the BV area occupancy; 0.5 when every counted BV shares
/// one area; 0 (flagged) when none is counted.
PositionComplexity complexity_pos(const std::vector<int>& area_counts);
PositionComplexity complexity_pos(const ScenarioRecord& record, const ComplexityConfig& cfg = {});

/// Fraction-weighted action complexity of the BVs counted by complexity_pos.
double complexity_act(int acting, int total, const ComplexityConfig& cfg = {});
double complexity_act(const ScenarioRecord& record, const ComplexityConfig& cfg = {});

double complexity(double c_pos, double c_act, const ComplexityConfig& cfg = {});
double complexity(const ScenarioRecord& record, const ComplexityConfig& cfg = {});
/// Mean over records. Throws ContractError on an empty set.
double model_complexity(const std::vector<ScenarioRecord>& records, const ComplexityConfig& cfg = {});

struct DiversityReport {
  long coop_positive = 0;
  std::map<int, long> participant_histogram;  // adversarial BV count -> records
  std::map<std::vector<int>, long> two_bv_patterns;
  std::map<std::vector<int>, long> three_bv_patterns;
};

/// Sorted grid-area ids of the adversarial participants at the first window
/// step with positive cooperative reward; empty when there is none.
std::vector<int> adversarial_pattern(const ScenarioRecord& record, const ComplexityConfig& cfg = {});
DiversityReport diversity(const std::vector<ScenarioRecord>& records, const ComplexityConfig& cfg = {});

struct MetricsReport {
  std::optional<double> js_velocity;
  std::optional<double> js_lane_change_ttc;
  std::string fidelity_note;
  long scenarios = 0;
  long rounds = 0;
  long crash = 0;
  long near_crash = 0;
  double efficiency = 0.0;
  std::optional<double> complexity;
  long degenerate_records = 0;
  DiversityReport diversity;
};

/// Canonical pretty JSON (schema 1).
std::string report_to_json(const MetricsReport& report);

/// Bar chart of per-bin probabilities of two histograms.
std::string histogram_svg(const Histogram& generated, const std::optional<Histogram>& reference,
                          const std::string& title, const std::string& x_label);
/// Bar chart of the adversarial participant-count histogram.
std::string participants_svg(const DiversityReport& report);

}  // namespace evoscen
