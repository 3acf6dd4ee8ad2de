#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "evoscen/signals.hpp"

namespace evoscen {

enum class SegmentKind { Straight, Curve, OnRampMerge };

struct Segment {
  SegmentKind kind = SegmentKind::Straight;
  double arc_length = 0.0;  // m
  double curvature = 0.0;   // 1/m, positive bends left
};

/// Declarative road description. Lanes are numbered from 1 (leftmost);
/// the on-ramp, when present, is lane main_lane_count + 1 and exists only
/// inside the merge window.
struct MapSpec {
  std::vector<Segment> segments;
  int main_lane_count = 4;
  double lane_width = 3.5;
  bool has_ramp = true;
  std::array<double, 2> merge_window{100.0, 300.0};
  std::array<double, 2> init_area{0.0, 95.0};

  double total_length() const;

  /// Four-lane highway: straight, on-ramp merge over [100, 300], two
  /// opposite 300 m curves of curvature 1/800 between straights, 2400 m.
  static MapSpec default_highway();
  /// Single straight segment without a ramp.
  static MapSpec straight(double length, int lanes = 4, std::array<double, 2> init_area = {0.0, 120.0});
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

/// Immutable, queryable geometry built from a validated MapSpec.
class RoadGeometry {
 public:
  /// Throws ConfigError when the spec breaks its invariants.
  explicit RoadGeometry(MapSpec spec);

  const MapSpec& spec() const { return spec_; }
  double total_length() const { return total_length_; }
  double lane_width() const { return spec_.lane_width; }
  int main_lane_count() const { return spec_.main_lane_count; }

  int lane_count_at(double s) const;
  bool lane_exists(int lane, double s) const { return lane >= 1 && lane <= lane_count_at(s); }
  bool is_ramp_lane(int lane) const { return lane > spec_.main_lane_count; }
  double curvature_at(double s) const;
  /// Road-tangent heading at s (integral of curvature); constant past the end.
  double heading_at(double s) const;
  /// Global pose of a lane centerline point.
  Pose centerline_pose(int lane, double s) const;

  /// Lateral coordinate of a lane centerline in the road frame
  /// (lane 1 at 0, lanes to the right are negative).
  double lane_center(int lane) const { return -(lane - 1) * spec_.lane_width; }
  /// Lane whose centerline is nearest to y among the lanes present at s;
  /// ties resolve to the lower lane index.
  int nearest_lane(double y, double s) const;

 private:
  struct SegmentStart {
    double s0;
    Pose pose;
  };
  MapSpec spec_;
  double total_length_ = 0.0;
  std::vector<SegmentStart> starts_;

  std::size_t segment_index(double s) const;
};

enum class Role { SV, BV };

struct VehicleState {
  int id = 0;
  Role role = Role::BV;
  int lane = 1;
  double s = 0.0;            // m along the reference line
  double d = 0.0;            // m from lane centerline, positive left
  double heading_err = 0.0;  // rad relative to road tangent
  double v_s = 0.0;          // m/s
  double v_t = 0.0;          // m/s, positive left
  double a = 0.0;            // m/s^2
  double length = 4.7;
  double width = 1.9;
  double v_max = 33.3;

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

/// Lateral road-frame coordinate of the vehicle center.
inline double lateral_position(const VehicleState& v, double lane_width) {
  return -(v.lane - 1) * lane_width + v.d;
}

enum class EventKind { CollisionSvBv, CollisionBvBv, BoundaryViolation, SvReachedEnd };

struct Event {
  EventKind kind = EventKind::CollisionBvBv;
  long step = 0;
  int first = -1;
  int second = -1;

  bool involves(int id) const { return first == id || second == id; }
  friend bool operator==(const Event&, const Event&) = default;
};

std::string to_string(EventKind kind);
EventKind event_kind_from_string(const std::string& name);

inline constexpr double kTimeStep = 0.1;

struct WorldState {
  double t = 0.0;
  long step_index = 0;
  std::vector<VehicleState> vehicles;
  std::uint64_t rng_seed = 0;
  std::vector<Event> events;
  double lane_width = 3.5;

  const VehicleState& vehicle(int id) const;
  const VehicleState* find(int id) const;
  const VehicleState& sv() const;
  bool terminal() const;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct DynamicsConfig {
  double a_max = 3.0;   // m/s^2 at full throttle
  double b_max = 8.0;   // m/s^2 at full brake
  double drag = 0.01;   // 1/s
  double lane_change_duration = 2.5;
  double dt = kTimeStep;
  double wheelbase = 2.8;
  double speed_overshoot = 0.5;  // tolerated v_s above v_max
};

struct SpawnConfig {
  int bv_count = 15;
  std::vector<double> v_max_choices_kmh{90.0, 100.0, 110.0, 120.0};
  double min_gap = 10.0;
  double speed_lo = 0.5;
  double speed_hi = 0.8;
  double length = 4.7;
  double width = 1.9;
};

/// Places one SV and `bv_count` BVs on the main lanes of the init area.
/// The SV gets id 0; BVs get ids 1..n. Throws SpawnError when they do not fit.
WorldState spawn(const RoadGeometry& road, const SpawnConfig& cfg, std::uint64_t seed);

using ControlMap = std::map<int, ControlSignal>;

struct StepResult {
  WorldState world;
  std::vector<Event> events;
};

/// Advances every vehicle by one dt with semi-implicit Euler and reports
/// collisions (swept rectangle overlap), boundary violations and the SV
/// reaching the road end. Throws ContractError on a missing control or a
/// terminal world.
StepResult step(const WorldState& world, const ControlMap& controls, const RoadGeometry& road,
                const DynamicsConfig& dyn);

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Minimum constant-velocity time-to-collision between the SV and any BV
/// over a 10 s horizon; infinity when none.
double ttc_sv(const WorldState& world);

/// Time until the road-frame bounding boxes of two vehicles (lateral
/// centers ya, yb) first overlap under constant velocity; infinity when
/// that does not happen within `horizon`.
double ttc_pair(const VehicleState& a, double ya, const VehicleState& b, double yb,
                double horizon = 10.0);

/// Oriented rectangle overlap of two vehicles in the road frame.
bool rectangles_overlap(const VehicleState& a, double ya, const VehicleState& b, double yb);

inline constexpr double kAdversarialHalfLength = 22.5;
inline constexpr int kAdversarialLaneSpan = 2;

/// True iff the ego lies within 22.5 m longitudinally and two lanes
/// laterally of the SV.
bool adversarial_area_contains(const VehicleState& ego, const VehicleState& sv);

}  // namespace evoscen
