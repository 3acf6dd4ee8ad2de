#pragma once

#include <optional>

#include "evoscen/signals.hpp"
#include "evoscen/world.hpp"

namespace evoscen {

struct LongitudinalSignal {
  double throttle = 0.0;
  double brake = 0.0;
};

/// Positive commands throttle, negative commands brake, zero coasts.
LongitudinalSignal map_longitudinal(double a_long);

/// Strict thresholds at +/-0.5; exactly 0.5 keeps the lane.
LaneChange discretize_lateral(double a_lat);

struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
};

struct PidState {
  double integral = 0.0;
  double prev_error = 0.0;
  bool has_prev = false;
};

struct PidConfig {
  double alpha = 1.5;  // weight of the lateral-deviation PID
  double beta = 1.0;   // weight of the yaw-error PID
  PidGains lateral{0.06, 0.0, 0.0};
  PidGains yaw{0.8, 0.0, 0.01};
  double s_min = -0.5;  // rad
  double s_max = 0.5;
};

struct DualPidState {
  PidState lateral;
  PidState yaw;
};

/// steering = clip(alpha * PID(lateral_error) + beta * PID(yaw_error), s_min, s_max).
/// Integrators are left untouched on steps where the output saturates.
double lateral_dual_pid(double lateral_error, double yaw_error, DualPidState& state, const PidConfig& cfg,
                        double dt = kTimeStep);

struct SpeedPidConfig {
  PidGains gains{0.25, 0.02, 0.0};
};

/// PID on (v_target - v_current), clamped to [-1, 1]; anti-windup as above.
double longitudinal_pid(double v_target, double v_current, PidState& state, const SpeedPidConfig& cfg,
                        double dt = kTimeStep);

/// Target lane for a decision, or nullopt when the decision is Keep or the
/// target lane does not exist at s. Left moves toward lane 1.
std::optional<int> lane_change_target(LaneChange decision, int lane, int lane_count);

/// Cubic ease-in-out lateral displacement after `progress` in [0, 1] of a
/// centerline-to-centerline change of width `lane_width`.
double lane_change_offset(double progress, double lane_width);

struct ControlConfig {
  PidConfig lateral;
  SpeedPidConfig speed;
};

/// Per-vehicle controller state: the two lateral PIDs, the speed PID and the
/// lane change in progress. A started change runs to completion; decisions
/// issued meanwhile are ignored.
class VehicleController {
 public:
  struct Maneuver {
    double from_y = 0.0;
    double to_y = 0.0;
    double elapsed = 0.0;
    int target_lane = 0;
  };

  /// Strategic input: track a target speed.
  ControlSignal track_speed(double v_target, LaneChange decision, const VehicleState& v, const RoadGeometry& road,
                            const ControlConfig& cfg, const DynamicsConfig& dyn);
  /// Operational input: a_long maps straight to throttle / brake.
  ControlSignal direct(double a_long, LaneChange decision, const VehicleState& v, const RoadGeometry& road,
                       const ControlConfig& cfg, const DynamicsConfig& dyn);

  const std::optional<Maneuver>& maneuver() const { return maneuver_; }
  /// Lateral road-frame reference for the coming step.
  double reference_y(const VehicleState& v, const RoadGeometry& road, double duration) const;

 private:
  double steer(LaneChange decision, const VehicleState& v, const RoadGeometry& road, const ControlConfig& cfg,
               const DynamicsConfig& dyn);

  DualPidState lateral_;
  PidState speed_;
  std::optional<Maneuver> maneuver_;
};

}  // namespace evoscen
