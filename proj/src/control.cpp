#include "evoscen/control.hpp"

#include <algorithm>
#include <cmath>

namespace evoscen {

ActionPair ActionPair::clamped(double a_long, double a_lat) {
  return {std::clamp(a_long, -1.0, 1.0), std::clamp(a_lat, -1.0, 1.0)};
}

LongitudinalSignal map_longitudinal(double a_long) {
  a_long = std::clamp(a_long, -1.0, 1.0);
  if (a_long > 0.0) return {a_long, 0.0};
  if (a_long < 0.0) return {0.0, -a_long};
  return {};
}

LaneChange discretize_lateral(double a_lat) {
  if (a_lat > 0.5) return LaneChange::Left;
  if (a_lat < -0.5) return LaneChange::Right;
  return LaneChange::Keep;
}

namespace {

struct PidTerm {
  double output;
  double next_integral;
  double derivative;
};

PidTerm pid_term(double error, const PidState& st, const PidGains& g, double dt) {
  const double next_integral = st.integral + error * dt;
  const double derivative = st.has_prev ? (error - st.prev_error) / dt : 0.0;
  return {g.kp * error + g.ki * next_integral + g.kd * derivative, next_integral, derivative};
}

void commit(PidState& st, double error, double next_integral, bool saturated) {
  if (!saturated) st.integral = next_integral;
  st.prev_error = error;
  st.has_prev = true;
}

}  // namespace

double lateral_dual_pid(double lateral_error, double yaw_error, DualPidState& state, const PidConfig& cfg,
                        double dt) {
  const PidTerm d = pid_term(lateral_error, state.lateral, cfg.lateral, dt);
  const PidTerm e = pid_term(yaw_error, state.yaw, cfg.yaw, dt);
  const double raw = cfg.alpha * d.output + cfg.beta * e.output;
  const double out = std::clamp(raw, cfg.s_min, cfg.s_max);
  const bool saturated = out != raw;
  commit(state.lateral, lateral_error, d.next_integral, saturated);
  commit(state.yaw, yaw_error, e.next_integral, saturated);
  return out;
}

double longitudinal_pid(double v_target, double v_current, PidState& state, const SpeedPidConfig& cfg,
                        double dt) {
  const double error = v_target - v_current;
  const PidTerm term = pid_term(error, state, cfg.gains, dt);
  const double out = std::clamp(term.output, -1.0, 1.0);
  commit(state, error, term.next_integral, out != term.output);
  return out;
}

std::optional<int> lane_change_target(LaneChange decision, int lane, int lane_count) {
  if (decision == LaneChange::Keep) return std::nullopt;
  const int target = decision == LaneChange::Left ? lane - 1 : lane + 1;
  if (target < 1 || target > lane_count) return std::nullopt;
  return target;
}

double lane_change_offset(double progress, double lane_width) {
  const double p = std::clamp(progress, 0.0, 1.0);
  return lane_width * p * p * (3.0 - 2.0 * p);
}

double VehicleController::reference_y(const VehicleState& v, const RoadGeometry& road, double duration) const {
  if (!maneuver_) return road.lane_center(v.lane);
  const double progress = maneuver_->elapsed / duration;
  const double sign = maneuver_->to_y > maneuver_->from_y ? 1.0 : -1.0;
  return maneuver_->from_y + sign * lane_change_offset(progress, std::abs(maneuver_->to_y - maneuver_->from_y));
}

double VehicleController::steer(LaneChange decision, const VehicleState& v, const RoadGeometry& road,
                                const ControlConfig& cfg, const DynamicsConfig& dyn) {
  if (maneuver_ && maneuver_->elapsed >= dyn.lane_change_duration && v.lane == maneuver_->target_lane) {
    maneuver_.reset();
  }
  if (!maneuver_) {
    if (const auto target = lane_change_target(decision, v.lane, road.lane_count_at(v.s))) {
      maneuver_ = Maneuver{road.lane_center(v.lane), road.lane_center(*target), 0.0, *target};
    }
  }
  if (maneuver_) maneuver_->elapsed = std::min(maneuver_->elapsed + dyn.dt, dyn.lane_change_duration);
  const double y_ref = reference_y(v, road, dyn.lane_change_duration);
  const double y = lateral_position(v, road.lane_width());
  return lateral_dual_pid(y_ref - y, -v.heading_err, lateral_, cfg.lateral, dyn.dt);
}

ControlSignal VehicleController::track_speed(double v_target, LaneChange decision, const VehicleState& v,
                                             const RoadGeometry& road, const ControlConfig& cfg,
                                             const DynamicsConfig& dyn) {
  const double a_long = longitudinal_pid(v_target, v.v_s, speed_, cfg.speed, dyn.dt);
  return direct(a_long, decision, v, road, cfg, dyn);
}

ControlSignal VehicleController::direct(double a_long, LaneChange decision, const VehicleState& v,
                                        const RoadGeometry& road, const ControlConfig& cfg,
                                        const DynamicsConfig& dyn) {
  const LongitudinalSignal lon = map_longitudinal(a_long);
  ControlSignal out;
  out.throttle = lon.throttle;
  out.brake = lon.brake;
  out.steering = steer(decision, v, road, cfg, dyn);
  return out;
}

}  // namespace evoscen
