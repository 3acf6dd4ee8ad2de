#pragma once

namespace evoscen {

/// Raw policy output. Both components live in [-1, 1].
struct ActionPair {
  double a_long = 0.0;
  double a_lat = 0.0;

  /// Clamps both components into [-1, 1].
  static ActionPair clamped(double a_long, double a_lat);
};

/// Actuator command consumed by the world integrator.
/// Invariant: throttle and brake are never both positive.
struct ControlSignal {
  double throttle = 0.0;
  double brake = 0.0;
  double steering = 0.0;  // rad, positive turns left

  friend bool operator==(const ControlSignal&, const ControlSignal&) = default;
};

/// -1 = change right, 0 = keep lane, +1 = change left.
enum class LaneChange : int { Right = -1, Keep = 0, Left = 1 };

}  // namespace evoscen
