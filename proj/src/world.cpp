#include "evoscen/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "evoscen/errors.hpp"
#include "evoscen/rng.hpp"

namespace evoscen {

double MapSpec::total_length() const {
  return std::accumulate(segments.begin(), segments.end(), 0.0,
                         [](double acc, const Segment& seg) { return acc + seg.arc_length; });
}

MapSpec MapSpec::default_highway() {
  MapSpec spec;
  spec.segments = {
      {SegmentKind::Straight, 100.0, 0.0},
      {SegmentKind::OnRampMerge, 200.0, 0.0},
      {SegmentKind::Straight, 400.0, 0.0},
      {SegmentKind::Curve, 300.0, 1.0 / 800.0},
      {SegmentKind::Straight, 400.0, 0.0},
      {SegmentKind::Curve, 300.0, -1.0 / 800.0},
      {SegmentKind::Straight, 700.0, 0.0},
  };
  spec.main_lane_count = 4;
  spec.lane_width = 3.5;
  spec.has_ramp = true;
  spec.merge_window = {100.0, 300.0};
  spec.init_area = {0.0, 95.0};
  return spec;
}

MapSpec MapSpec::straight(double length, int lanes, std::array<double, 2> init_area) {
  MapSpec spec;
  spec.segments = {{SegmentKind::Straight, length, 0.0}};
  spec.main_lane_count = lanes;
  spec.has_ramp = false;
  spec.merge_window = {0.0, 0.0};
  spec.init_area = init_area;
  return spec;
}

namespace {

bool intervals_overlap(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  return a[0] < b[1] && b[0] < a[1];
}

}  // namespace

RoadGeometry::RoadGeometry(MapSpec spec) : spec_(std::move(spec)) {
  if (spec_.segments.empty()) throw ConfigError("map: at least one segment is required");
  for (const auto& seg : spec_.segments) {
    if (!(seg.arc_length > 0.0)) throw ConfigError("map: segment arc_length must be positive");
  }
  if (!(spec_.lane_width > 0.0)) throw ConfigError("map: lane_width must be positive");
  if (spec_.main_lane_count < 2) throw ConfigError("map: main_lane_count must be at least 2");
  total_length_ = spec_.total_length();

  const auto& ia = spec_.init_area;
  if (!(ia[0] >= 0.0 && ia[0] < ia[1] && ia[1] <= total_length_)) {
    throw ConfigError("map: init_area must be a non-empty range inside the road");
  }
  if (spec_.has_ramp) {
    const auto& mw = spec_.merge_window;
    if (!(mw[0] >= 0.0 && mw[0] < mw[1] && mw[1] <= total_length_)) {
      throw ConfigError("map: merge_window must be a non-empty range inside the road");
    }
    if (intervals_overlap(mw, ia)) throw ConfigError("map: merge_window overlaps init_area");
  }

  Pose pose;
  double s0 = 0.0;
  for (const auto& seg : spec_.segments) {
    starts_.push_back({s0, pose});
    const double theta1 = pose.heading + seg.curvature * seg.arc_length;
    if (seg.curvature == 0.0) {
      pose.x += seg.arc_length * std::cos(pose.heading);
      pose.y += seg.arc_length * std::sin(pose.heading);
    } else {
      pose.x += (std::sin(theta1) - std::sin(pose.heading)) / seg.curvature;
      pose.y -= (std::cos(theta1) - std::cos(pose.heading)) / seg.curvature;
    }
    pose.heading = theta1;
    s0 += seg.arc_length;
  }
  starts_.push_back({s0, pose});
}

std::size_t RoadGeometry::segment_index(double s) const {
  // starts_ has one sentinel entry for the road end.
  if (s <= 0.0) return 0;
  for (std::size_t i = 0; i + 1 < starts_.size(); ++i) {
    if (s < starts_[i + 1].s0) return i;
  }
  return starts_.size() - 2;
}

int RoadGeometry::lane_count_at(double s) const {
  if (spec_.has_ramp && s >= spec_.merge_window[0] && s < spec_.merge_window[1]) {
    return spec_.main_lane_count + 1;
  }
  return spec_.main_lane_count;
}

double RoadGeometry::curvature_at(double s) const {
  if (s < 0.0 || s >= total_length_) return 0.0;
  return spec_.segments[segment_index(s)].curvature;
}

double RoadGeometry::heading_at(double s) const {
  if (s >= total_length_) return starts_.back().pose.heading;
  if (s <= 0.0) return 0.0;
  const std::size_t i = segment_index(s);
  return starts_[i].pose.heading + spec_.segments[i].curvature * (s - starts_[i].s0);
}

Pose RoadGeometry::centerline_pose(int lane, double s) const {
  Pose ref;
  if (s >= total_length_ || s < 0.0) {
    // Straight extrapolation beyond either end.
    const Pose& anchor = s < 0.0 ? starts_.front().pose : starts_.back().pose;
    const double ds = s < 0.0 ? s : s - total_length_;
    ref = anchor;
    ref.x += ds * std::cos(anchor.heading);
    ref.y += ds * std::sin(anchor.heading);
  } else {
    const std::size_t i = segment_index(s);
    const Pose& p0 = starts_[i].pose;
    const double kappa = spec_.segments[i].curvature;
    const double ds = s - starts_[i].s0;
    ref.heading = p0.heading + kappa * ds;
    if (kappa == 0.0) {
      ref.x = p0.x + ds * std::cos(p0.heading);
      ref.y = p0.y + ds * std::sin(p0.heading);
    } else {
      ref.x = p0.x + (std::sin(ref.heading) - std::sin(p0.heading)) / kappa;
      ref.y = p0.y - (std::cos(ref.heading) - std::cos(p0.heading)) / kappa;
    }
  }
  const double offset = lane_center(lane);
  ref.x -= offset * std::sin(ref.heading);
  ref.y += offset * std::cos(ref.heading);
  return ref;
}

int RoadGeometry::nearest_lane(double y, double s) const {
  const int count = lane_count_at(s);
  const int lane = static_cast<int>(std::ceil(-y / spec_.lane_width - 0.5)) + 1;
  return std::clamp(lane, 1, count);
}

std::string to_string(EventKind kind) {
  switch (kind) {
    case EventKind::CollisionSvBv: return "CollisionSvBv";
    case EventKind::CollisionBvBv: return "CollisionBvBv";
    case EventKind::BoundaryViolation: return "BoundaryViolation";
    case EventKind::SvReachedEnd: return "SvReachedEnd";
  }
  return "?";
}

EventKind event_kind_from_string(const std::string& name) {
  for (auto k : {EventKind::CollisionSvBv, EventKind::CollisionBvBv, EventKind::BoundaryViolation,
                 EventKind::SvReachedEnd}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown event kind: " + name);
}

const VehicleState* WorldState::find(int id) const {
  for (const auto& v : vehicles) {
    if (v.id == id) return &v;
  }
  return nullptr;
}

const VehicleState& WorldState::vehicle(int id) const {
  if (const auto* v = find(id)) return *v;
  throw ContractError("unknown vehicle id " + std::to_string(id));
}

const VehicleState& WorldState::sv() const {
  for (const auto& v : vehicles) {
    if (v.role == Role::SV) return v;
  }
  throw ContractError("world has no SV");
}

bool WorldState::terminal() const { return !events.empty(); }

WorldState spawn(const RoadGeometry& road, const SpawnConfig& cfg, std::uint64_t seed) {
  if (cfg.bv_count < 0) throw ConfigError("spawn: bv_count must be non-negative");
  if (cfg.v_max_choices_kmh.empty()) throw ConfigError("spawn: no v_max choices");
  if (!(cfg.speed_lo >= 0.0 && cfg.speed_lo <= cfg.speed_hi)) {
    throw ConfigError("spawn: speed fraction range is invalid");
  }
  Rng rng(seed);
  const auto [s0, s1] = road.spec().init_area;
  const double span = s1 - s0;
  const int lanes = road.main_lane_count();
  const int total = cfg.bv_count + 1;
  const double pitch = cfg.length + cfg.min_gap;
  const int capacity = span < cfg.length ? 0 : static_cast<int>(std::floor((span + cfg.min_gap) / pitch));
  if (total > lanes * capacity) {
    throw SpawnError("spawn: init area of " + std::to_string(span) + " m cannot hold " +
                     std::to_string(total) + " vehicles with " + std::to_string(cfg.min_gap) +
                     " m gaps");
  }

  const double v_max =
      cfg.v_max_choices_kmh[rng.below(cfg.v_max_choices_kmh.size())] / 3.6;

  std::vector<int> per_lane(static_cast<std::size_t>(lanes), 0);
  for (int k = 0; k < total; ++k) {
    std::vector<int> open;
    for (int l = 0; l < lanes; ++l) {
      if (per_lane[static_cast<std::size_t>(l)] < capacity) open.push_back(l);
    }
    ++per_lane[static_cast<std::size_t>(open[rng.below(open.size())])];
  }

  struct Slot {
    int lane;
    double s;
  };
  std::vector<Slot> slots;
  for (int l = 0; l < lanes; ++l) {
    const int n = per_lane[static_cast<std::size_t>(l)];
    if (n == 0) continue;
    const double slack = span - n * cfg.length - (n - 1) * cfg.min_gap;
    std::vector<double> offsets(static_cast<std::size_t>(n));
    for (auto& o : offsets) o = rng.uniform(0.0, slack);
    std::sort(offsets.begin(), offsets.end());
    for (int k = 0; k < n; ++k) {
      slots.push_back({l + 1, s0 + offsets[static_cast<std::size_t>(k)] + k * pitch + cfg.length / 2.0});
    }
  }
  std::sort(slots.begin(), slots.end(),
            [](const Slot& a, const Slot& b) { return a.s != b.s ? a.s < b.s : a.lane < b.lane; });

  // The SV takes the slot nearest the middle of the init area.
  const double mid = 0.5 * (s0 + s1);
  std::size_t sv_slot = 0;
  for (std::size_t i = 1; i < slots.size(); ++i) {
    if (std::abs(slots[i].s - mid) < std::abs(slots[sv_slot].s - mid)) sv_slot = i;
  }

  WorldState world;
  world.rng_seed = seed;
  world.lane_width = road.lane_width();
  int next_id = 1;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    VehicleState v;
    v.id = i == sv_slot ? 0 : next_id++;
    v.role = i == sv_slot ? Role::SV : Role::BV;
    v.lane = slots[i].lane;
    v.s = slots[i].s;
    v.length = cfg.length;
    v.width = cfg.width;
    v.v_max = v_max;
    v.v_s = rng.uniform(cfg.speed_lo, cfg.speed_hi) * v_max;
    world.vehicles.push_back(v);
  }
  std::sort(world.vehicles.begin(), world.vehicles.end(),
            [](const VehicleState& a, const VehicleState& b) { return a.id < b.id; });
  return world;
}

namespace {

struct Rect {
  double s, y, heading, half_len, half_wid;
};

bool overlap_on_axis(const Rect& a, const Rect& b, double ax, double ay) {
  auto radius = [ax, ay](const Rect& r) {
    const double c = std::cos(r.heading), sn = std::sin(r.heading);
    return r.half_len * std::abs(c * ax + sn * ay) + r.half_wid * std::abs(-sn * ax + c * ay);
  };
  const double dist = std::abs((b.s - a.s) * ax + (b.y - a.y) * ay);
  return dist < radius(a) + radius(b);
}

bool rect_overlap(const Rect& a, const Rect& b) {
  for (const Rect* r : {&a, &b}) {
    const double c = std::cos(r->heading), sn = std::sin(r->heading);
    if (!overlap_on_axis(a, b, c, sn)) return false;
    if (!overlap_on_axis(a, b, -sn, c)) return false;
  }
  return true;
}

Rect rect_of(const VehicleState& v, double y) {
  return {v.s, y, v.heading_err, v.length / 2.0, v.width / 2.0};
}

constexpr int kSweepSamples = 20;

}  // namespace

bool rectangles_overlap(const VehicleState& a, double ya, const VehicleState& b, double yb) {
  return rect_overlap(rect_of(a, ya), rect_of(b, yb));
}

StepResult step(const WorldState& world, const ControlMap& controls, const RoadGeometry& road,
                const DynamicsConfig& dyn) {
  if (world.terminal()) throw ContractError("step: world already has a terminal event");
  StepResult out;
  out.world = world;
  WorldState& next = out.world;
  next.step_index = world.step_index + 1;
  next.t = static_cast<double>(next.step_index) * dyn.dt;

  const double w = road.lane_width();
  std::vector<double> y_old(world.vehicles.size()), y_new(world.vehicles.size());

  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    const VehicleState& cur = world.vehicles[i];
    const auto it = controls.find(cur.id);
    if (it == controls.end()) {
      throw ContractError("step: missing control for vehicle " + std::to_string(cur.id));
    }
    const ControlSignal& u = it->second;
    VehicleState& nv = next.vehicles[i];

    const double accel = u.throttle * dyn.a_max - u.brake * dyn.b_max - dyn.drag * cur.v_s;
    nv.v_s = std::clamp(cur.v_s + accel * dyn.dt, 0.0, cur.v_max + dyn.speed_overshoot);
    nv.a = (nv.v_s - cur.v_s) / dyn.dt;
    nv.s = cur.s + nv.v_s * dyn.dt;

    const double yaw_rate = nv.v_s * std::tan(u.steering) / dyn.wheelbase - road.curvature_at(cur.s) * nv.v_s;
    nv.heading_err = cur.heading_err + yaw_rate * dyn.dt;
    nv.v_t = nv.v_s * std::sin(nv.heading_err);
    y_old[i] = lateral_position(cur, w);
    y_new[i] = y_old[i] + nv.v_t * dyn.dt;
    nv.lane = road.nearest_lane(y_new[i], nv.s);
    nv.d = y_new[i] - road.lane_center(nv.lane);
  }

  for (std::size_t i = 0; i < next.vehicles.size(); ++i) {
    const VehicleState& cur = world.vehicles[i];
    const VehicleState& nv = next.vehicles[i];
    const int count = road.lane_count_at(nv.s);
    const bool edge = nv.lane == 1 || nv.lane == count;
    const bool ramp_closed = road.is_ramp_lane(cur.lane) && !road.lane_exists(cur.lane, nv.s);
    if ((edge && std::abs(nv.d) > w) || ramp_closed) {
      out.events.push_back({EventKind::BoundaryViolation, next.step_index, nv.id, -1});
    }
  }

  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    for (std::size_t j = i + 1; j < world.vehicles.size(); ++j) {
      const VehicleState& a0 = world.vehicles[i];
      const VehicleState& b0 = world.vehicles[j];
      const VehicleState& a1 = next.vehicles[i];
      const VehicleState& b1 = next.vehicles[j];
      const double reach = 0.5 * (a0.length + b0.length + a0.width + b0.width);
      const double lo = std::min(std::abs(a0.s - b0.s), std::abs(a1.s - b1.s));
      if (lo > reach + std::abs((a1.s - a0.s) - (b1.s - b0.s))) continue;
      bool hit = false;
      for (int k = 0; k <= kSweepSamples && !hit; ++k) {
        const double f = static_cast<double>(k) / kSweepSamples;
        auto lerp = [f](double x0, double x1) { return x0 + f * (x1 - x0); };
        const Rect ra{lerp(a0.s, a1.s), lerp(y_old[i], y_new[i]), lerp(a0.heading_err, a1.heading_err),
                      a0.length / 2.0, a0.width / 2.0};
        const Rect rb{lerp(b0.s, b1.s), lerp(y_old[j], y_new[j]), lerp(b0.heading_err, b1.heading_err),
                      b0.length / 2.0, b0.width / 2.0};
        hit = rect_overlap(ra, rb);
      }
      if (hit) {
        const bool with_sv = a0.role == Role::SV || b0.role == Role::SV;
        out.events.push_back({with_sv ? EventKind::CollisionSvBv : EventKind::CollisionBvBv,
                              next.step_index, a0.id, b0.id});
      }
    }
  }

  for (const auto& v : next.vehicles) {
    if (v.role == Role::SV && v.s >= road.total_length()) {
      out.events.push_back({EventKind::SvReachedEnd, next.step_index, v.id, -1});
    }
  }
  next.events.insert(next.events.end(), out.events.begin(), out.events.end());
  return out;
}

double ttc_pair(const VehicleState& a, double ya, const VehicleState& b, double yb, double horizon) {
  auto half_extents = [](const VehicleState& v) {
    const double c = std::abs(std::cos(v.heading_err)), sn = std::abs(std::sin(v.heading_err));
    return std::array<double, 2>{0.5 * (v.length * c + v.width * sn), 0.5 * (v.length * sn + v.width * c)};
  };
  const auto ha = half_extents(a), hb = half_extents(b);
  const std::array<double, 2> gap{b.s - a.s, yb - ya};
  const std::array<double, 2> rel{b.v_s - a.v_s, b.v_t - a.v_t};
  double enter = -kInfinity, exit = kInfinity;
  for (int axis = 0; axis < 2; ++axis) {
    const double h = ha[static_cast<std::size_t>(axis)] + hb[static_cast<std::size_t>(axis)];
    const double p = gap[static_cast<std::size_t>(axis)];
    const double u = rel[static_cast<std::size_t>(axis)];
    if (u == 0.0) {
      if (std::abs(p) >= h) return kInfinity;
      continue;
    }
    double t0 = (-h - p) / u, t1 = (h - p) / u;
    if (t0 > t1) std::swap(t0, t1);
    enter = std::max(enter, t0);
    exit = std::min(exit, t1);
  }
  if (!(enter < exit) || exit <= 0.0) return kInfinity;
  const double t = std::max(enter, 0.0);
  return t <= horizon ? t : kInfinity;
}

double ttc_sv(const WorldState& world) {
  const VehicleState& sv = world.sv();
  const double ysv = lateral_position(sv, world.lane_width);
  double best = kInfinity;
  for (const auto& v : world.vehicles) {
    if (v.role == Role::SV) continue;
    best = std::min(best, ttc_pair(sv, ysv, v, lateral_position(v, world.lane_width)));
  }
  return best;
}

bool adversarial_area_contains(const VehicleState& ego, const VehicleState& sv) {
  return std::abs(ego.s - sv.s) <= kAdversarialHalfLength &&
         std::abs(ego.lane - sv.lane) <= kAdversarialLaneSpan;
}

}  // namespace evoscen
