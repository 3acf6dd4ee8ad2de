#include "evoscen/models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "evoscen/control.hpp"
#include "evoscen/errors.hpp"
#include "evoscen/rewards.hpp"

namespace evoscen {

LaneChange lane_change_of(const DriverDecision& d) {
  return std::visit([](const auto& x) { return x.lane_change; }, d);
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Nilsson: return "nilsson";
    case ModelKind::Stackelberg: return "stackelberg";
    case ModelKind::DualDM: return "dualdm";
    case ModelKind::ConstantSpeed: return "constant_speed";
  }
  return "nilsson";
}

ModelKind model_kind_from_string(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (ModelKind k : {ModelKind::Nilsson, ModelKind::Stackelberg, ModelKind::DualDM, ModelKind::ConstantSpeed}) {
    if (lower == to_string(k)) return k;
  }
  throw ConfigError("unknown driver model '" + name + "'");
}

namespace {

constexpr double kUnbounded = 1e9;

bool ahead_of(const VehicleState& other, const VehicleState& ego) {
  return other.s > ego.s || (other.s == ego.s && other.id > ego.id);
}

const VehicleState* leader_in(const WorldState& world, const VehicleState& ego, int lane) {
  const VehicleState* best = nullptr;
  for (const auto& o : world.vehicles) {
    if (o.id == ego.id || o.lane != lane || !ahead_of(o, ego)) continue;
    if (!best || o.s < best->s) best = &o;
  }
  return best;
}

const VehicleState* follower_in(const WorldState& world, const VehicleState& ego, int lane) {
  const VehicleState* best = nullptr;
  for (const auto& o : world.vehicles) {
    if (o.id == ego.id || o.lane != lane || ahead_of(o, ego)) continue;
    if (!best || o.s > best->s) best = &o;
  }
  return best;
}

double bumper(const VehicleState& behind_v, double s_behind, const VehicleState& ahead_v, double s_ahead) {
  return s_ahead - s_behind - 0.5 * (behind_v.length + ahead_v.length);
}

}  // namespace

bool nilsson_gap_accepted(const WorldState& world, const VehicleState& ego, int lane, const NilssonParams& p) {
  if (front_gap(world, ego, lane, kUnbounded) < p.g_min) return false;
  if (rear_gap(world, ego, lane, kUnbounded) < p.g_min) return false;
  if (const auto* lead = leader_in(world, ego, lane); lead && ego.v_s > lead->v_s) {
    if (bumper(ego, ego.s, *lead, lead->s) / (ego.v_s - lead->v_s) < p.ttc_min) return false;
  }
  if (const auto* foll = follower_in(world, ego, lane); foll && foll->v_s > ego.v_s) {
    if (bumper(*foll, foll->s, ego, ego.s) / (foll->v_s - ego.v_s) < p.ttc_min) return false;
  }
  return true;
}

StrategicDecision nilsson_decide(const WorldState& world, const RoadGeometry& road, int ego_id,
                                 const NilssonParams& p) {
  const VehicleState& ego = world.vehicle(ego_id);
  const int count = road.lane_count_at(ego.s);

  auto utility = [&](int lane) {
    const double drivable = front_gap(world, ego, lane, p.lookahead);
    double sum = 0.0;
    int n = 0;
    for (const auto& o : world.vehicles) {
      if (o.id == ego.id || o.lane != lane || o.s <= ego.s || o.s > ego.s + p.lookahead) continue;
      sum += o.v_s;
      ++n;
    }
    const double mean_speed = n ? sum / n : ego.v_max;
    return p.w1 * drivable + p.w2 * mean_speed - p.w3 * std::abs(lane - ego.lane);
  };

  StrategicDecision out;
  const double gap = front_gap(world, ego, ego.lane, kUnbounded);
  out.v_target = std::clamp((gap - p.standstill) / p.time_gap, 0.0, ego.v_max);

  const bool on_ramp = road.is_ramp_lane(ego.lane);
  const double u_current = on_ramp ? -kUnbounded : utility(ego.lane);
  double best_u = u_current;
  LaneChange best = LaneChange::Keep;
  for (LaneChange dir : {LaneChange::Left, LaneChange::Right}) {
    const auto target = lane_change_target(dir, ego.lane, count);
    if (!target || road.is_ramp_lane(*target)) continue;
    const double u = utility(*target);
    if (u > best_u) {
      best_u = u;
      best = dir;
    }
  }
  if (best != LaneChange::Keep && best_u > u_current + p.hysteresis) {
    const int target = *lane_change_target(best, ego.lane, count);
    if (nilsson_gap_accepted(world, ego, target, p)) out.lane_change = best;
  }
  return out;
}

namespace {

// Speed profile approaching v_cmd at bounded rates, integrated at dt.
struct Profile {
  std::vector<double> s;
  std::vector<double> v;
};

Profile predict(double s0, double v0, double v_cmd, double accel, double decel, double horizon) {
  Profile p;
  const int n = static_cast<int>(std::lround(horizon / kTimeStep));
  double s = s0, v = v0;
  p.s.push_back(s);
  p.v.push_back(v);
  for (int k = 0; k < n; ++k) {
    const double dv = std::clamp(v_cmd - v, -decel * kTimeStep, accel * kTimeStep);
    v = std::max(0.0, v + dv);
    s += v * kTimeStep;
    p.s.push_back(s);
    p.v.push_back(v);
  }
  return p;
}

double shortfall(double gap, double v_behind, const StackelbergParams& p) {
  const double desired = p.standstill + p.time_gap * v_behind;
  const double x = std::max(0.0, (desired - gap) / desired);
  return x * x;
}

}  // namespace

std::vector<StackelbergChoice> stackelberg_options(const WorldState& world, const RoadGeometry& road, int sv_id,
                                                   const StackelbergParams& p) {
  const VehicleState& sv = world.vehicle(sv_id);
  const int count = road.lane_count_at(sv.s);
  const double v_max = sv.v_max;
  const std::size_t half = static_cast<std::size_t>(std::lround(0.5 * DynamicsConfig{}.lane_change_duration / kTimeStep));

  auto constant = [&](const VehicleState& o) { return predict(o.s, o.v_s, o.v_s, 0.0, 0.0, p.horizon); };

  std::vector<StackelbergChoice> out;
  for (LaneChange lane_action : {LaneChange::Keep, LaneChange::Left, LaneChange::Right}) {
    int lane = sv.lane;
    if (lane_action != LaneChange::Keep) {
      const auto target = lane_change_target(lane_action, sv.lane, count);
      if (!target || road.is_ramp_lane(*target)) continue;
      if (front_gap(world, sv, *target, kUnbounded) < p.g_min) continue;
      if (rear_gap(world, sv, *target, kUnbounded) < p.g_min) continue;
      lane = *target;
    }
    const VehicleState* lead = leader_in(world, sv, lane);
    const VehicleState* old_lead = lane_action == LaneChange::Keep ? nullptr : leader_in(world, sv, sv.lane);
    const VehicleState* foll = follower_in(world, sv, lane);

    for (SpeedAction speed : {SpeedAction::Hold, SpeedAction::Accel, SpeedAction::Decel}) {
      const double v_cmd = speed == SpeedAction::Accel ? v_max
                           : speed == SpeedAction::Hold ? sv.v_s
                                                        : std::max(0.0, sv.v_s - p.decel_step);
      const Profile me = predict(sv.s, sv.v_s, v_cmd, p.assumed_accel, p.assumed_decel, p.horizon);
      bool overlap = false;
      double lead_cost = 0.0;
      auto check_leader = [&](const VehicleState& o, std::size_t until) {
        const Profile them = constant(o);
        for (std::size_t k = 1; k < me.s.size() && k <= until; ++k) {
          const double gap = bumper(sv, me.s[k], o, them.s[k]);
          if (gap <= 0.0) overlap = true;
          lead_cost = std::max(lead_cost, shortfall(gap, me.v[k], p));
        }
      };
      if (lead) check_leader(*lead, me.s.size());
      if (old_lead) check_leader(*old_lead, half);

      // Follower best response: hold unless braking scores better for it.
      double rear_cost = 0.0;
      if (foll) {
        double best_score = -kUnbounded;
        bool best_overlap = false;
        double best_cost = 0.0;
        for (bool brake : {false, true}) {
          const double fv_cmd = brake ? std::max(0.0, foll->v_s - p.decel_step) : foll->v_s;
          const Profile them = predict(foll->s, foll->v_s, fv_cmd, p.assumed_accel, p.assumed_decel, p.horizon);
          bool hit = false;
          double cost = 0.0;
          for (std::size_t k = 1; k < me.s.size(); ++k) {
            const double gap = bumper(*foll, them.s[k], sv, me.s[k]);
            if (gap <= 0.0) hit = true;
            cost = std::max(cost, shortfall(gap, them.v[k], p));
          }
          const double score = (hit ? -kUnbounded : 0.0) + p.w_progress * them.v.back() / v_max - p.w_gap * cost;
          if (score > best_score) {
            best_score = score;
            best_overlap = hit;
            best_cost = cost;
          }
        }
        overlap = overlap || best_overlap;
        rear_cost = best_cost;
      }
      if (overlap) continue;
      StackelbergChoice c;
      c.lane = lane_action;
      c.speed = speed;
      c.payoff = p.w_progress * me.v.back() / v_max - p.w_gap * (lead_cost + rear_cost) -
                 (lane_action == LaneChange::Keep ? 0.0 : p.lane_change_cost);
      out.push_back(c);
    }
  }
  return out;
}

StrategicDecision stackelberg_decide(const WorldState& world, const RoadGeometry& road, int sv_id,
                                     const StackelbergParams& p) {
  const VehicleState& sv = world.vehicle(sv_id);
  const auto options = stackelberg_options(world, road, sv_id, p);
  if (options.empty()) return {0.0, LaneChange::Keep};
  const StackelbergChoice* best = &options.front();
  for (const auto& c : options) {
    if (c.payoff > best->payoff) best = &c;
  }
  StrategicDecision d;
  d.lane_change = best->lane;
  switch (best->speed) {
    case SpeedAction::Hold: d.v_target = sv.v_s; break;
    case SpeedAction::Accel: d.v_target = sv.v_max; break;
    case SpeedAction::Decel: d.v_target = std::max(0.0, sv.v_s - p.decel_step); break;
  }
  d.v_target = std::min(d.v_target, sv.v_max);
  return d;
}

StrategicDecision constant_speed_decide(const WorldState& world, int ego_id, double cruise, double time_gap,
                                        double standstill) {
  const VehicleState& ego = world.vehicle(ego_id);
  const double gap = front_gap(world, ego, ego.lane, kUnbounded);
  return {std::clamp((gap - standstill) / time_gap, 0.0, cruise), LaneChange::Keep};
}

Mlp make_actor(Rng& rng, int hidden) {
  return Mlp::random({kObservationSize, hidden, hidden, kActionSize}, Activation::Relu, Activation::Tanh, rng);
}

Mlp load_policy(const std::filesystem::path& path) {
  const auto file = std::filesystem::is_directory(path) ? path / "actor.txt" : path;
  Mlp net = load_mlp(file);
  if (net.input_size() != kObservationSize || net.output_size() != kActionSize ||
      net.output_activation() != Activation::Tanh) {
    throw ConfigError(file.string() + ": not a policy network (expected 625 inputs, 2 tanh outputs)");
  }
  return net;
}

Eigen::VectorXd flatten(const ObservationGrid& grid) {
  Eigen::VectorXd x(kObservationSize);
  for (int i = 0; i < kObservationSize; ++i) x(i) = grid.values[static_cast<std::size_t>(i)];
  return x;
}

std::vector<ActionPair> policy_actions(const Mlp& actor, const std::vector<ObservationGrid>& grids) {
  std::vector<ActionPair> out;
  if (grids.empty()) return out;
  Eigen::MatrixXd x(kObservationSize, static_cast<Eigen::Index>(grids.size()));
  for (std::size_t j = 0; j < grids.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = flatten(grids[j]);
  const Eigen::MatrixXd y = actor.forward(x);
  for (Eigen::Index j = 0; j < y.cols(); ++j) out.push_back(ActionPair::clamped(y(0, j), y(1, j)));
  return out;
}

OperationalDecision to_decision(const ActionPair& action) {
  return {action.a_long, discretize_lateral(action.a_lat)};
}

OperationalDecision dualdm_decide(const ObservationGrid& grid, const Mlp& actor) {
  return to_decision(policy_actions(actor, {grid}).front());
}

std::vector<ModelBinding> population_schedule(const PopulationConfig& cfg, int bv_count, std::uint64_t seed) {
  if (bv_count < 0) throw ConfigError("population: negative BV count");
  double total = 0.0;
  for (const auto& [kind, share] : cfg.proportions) {
    if (kind == ModelKind::Stackelberg) throw ConfigError("population: the SUT model cannot drive BVs");
    if (!(share >= 0.0)) throw ConfigError("population: proportions must be non-negative");
    total += share;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("population: proportions must sum to 1");

  struct Quota {
    ModelKind kind;
    int count;
    double remainder;
  };
  std::vector<Quota> quotas;
  int assigned = 0;
  for (const auto& [kind, share] : cfg.proportions) {
    const double exact = share * bv_count;
    const int base = static_cast<int>(std::floor(exact));
    quotas.push_back({kind, base, exact - base});
    assigned += base;
  }
  std::vector<std::size_t> order(quotas.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder; });
  for (std::size_t i = 0; assigned < bv_count && !order.empty(); i = (i + 1) % order.size()) {
    ++quotas[order[i]].count;
    ++assigned;
  }

  std::vector<ModelKind> kinds;
  for (const auto& q : quotas) kinds.insert(kinds.end(), static_cast<std::size_t>(q.count), q.kind);
  Rng rng(seed);
  for (std::size_t i = kinds.size(); i > 1; --i) std::swap(kinds[i - 1], kinds[rng.below(i)]);

  std::vector<ModelBinding> out{{0, ModelKind::Stackelberg}};
  for (int i = 0; i < bv_count; ++i) out.push_back({i + 1, kinds[static_cast<std::size_t>(i)]});
  return out;
}

}  // namespace evoscen
