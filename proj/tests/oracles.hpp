#pragma once

// Independent reference implementations used by the unit and acceptance tests.

#include <cmath>
#include <vector>

#include "evoscen/nn.hpp"
#include "evoscen/observation.hpp"
#include "evoscen/rng.hpp"
#include "evoscen/world.hpp"

namespace oracle {

using namespace evoscen;

/// Per-cell scan: for every cell, collect the vehicles whose body interval
/// meets the cell's 5 m band in the cell's lane column, keep the nearest.
inline ObservationGrid encode_by_scan(const WorldState& world, int ego_id, const ObservationConfig& cfg = {}) {
  const VehicleState& ego = world.vehicle(ego_id);
  const VehicleState* sv = nullptr;
  for (const auto& v : world.vehicles) {
    if (v.role == Role::SV) sv = &v;
  }
  const bool adv = cfg.mark_adversarial && sv && sv->id != ego.id && ego.role == Role::BV &&
                   std::abs(ego.s - sv->s) <= 22.5 && std::abs(ego.lane - sv->lane) <= 2;
  ObservationGrid g;
  for (int r = 0; r < 25; ++r) {
    const double lo = (r - 4) * 5.0, hi = (r - 3) * 5.0;
    for (int c = 0; c < 5; ++c) {
      const VehicleState* best = nullptr;
      bool sv_here = false;
      for (const auto& o : world.vehicles) {
        if (o.id == ego.id || o.lane - ego.lane != c - 2) continue;
        const double ds = o.s - ego.s;
        const double center_row = 4 + std::floor(ds / 5.0);
        bool covers;
        if (center_row >= 0 && center_row <= 24) {
          covers = ds - o.length / 2 < hi && ds + o.length / 2 >= lo;
        } else if (adv && &o == sv) {
          covers = r == (center_row < 0 ? 0 : 24);
        } else {
          covers = false;
        }
        if (!covers) continue;
        if (&o == sv) sv_here = true;
        if (!best || std::abs(ds) < std::abs(best->s - ego.s) ||
            (std::abs(ds) == std::abs(best->s - ego.s) && o.id < best->id)) {
          best = &o;
        }
      }
      if (best) {
        g.at(Layer::Occupancy, r, c) = 1.0f;
        g.at(Layer::RelSpeedLong, r, c) = static_cast<float>((best->v_s - ego.v_s) / cfg.v_max_norm);
        g.at(Layer::RelSpeedLat, r, c) = static_cast<float>((best->v_t - ego.v_t) / cfg.v_lat_norm);
        g.at(Layer::RelHeading, r, c) = static_cast<float>(best->heading_err - ego.heading_err);
      }
      if (adv && sv_here) g.at(Layer::Adversarial, r, c) = 1.0f;
    }
  }
  return g;
}

/// Random world of up to 16 vehicles around a BV ego (id 1); vehicle 0 is the SV.
inline WorldState random_world(Rng& rng) {
  WorldState w;
  const int n = 2 + static_cast<int>(rng.below(15));
  for (int id = 0; id < n; ++id) {
    VehicleState v;
    v.id = id;
    v.role = id == 0 ? Role::SV : Role::BV;
    v.lane = 1 + static_cast<int>(rng.below(5));
    v.s = 500.0 + rng.uniform(-140.0, 140.0);
    if (id == 1) v.s = 500.0;
    v.v_s = rng.uniform(10.0, 35.0);
    v.v_t = rng.uniform(-1.0, 1.0);
    v.heading_err = rng.uniform(-0.05, 0.05);
    w.vehicles.push_back(v);
  }
  if (rng.below(2)) w.vehicles[0].s = 500.0 + rng.uniform(-30.0, 30.0);
  return w;
}

/// Jensen-Shannon divergence straight from the definition, base 2.
inline double js(const std::vector<double>& p, const std::vector<double>& q) {
  double kl_pm = 0.0, kl_qm = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = (p[i] + q[i]) / 2.0;
    if (p[i] > 0) kl_pm += p[i] * std::log(p[i] / m) / std::log(2.0);
    if (q[i] > 0) kl_qm += q[i] * std::log(q[i] / m) / std::log(2.0);
  }
  return 0.5 * kl_pm + 0.5 * kl_qm;
}

/// Largest relative error between analytic and central-difference gradients
/// of `loss` with respect to every parameter of `net`.
template <class Loss>
double gradient_error(Mlp& net, const Gradients& analytic, Loss&& loss, double h = 1e-6) {
  double worst = 0.0;
  auto check = [&](double& param, double g) {
    const double keep = param;
    param = keep + h;
    const double up = loss();
    param = keep - h;
    const double down = loss();
    param = keep;
    const double fd = (up - down) / (2 * h);
    const double err = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-6});
    worst = std::max(worst, err);
  };
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    auto& layer = net.layers()[l];
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) check(layer.weight.data()[i], analytic[l].weight.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) check(layer.bias.data()[i], analytic[l].bias.data()[i]);
  }
  return worst;
}

}  // namespace oracle
