#include "doctest.h"

#include "evoscen/errors.hpp"
#include "evoscen/observation.hpp"
#include "oracles.hpp"

using namespace evoscen;

namespace {

VehicleState car(int id, int lane, double s, Role role = Role::BV) {
  VehicleState c;
  c.id = id;
  c.role = role;
  c.lane = lane;
  c.s = s;
  c.v_s = 20.0;
  return c;
}

int count(const ObservationGrid& g, Layer layer) {
  int n = 0;
  for (int r = 0; r < 25; ++r) {
    for (int c = 0; c < 5; ++c) n += g.at(layer, r, c) != 0.0f;
  }
  return n;
}

}  // namespace

TEST_CASE("empty road encodes to an all-zero grid") {
  WorldState w;
  w.vehicles = {car(1, 2, 100.0)};
  CHECK(encode(w, 1) == ObservationGrid{});
  CHECK_THROWS_AS(encode(w, 7), ContractError);
}

TEST_CASE("BV 10 m ahead occupies rows 5 and 6 of the ego column") {
  WorldState w;
  w.vehicles = {car(0, 4, 900.0, Role::SV), car(1, 2, 100.0), car(2, 2, 110.0)};
  w.vehicles[2].v_s = 25.0;
  const ObservationGrid g = encode(w, 1);
  CHECK(g.at(Layer::Occupancy, 5, 2) == 1.0f);
  CHECK(g.at(Layer::Occupancy, 6, 2) == 1.0f);
  CHECK(count(g, Layer::Occupancy) == 2);
  CHECK(g.at(Layer::RelSpeedLong, 5, 2) == static_cast<float>(5.0 / (120.0 / 3.6)));
}

TEST_CASE("M marks the SV only inside the adversarial area") {
  WorldState w;
  w.vehicles = {car(0, 2, 110.0, Role::SV), car(1, 3, 100.0)};
  ObservationGrid g = encode(w, 1);
  CHECK(g.at(Layer::Adversarial, 5, 1) == 1.0f);
  CHECK(g.at(Layer::Adversarial, 6, 1) == 1.0f);
  CHECK(count(g, Layer::Adversarial) == 2);
  CHECK(modality_of(g) == Modality::Adversarial);
  w.vehicles[0].s = 160.0;
  g = encode(w, 1);
  CHECK(count(g, Layer::Adversarial) == 0);
  CHECK(modality_of(g) == Modality::NonAdversarial);
  CHECK(count(g, Layer::Occupancy) > 0);
}

TEST_CASE("modality depends on M alone") {
  ObservationGrid g;
  CHECK(modality_of(g) == Modality::NonAdversarial);
  g.at(Layer::Occupancy, 3, 3) = 1.0f;
  CHECK(modality_of(g) == Modality::NonAdversarial);
  g.at(Layer::Adversarial, 10, 1) = 1.0f;
  CHECK(modality_of(g) == Modality::Adversarial);
}

TEST_CASE("encode matches the per-cell scan oracle and the area predicate") {
  Rng rng(2024);
  for (int k = 0; k < 2000; ++k) {
    const WorldState w = oracle::random_world(rng);
    const ObservationGrid g = encode(w, 1);
    REQUIRE(g == oracle::encode_by_scan(w, 1));
    CHECK((modality_of(g) == Modality::Adversarial) == adversarial_area_contains(w.vehicle(1), w.sv()));
    int nonzero = 0;
    for (int r = 0; r < 25; ++r) {
      for (int c = 0; c < 5; ++c) {
        const bool any = g.at(Layer::RelSpeedLong, r, c) != 0 || g.at(Layer::RelSpeedLat, r, c) != 0 ||
                         g.at(Layer::RelHeading, r, c) != 0;
        nonzero += any;
        if (g.at(Layer::Occupancy, r, c) == 0.0f) CHECK_FALSE(any);
      }
    }
    CHECK(nonzero <= count(g, Layer::Occupancy));
  }
}

TEST_CASE("translation invariance") {
  Rng rng(11);
  for (int k = 0; k < 200; ++k) {
    WorldState w = oracle::random_world(rng);
    const ObservationGrid g = encode(w, 1);
    for (auto& v : w.vehicles) v.s += 256.0;
    CHECK(encode(w, 1) == g);
  }
}

TEST_CASE("M layer can be switched off") {
  WorldState w;
  w.vehicles = {car(0, 2, 110.0, Role::SV), car(1, 3, 100.0)};
  ObservationConfig cfg;
  cfg.mark_adversarial = false;
  CHECK(modality_of(encode(w, 1, cfg)) == Modality::NonAdversarial);
}

TEST_CASE("text dump has one block per layer") {
  const std::string text = to_text(ObservationGrid{});
  CHECK(std::count(text.begin(), text.end(), '\n') == 5 * 26);
}
