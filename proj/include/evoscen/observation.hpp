#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "evoscen/world.hpp"

namespace evoscen {

enum class Layer : int { Occupancy = 0, RelSpeedLong = 1, RelSpeedLat = 2, RelHeading = 3, Adversarial = 4 };

/// Ego-centric 25x5x5 grid. Rows run from 20 m behind (row 0) to 100 m
/// ahead (row 24) in 5 m cells, the ego sits in row 4; columns are lanes
/// from two left (column 0) to two right (column 4) of the ego lane.
/// Storage and flattening order is layer-major: [layer][row][column].
struct ObservationGrid {
  static constexpr int kRows = 25;
  static constexpr int kCols = 5;
  static constexpr int kLayers = 5;
  static constexpr int kEgoRow = 4;
  static constexpr int kEgoCol = 2;
  static constexpr std::size_t kSize = kRows * kCols * kLayers;
  static constexpr double kCellLength = 5.0;

  std::array<float, kSize> values{};

  static constexpr std::size_t index(Layer layer, int row, int col) {
    return (static_cast<std::size_t>(layer) * kRows + static_cast<std::size_t>(row)) * kCols +
           static_cast<std::size_t>(col);
  }
  float at(Layer layer, int row, int col) const { return values[index(layer, row, col)]; }
  float& at(Layer layer, int row, int col) { return values[index(layer, row, col)]; }

  friend bool operator==(const ObservationGrid&, const ObservationGrid&) = default;
};

struct ObservationConfig {
  double v_max_norm = 120.0 / 3.6;  // m/s
  double v_lat_norm = 3.5;          // m/s
  /// When false the M layer stays zero (no system under test present).
  bool mark_adversarial = true;
};

/// Encodes the grid seen by vehicle `ego_id`. Throws ContractError for an
/// unknown ego. Where several vehicles share a cell, the one longitudinally
/// nearest the ego (then lowest id) supplies the relative-state layers.
ObservationGrid encode(const WorldState& world, int ego_id, const ObservationConfig& cfg = {});

enum class Modality { NonAdversarial, Adversarial };

Modality modality_of(const ObservationGrid& grid);

/// Plain-text dump: one block per layer, 25 lines of 5 values each.
std::string to_text(const ObservationGrid& grid);

}  // namespace evoscen
