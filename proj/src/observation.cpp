#include "evoscen/observation.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <sstream>

#include "evoscen/errors.hpp"

namespace evoscen {

namespace {

using Grid = ObservationGrid;

/// Rows covered by `other`'s body, clipped to the window; nullopt when its
/// lane is outside the five columns or its center row is out of range. An
/// SV inside the adversarial area (`pin`) is always visible: when its body
/// lies outside the window it is pinned to the nearest edge row.
std::optional<std::pair<int, int>> row_span(const VehicleState& ego, const VehicleState& other, bool pin) {
  const int col = Grid::kEgoCol + (other.lane - ego.lane);
  if (col < 0 || col >= Grid::kCols) return std::nullopt;
  const double ds = other.s - ego.s;
  auto row_of = [](double x) { return Grid::kEgoRow + static_cast<int>(std::floor(x / Grid::kCellLength)); };
  const int center = row_of(ds);
  if (center < 0 || center >= Grid::kRows) {
    if (!pin) return std::nullopt;
    const int edge = std::clamp(center, 0, Grid::kRows - 1);
    return std::pair{edge, edge};
  }
  return std::pair{std::max(row_of(ds - other.length / 2.0), 0),
                   std::min(row_of(ds + other.length / 2.0), Grid::kRows - 1)};
}

}  // namespace

ObservationGrid encode(const WorldState& world, int ego_id, const ObservationConfig& cfg) {
  const VehicleState* ego = world.find(ego_id);
  if (ego == nullptr) throw ContractError("encode: unknown ego id " + std::to_string(ego_id));

  const VehicleState* sv = nullptr;
  for (const auto& v : world.vehicles) {
    if (v.role == Role::SV) sv = &v;
  }
  const bool adversarial = cfg.mark_adversarial && sv != nullptr && sv->id != ego->id &&
                           ego->role == Role::BV && adversarial_area_contains(*ego, *sv);

  Grid grid;
  // Longitudinal distance and id of the vehicle currently owning each cell.
  std::array<double, Grid::kRows * Grid::kCols> owner_dist;
  std::array<int, Grid::kRows * Grid::kCols> owner_id;
  owner_dist.fill(kInfinity);
  owner_id.fill(-1);

  for (const auto& other : world.vehicles) {
    if (other.id == ego->id) continue;
    const auto span = row_span(*ego, other, adversarial && other.id == sv->id);
    if (!span) continue;
    const int col = Grid::kEgoCol + (other.lane - ego->lane);
    const double dist = std::abs(other.s - ego->s);
    for (int row = span->first; row <= span->second; ++row) {
      const std::size_t cell = static_cast<std::size_t>(row * Grid::kCols + col);
      const bool wins = dist < owner_dist[cell] || (dist == owner_dist[cell] && other.id < owner_id[cell]);
      if (!wins) continue;
      owner_dist[cell] = dist;
      owner_id[cell] = other.id;
      grid.at(Layer::Occupancy, row, col) = 1.0f;
      grid.at(Layer::RelSpeedLong, row, col) = static_cast<float>((other.v_s - ego->v_s) / cfg.v_max_norm);
      grid.at(Layer::RelSpeedLat, row, col) = static_cast<float>((other.v_t - ego->v_t) / cfg.v_lat_norm);
      grid.at(Layer::RelHeading, row, col) = static_cast<float>(other.heading_err - ego->heading_err);
    }
  }
  if (adversarial) {
    // M covers every SV cell even where a nearer BV supplies the other layers.
    const auto span = row_span(*ego, *sv, true);
    const int col = Grid::kEgoCol + (sv->lane - ego->lane);
    for (int row = span->first; row <= span->second; ++row) grid.at(Layer::Adversarial, row, col) = 1.0f;
  }
  return grid;
}

Modality modality_of(const ObservationGrid& grid) {
  for (int row = 0; row < ObservationGrid::kRows; ++row) {
    for (int col = 0; col < ObservationGrid::kCols; ++col) {
      if (grid.at(Layer::Adversarial, row, col) == 1.0f) return Modality::Adversarial;
    }
  }
  return Modality::NonAdversarial;
}

std::string to_text(const ObservationGrid& grid) {
  static constexpr const char* kNames[] = {"P", "dVs", "dVt", "dH", "M"};
  std::ostringstream out;
  for (int layer = 0; layer < ObservationGrid::kLayers; ++layer) {
    out << "# " << kNames[layer] << '\n';
    for (int row = 0; row < ObservationGrid::kRows; ++row) {
      for (int col = 0; col < ObservationGrid::kCols; ++col) {
        if (col) out << ' ';
        out << grid.at(static_cast<Layer>(layer), row, col);
      }
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace evoscen
