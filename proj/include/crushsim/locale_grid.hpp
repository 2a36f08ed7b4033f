#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "crushsim/agent.hpp"

namespace crush {

struct CellKey {
  int i = 0;
  int j = 0;
  auto operator<=>(const CellKey&) const = default;
};

inline CellKey cell_of(Vec2 p, double cell_size) {
  return {static_cast<int>(std::floor(p.x / cell_size)),
          static_cast<int>(std::floor(p.y / cell_size))};
}

// Dynamic partition of active agents into square cells ("locales"). Cells
// are ordered by key so every reduction over locales has a fixed order.
struct LocaleGrid {
  double cell_size = 1.0;
  std::map<CellKey, std::vector<std::size_t>> cells;  // ids ascending
  std::uint64_t generation = 0;

  const std::vector<std::size_t>* members(CellKey key) const {
    auto it = cells.find(key);
    return it == cells.end() ? nullptr : &it->second;
  }

  // Ids in the 3x3 block of cells centred on `key`, ascending.
  std::vector<std::size_t> neighborhood(CellKey key) const;

  double cell_area() const { return cell_size * cell_size; }
};

// Assigns every active agent to cell floor(position / cell_size); empty
// cells are omitted.
LocaleGrid partition_locales(std::span<const AgentState> agents, double cell_size,
                             std::uint64_t generation = 0);

}  // namespace crush
