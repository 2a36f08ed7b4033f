#include "crushsim/locale_grid.hpp"

#include <algorithm>

namespace crush {

std::vector<std::size_t> LocaleGrid::neighborhood(CellKey key) const {
  std::vector<std::size_t> out;
  for (int di = -1; di <= 1; ++di)
    for (int dj = -1; dj <= 1; ++dj)
      if (const auto* m = members({key.i + di, key.j + dj})) out.insert(out.end(), m->begin(), m->end());
  std::sort(out.begin(), out.end());
  return out;
}

LocaleGrid partition_locales(std::span<const AgentState> agents, double cell_size,
                             std::uint64_t generation) {
  LocaleGrid grid;
  grid.cell_size = cell_size;
  grid.generation = generation;
  for (const auto& a : agents)
    if (a.active()) grid.cells[cell_of(a.position, cell_size)].push_back(a.id);
  for (auto& [key, ids] : grid.cells) std::sort(ids.begin(), ids.end());
  return grid;
}

}  // namespace crush
