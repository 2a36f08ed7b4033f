#pragma once

#include <array>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "crushsim/locale_grid.hpp"

namespace crush {

// Fruin walkway level-of-service bands as minimum space per person (m^2)
// for levels A..E. Anything below the last entry is level F.
struct FruinBands {
  std::array<double, 5> min_space{3.25, 2.32, 1.39, 0.93, 0.46};
};

struct FruinResult {
  char level = 'A';
  double space_per_person = std::numeric_limits<double>::infinity();
};

// Level for a density in persons/m^2; space per person is its inverse.
FruinResult fruin_level(double density, const FruinBands& bands = {});
// Level for a given space per person; F strictly below the last band.
FruinResult fruin_level_for_space(double space_per_person, const FruinBands& bands = {});

struct DensityHistory {
  std::map<CellKey, std::vector<double>> series;  // persons / m^2 per tick
  std::size_t ticks = 0;
  double duration = 0.0;  // s
  bool complete = false;

  // Appends one tick; cells absent from `densities` record 0.
  void record(const std::map<CellKey, double>& densities);
};

struct ImoResult {
  bool pass = true;
  double violating_fraction = 0.0;  // worst locale
  std::optional<CellKey> worst_locale;
};

// Fails when any locale spends >= 10% of the ticks at >= 4 persons/m^2.
// Throws IncompleteRun for an incomplete history.
ImoResult imo_check(const DensityHistory& history, double density_limit = 4.0,
                    double time_fraction = 0.10);

struct ExitEvent {
  std::uint64_t tick = 0;
  double time = 0.0;
  std::size_t agent_id = 0;
  std::size_t exit_index = 0;
};

enum class SafetyVerdict { Safe, Unsafe, NotEvaluated };
std::string to_string(SafetyVerdict verdict);

struct EgressTimes {
  std::optional<double> rset;  // nullopt while incomplete
  std::optional<double> aset;
  std::vector<std::optional<double>> exit_times;  // per agent
  SafetyVerdict verdict = SafetyVerdict::NotEvaluated;
};

EgressTimes egress_times(std::span<const ExitEvent> exit_log, std::size_t population,
                         std::optional<double> aset);

// Metrics document: rset, aset, verdict, worst Fruin level over time, IMO.
nlohmann::json metrics_report(const EgressTimes& egress, const DensityHistory& history,
                              const std::vector<char>& worst_level_timeline);

}  // namespace crush
