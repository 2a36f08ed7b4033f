#include "crushsim/safety_metrics.hpp"

#include <algorithm>

#include "crushsim/error.hpp"

namespace crush {

using nlohmann::json;

FruinResult fruin_level(double density, const FruinBands& bands) {
  if (density <= 0.0) return {};
  return fruin_level_for_space(1.0 / density, bands);
}

FruinResult fruin_level_for_space(double space_per_person, const FruinBands& bands) {
  FruinResult r;
  r.space_per_person = space_per_person;
  r.level = 'F';
  for (std::size_t k = 0; k < bands.min_space.size(); ++k)
    if (r.space_per_person >= bands.min_space[k]) {
      r.level = static_cast<char>('A' + k);
      break;
    }
  return r;
}

void DensityHistory::record(const std::map<CellKey, double>& densities) {
  for (const auto& [key, rho] : densities) {
    auto& s = series[key];
    s.resize(ticks, 0.0);
  }
  for (auto& [key, s] : series) {
    auto it = densities.find(key);
    s.push_back(it == densities.end() ? 0.0 : it->second);
  }
  ++ticks;
}

ImoResult imo_check(const DensityHistory& history, double density_limit, double time_fraction) {
  if (!history.complete) throw IncompleteRun("imo_check: evacuation did not complete");
  ImoResult r;
  if (history.ticks == 0) return r;
  for (const auto& [key, s] : history.series) {
    const auto over = std::count_if(s.begin(), s.end(), [&](double d) { return d >= density_limit; });
    const double fraction = static_cast<double>(over) / static_cast<double>(history.ticks);
    if (!r.worst_locale || fraction > r.violating_fraction) {
      r.violating_fraction = fraction;
      r.worst_locale = key;
    }
  }
  // Counts are compared exactly so a fraction of exactly 10% fails.
  const double limit_ticks = time_fraction * static_cast<double>(history.ticks);
  r.pass = !(r.violating_fraction * static_cast<double>(history.ticks) >= limit_ticks - 1e-9);
  return r;
}

std::string to_string(SafetyVerdict verdict) {
  switch (verdict) {
    case SafetyVerdict::Safe: return "safe";
    case SafetyVerdict::Unsafe: return "unsafe";
    case SafetyVerdict::NotEvaluated: return "not-evaluated";
  }
  return "?";
}

EgressTimes egress_times(std::span<const ExitEvent> exit_log, std::size_t population,
                         std::optional<double> aset) {
  EgressTimes e;
  e.aset = aset;
  e.exit_times.assign(population, std::nullopt);
  double last = 0.0;
  for (const auto& ev : exit_log) {
    if (ev.agent_id < population) e.exit_times[ev.agent_id] = ev.time;
    last = std::max(last, ev.time);
  }
  const bool complete =
      population > 0 && std::all_of(e.exit_times.begin(), e.exit_times.end(),
                                    [](const auto& t) { return t.has_value(); });
  if (complete) e.rset = last;
  if (e.rset && e.aset) e.verdict = *e.aset > *e.rset ? SafetyVerdict::Safe : SafetyVerdict::Unsafe;
  return e;
}

json metrics_report(const EgressTimes& egress, const DensityHistory& history,
                    const std::vector<char>& worst_level_timeline) {
  json doc;
  doc["schema"] = 1;
  doc["rset"] = egress.rset ? json(*egress.rset) : json("incomplete");
  doc["aset"] = egress.aset ? json(*egress.aset) : json(nullptr);
  doc["verdict"] = to_string(egress.verdict);
  const std::size_t evacuated = static_cast<std::size_t>(std::count_if(
      egress.exit_times.begin(), egress.exit_times.end(), [](const auto& t) { return t.has_value(); }));
  doc["evacuated"] = evacuated;
  doc["population"] = egress.exit_times.size();

  char worst = 'A';
  json timeline = json::array();
  char prev = 0;
  for (std::size_t t = 0; t < worst_level_timeline.size(); ++t) {
    const char level = worst_level_timeline[t];
    worst = std::max(worst, level);
    if (level != prev) timeline.push_back({{"tick", t + 1}, {"level", std::string(1, level)}});
    prev = level;
  }
  doc["fruin"] = {{"worst_level", std::string(1, worst)}, {"timeline", timeline}};

  if (history.complete) {
    const ImoResult imo = imo_check(history);
    json w = imo.worst_locale ? json::array({imo.worst_locale->i, imo.worst_locale->j}) : json(nullptr);
    doc["imo"] = {{"evaluated", true},
                  {"pass", imo.pass},
                  {"violating_fraction", imo.violating_fraction},
                  {"worst_locale", w}};
  } else {
    doc["imo"] = {{"evaluated", false}, {"reason", "evacuation incomplete"}};
  }
  return doc;
}

}  // namespace crush
