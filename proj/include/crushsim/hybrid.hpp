#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crushsim/classifier.hpp"
#include "crushsim/config.hpp"
#include "crushsim/identify.hpp"
#include "crushsim/locale_grid.hpp"

namespace crush {

enum class Level : int { Identify = 1, Qualify = 2, Quantify = 3 };

struct QuantifySummary {
  double peak_force = 0.0;  // max per-agent normal total among members
};

struct LocaleAnalysis {
  CellKey locale;
  Level level = Level::Identify;
  std::uint64_t dwell = 0;
  std::optional<TransitionVerdict> last_verdict;
  std::optional<QualifyOutcome> last_qualify;
  // Consecutive ticks the de-escalation condition has held.
  std::uint64_t calm_ticks = 0;
};

struct LevelTransition {
  Level from = Level::Identify;
  Level to = Level::Identify;
  std::string trigger;
};

struct AdvanceResult {
  LocaleAnalysis analysis;
  std::optional<LevelTransition> transition;
};

// One controller step for a locale.
//   L1 -> L2 on a Disordered verdict
//   L2 -> L3 on a Confirmed qualify outcome
//   L2 -> L1 after `cooldown` consecutive Ordered verdicts
//   L3 -> L2 after `cooldown` consecutive ticks with peak < exit_force
// Throws ProtocolError when a qualify outcome arrives below L2 or a quantify
// summary below L3.
AdvanceResult advance(const LocaleAnalysis& analysis,
                      const std::optional<TransitionVerdict>& verdict,
                      const std::optional<QualifyOutcome>& qualify,
                      const std::optional<QuantifySummary>& quantify,
                      const EscalationPolicy& policy);

// Level every locale is pinned to in a mode, or nullopt when the state
// machine is live.
std::optional<Level> pinned_level(PipelineMode mode);
bool runs_detector(PipelineMode mode);

struct CostEstimate {
  std::uint64_t mi_evaluations = 0;
  std::uint64_t classifier_forward_passes = 0;
  std::uint64_t force_pair_evaluations = 0;

  CostEstimate& operator+=(const CostEstimate& o) {
    mi_evaluations += o.mi_evaluations;
    classifier_forward_passes += o.classifier_forward_passes;
    force_pair_evaluations += o.force_pair_evaluations;
    return *this;
  }
  bool operator==(const CostEstimate&) const = default;
};

struct LocalePlan {
  CellKey locale;
  Level level = Level::Identify;
  bool update_detector = false;
  std::vector<std::size_t> classify;  // members with a complete window
  bool resolve_contacts = false;
};

struct TickPlan {
  std::vector<LocalePlan> locales;  // key order
  std::vector<std::size_t> covered;  // members of L3 locales, ascending
  std::vector<std::size_t> halo;     // non-covered agents next to covered cells
  CostEstimate estimate;
};

// Per-locale work for the coming tick. `window_ready[id]` says whether agent
// `id` has a full classifier window; `detector_ready` whether a locale's
// detector will evaluate (and therefore run MI) this tick.
TickPlan plan_tick(const std::map<CellKey, LocaleAnalysis>& analyses,
                   const LocaleGrid& grid, PipelineMode mode, bool have_classifier,
                   std::span<const std::uint8_t> window_ready,
                   const std::map<CellKey, bool>& detector_ready,
                   std::span<const AgentState> agents, std::size_t wall_count);

std::string to_string(Level level);

}  // namespace crush
