#include "crushsim/hybrid.hpp"

#include <algorithm>

#include "crushsim/error.hpp"
#include "crushsim/quantify.hpp"

namespace crush {

std::string to_string(Level level) {
  switch (level) {
    case Level::Identify: return "L1";
    case Level::Qualify: return "L2";
    case Level::Quantify: return "L3";
  }
  return "?";
}

AdvanceResult advance(const LocaleAnalysis& analysis,
                      const std::optional<TransitionVerdict>& verdict,
                      const std::optional<QualifyOutcome>& qualify,
                      const std::optional<QuantifySummary>& quantify,
                      const EscalationPolicy& policy) {
  if (qualify && analysis.level == Level::Identify)
    throw ProtocolError("qualify outcome delivered to an L1 locale");
  if (quantify && analysis.level != Level::Quantify)
    throw ProtocolError("quantify summary delivered below L3");

  AdvanceResult out{analysis, std::nullopt};
  LocaleAnalysis& a = out.analysis;
  if (verdict) a.last_verdict = verdict;
  if (qualify) a.last_qualify = qualify;

  auto move_to = [&](Level to, const char* trigger) {
    out.transition = LevelTransition{a.level, to, trigger};
    a.level = to;
    a.dwell = 0;
    a.calm_ticks = 0;
  };

  switch (analysis.level) {
    case Level::Identify:
      if (verdict && verdict->state == PhaseState::Disordered) move_to(Level::Qualify, "disordered");
      break;
    case Level::Qualify:
      if (qualify && qualify->confirmed) {
        move_to(Level::Quantify, "confirmed");
        break;
      }
      a.calm_ticks = verdict && verdict->state == PhaseState::Ordered ? a.calm_ticks + 1 : 0;
      if (a.calm_ticks >= policy.cooldown) move_to(Level::Identify, "ordered-cooldown");
      break;
    case Level::Quantify: {
      const bool calm = !quantify || quantify->peak_force < policy.exit_force;
      a.calm_ticks = calm ? a.calm_ticks + 1 : 0;
      if (a.calm_ticks >= policy.cooldown) move_to(Level::Qualify, "force-cooldown");
      break;
    }
  }
  if (!out.transition) ++a.dwell;
  return out;
}

std::optional<Level> pinned_level(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::Implicit: return Level::Identify;
    case PipelineMode::FullForce: return Level::Quantify;
    case PipelineMode::Hybrid: return std::nullopt;
  }
  return std::nullopt;
}

bool runs_detector(PipelineMode mode) { return mode != PipelineMode::Implicit; }

TickPlan plan_tick(const std::map<CellKey, LocaleAnalysis>& analyses, const LocaleGrid& grid,
                   PipelineMode mode, bool have_classifier,
                   std::span<const std::uint8_t> window_ready,
                   const std::map<CellKey, bool>& detector_ready,
                   std::span<const AgentState> agents, std::size_t wall_count) {
  TickPlan plan;
  const auto pinned = pinned_level(mode);
  for (const auto& [key, members] : grid.cells) {
    LocalePlan lp;
    lp.locale = key;
    if (pinned) lp.level = *pinned;
    else if (auto it = analyses.find(key); it != analyses.end()) lp.level = it->second.level;
    lp.update_detector = runs_detector(mode);
    if (lp.update_detector) {
      auto it = detector_ready.find(key);
      if (it != detector_ready.end() && it->second) plan.estimate.mi_evaluations += 1;
    }
    if (lp.level >= Level::Qualify && have_classifier)
      for (std::size_t id : members)
        if (id < window_ready.size() && window_ready[id]) lp.classify.push_back(id);
    plan.estimate.classifier_forward_passes += lp.classify.size();
    lp.resolve_contacts = lp.level == Level::Quantify;
    if (lp.resolve_contacts) plan.covered.insert(plan.covered.end(), members.begin(), members.end());
    plan.locales.push_back(std::move(lp));
  }
  std::sort(plan.covered.begin(), plan.covered.end());

  for (const auto& lp : plan.locales) {
    if (!lp.resolve_contacts) continue;
    for (std::size_t id : grid.neighborhood(lp.locale))
      if (!std::binary_search(plan.covered.begin(), plan.covered.end(), id)) plan.halo.push_back(id);
  }
  std::sort(plan.halo.begin(), plan.halo.end());
  plan.halo.erase(std::unique(plan.halo.begin(), plan.halo.end()), plan.halo.end());

  plan.estimate.force_pair_evaluations =
      count_pair_evaluations(plan.covered, plan.covered, grid, wall_count, agents);
  return plan;
}

}  // namespace crush
