#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "crushsim/classifier.hpp"
#include "crushsim/config.hpp"
#include "crushsim/hybrid.hpp"
#include "crushsim/identify.hpp"
#include "crushsim/locale_grid.hpp"
#include "crushsim/quantify.hpp"
#include "crushsim/safety_metrics.hpp"
#include "crushsim/scenario.hpp"

namespace crush {

struct CostCounters {
  CostEstimate total;
  std::map<CellKey, CostEstimate> per_locale;
  std::array<CostEstimate, 3> per_level{};  // indexed by level - 1

  void add(CellKey locale, Level level, const CostEstimate& cost);
};

struct LocaleVerdict {
  CellKey locale;
  TransitionVerdict verdict;
};

struct LocaleTransition {
  CellKey locale;
  LevelTransition transition;
};

// Everything that happened during one tick, handed to observers after the
// state has been committed.
struct TickReport {
  std::uint64_t tick = 0;
  double time = 0.0;
  std::vector<ExitEvent> exits;
  std::vector<LocaleVerdict> verdicts;
  std::vector<LocaleTransition> transitions;
  // Level each non-empty locale ran at during this tick.
  std::map<CellKey, Level> levels;
  // Agents whose contact forces were resolved, ascending.
  std::vector<std::size_t> covered;
  std::vector<std::size_t> halo;
  ResolvedForces forces;
  // Features for this tick, indexed by agent id; valid for active agents.
  std::span<const FeatureRow> features;
  CostEstimate cost;
  CostEstimate planned;
};

class Simulation;

class TickObserver {
 public:
  virtual ~TickObserver() = default;
  virtual void on_tick(const Simulation& sim, const TickReport& report) = 0;
};

// Fixed-timestep evacuation run. Every tick moves all agents with the social
// force model, repartitions locales, then runs each locale's analysis at its
// current escalation level and lets the controller advance it.
class Simulation {
 public:
  Simulation(Scenario scenario, RunConfig config, std::vector<AgentState> agents,
             std::shared_ptr<const Classifier> model = nullptr);

  // Advances one tick. Throws NumericError naming the tick and agent if any
  // state becomes non-finite.
  void step(std::span<TickObserver* const> observers = {});

  // Steps until everyone has left or max_time is reached.
  void run(std::span<TickObserver* const> observers = {});

  bool evacuated() const { return active_count_ == 0; }
  bool timed_out() const;

  std::uint64_t tick() const { return tick_; }
  double time() const { return static_cast<double>(tick_) * config_.dt; }
  const Scenario& scenario() const { return scenario_; }
  const RunConfig& config() const { return config_; }
  std::span<const AgentState> agents() const { return agents_; }
  std::size_t active_count() const { return active_count_; }
  const LocaleGrid& grid() const { return grid_; }
  const std::map<CellKey, LocaleAnalysis>& analyses() const { return analyses_; }
  const CostCounters& counters() const { return counters_; }
  std::span<const ExposureRecord> exposure() const { return exposure_; }
  const DensityHistory& density_history() const { return density_; }
  std::span<const ExitEvent> exit_log() const { return exit_log_; }
  const std::vector<char>& fruin_timeline() const { return fruin_timeline_; }
  bool has_classifier() const { return model_ != nullptr; }

  // Finalizes the density history (marks it complete when everyone left).
  DensityHistory finished_density_history() const;

 private:
  void move_agents(std::vector<ExitEvent>& exits);
  void compute_features();
  std::map<CellKey, bool> detector_readiness() const;

  Scenario scenario_;
  RunConfig config_;
  std::shared_ptr<const Classifier> model_;
  std::vector<AgentState> agents_;
  std::size_t active_count_ = 0;
  double mean_mass_ = 1.0;
  std::uint64_t tick_ = 0;
  LocaleGrid grid_;
  std::map<CellKey, LocaleAnalysis> analyses_;
  std::map<CellKey, LocaleDetector> detectors_;
  CostCounters counters_;
  std::vector<ExposureRecord> exposure_;
  std::vector<double> critical_run_;  // ticks at or above the critical cutoff
  std::vector<Vec2> feedback_force_;
  std::vector<FeatureRow> features_;
  std::vector<std::vector<FeatureRow>> windows_;  // ring per agent
  std::vector<std::size_t> window_fill_;
  DensityHistory density_;
  std::vector<char> fruin_timeline_;
  std::vector<ExitEvent> exit_log_;
};

// Chronological feature window for an agent's ring buffer.
std::vector<double> flatten_window(const std::vector<FeatureRow>& ring,
                                   std::size_t fill, std::size_t window);

}  // namespace crush
