#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "crushsim/simulation.hpp"

namespace crush {

inline constexpr int kArchiveSchema = 1;

// Files every complete archive must contain.
const std::vector<std::string>& archive_files();

// Streams a run into a directory:
//   config.json, scenario.json, metadata.json (timestamps only),
//   trajectory.csv, verdicts.csv, transitions.csv, exposure.csv, exits.csv,
//   features.csv (full-force runs only), cost_summary.json, metrics.json,
//   injury_report.json.
// Everything except metadata.json is a pure function of config + scenario.
class ArchiveWriter : public TickObserver {
 public:
  ArchiveWriter(const std::filesystem::path& dir, const Simulation& sim);

  void on_tick(const Simulation& sim, const TickReport& report) override;

  // Writes the summary documents; call once after the run stops.
  void finish(const Simulation& sim, const std::string& status);

 private:
  void write_trajectory(const Simulation& sim, std::uint64_t tick,
                        const std::map<CellKey, Level>& levels);

  std::filesystem::path dir_;
  std::ofstream trajectory_, verdicts_, transitions_, exposure_, exits_, features_;
  std::vector<double> peak_;
  bool record_features_ = false;
};

enum class RunStatus { Completed, TimedOut };

struct RunOutcome {
  RunStatus status = RunStatus::Completed;
  std::uint64_t ticks = 0;
  double time = 0.0;
};

// Seeds agents, runs to completion and writes the archive. A missing
// classifier is fine for hybrid runs (qualification then never confirms).
RunOutcome run_to_archive(const Scenario& scenario, const RunConfig& config,
                          const std::filesystem::path& out_dir,
                          std::shared_ptr<const Classifier> model = nullptr);

// Loads the training series of a full-force archive. Throws ModeError for
// any other mode and IncompleteArchive when files are missing.
TrainingRun load_training_run(const std::filesystem::path& archive);

// Throws IncompleteArchive naming the first missing file.
void check_archive(const std::filesystem::path& archive);

// Human-readable summary plus the metrics document.
std::string report_text(const std::filesystem::path& archive);

// In-memory record of a run, used by the benchmark and tests.
class RunRecorder : public TickObserver {
 public:
  struct Tick {
    std::uint64_t tick = 0;
    std::vector<Vec2> position, velocity;  // every agent, by id
    std::vector<std::uint8_t> active;
    std::vector<std::size_t> covered;
    std::vector<Vec2> covered_force;      // aligned with covered
    std::vector<double> normal_total;     // every agent; 0 when not covered
    std::vector<Level> agent_level;       // level of the agent's cell; L1 when inactive
    std::vector<LocaleTransition> transitions;
    Vec2 wall_reaction;
    Vec2 net_contact_force;  // sum of per-agent contact forces plus wall reaction
  };

  explicit RunRecorder(bool keep_features = false) : keep_features_(keep_features) {}

  void on_tick(const Simulation& sim, const TickReport& report) override;

  std::vector<Tick> ticks;
  // Present when keep_features was set; mode comes from the config.
  TrainingRun training;

 private:
  bool keep_features_;
};

// Outcome of running full-force and hybrid from identical seeds.
struct BenchmarkResult {
  CostCounters full_force;
  CostCounters hybrid;
  double pair_ratio = 0.0;  // hybrid / full-force force pair evaluations
  // First tick at which the two trajectories differ, if they ever do.
  std::optional<std::uint64_t> first_divergence;
  std::uint64_t compared_agent_ticks = 0;  // co-escalated agent-ticks compared
  std::uint64_t force_mismatches = 0;
  std::uint64_t escalation_events = 0;  // label false -> true in full-force
  std::uint64_t escalation_hits = 0;    // of those, inside an L3 locale in hybrid
  std::uint64_t l1_to_l2 = 0;
  std::uint64_t l2_to_l3 = 0;
  double hit_rate() const {
    return escalation_events == 0 ? 0.0
                                  : static_cast<double>(escalation_hits) /
                                        static_cast<double>(escalation_events);
  }
  nlohmann::json to_json() const;
};

// Runs full-force then hybrid on the same seeded population. Forces are
// compared only before the first divergence, since later states are no
// longer paired. Escalation events come from the whole full-force run.
BenchmarkResult run_benchmark(const Scenario& scenario, const RunConfig& config,
                              std::shared_ptr<const Classifier> model);

}  // namespace crush
