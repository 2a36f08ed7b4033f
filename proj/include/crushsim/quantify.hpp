#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

#include "crushsim/agent.hpp"
#include "crushsim/config.hpp"
#include "crushsim/geometry.hpp"
#include "crushsim/locale_grid.hpp"

namespace crush {

enum class ContactKind : int { AgentAgent = 0, AgentWall = 1 };

// One overlapping pair. For agent-agent contacts `first` < `second` and the
// normal points from `first` toward `second`; for wall contacts `second` is
// the wall index and the normal points from the agent toward the wall.
struct Contact {
  ContactKind kind = ContactKind::AgentAgent;
  std::size_t first = 0;
  std::size_t second = 0;
  double penetration = 0.0;
  Vec2 normal;
  Vec2 tangent;  // normal rotated +90 degrees
  // (v_first - v_second) . tangent; for walls v_first . tangent.
  double tangential_velocity = 0.0;

  bool operator<(const Contact& o) const;
};

struct ContactSearch {
  std::vector<Contact> contacts;  // sorted
  std::uint64_t pair_evaluations = 0;
};

// Detects every contact touching an agent in `covered` (ascending ids).
// Candidate partners come from the 3x3 cell block around each covered agent,
// which acts as the halo. Every candidate pair and agent-wall check counts
// as one pair evaluation.
ContactSearch contact_pairs(std::span<const AgentState> agents,
                            std::span<const std::size_t> covered,
                            const LocaleGrid& grid, std::span<const Segment> walls,
                            unsigned threads = 1);

// Pair evaluations `contact_pairs(agents, covered, ...)` performs on behalf
// of the agents in `counted` (a subset of `covered`), from cell membership
// only.
std::uint64_t count_pair_evaluations(std::span<const std::size_t> counted,
                                     std::span<const std::size_t> covered,
                                     const LocaleGrid& grid, std::size_t wall_count,
                                     std::span<const AgentState> agents);

struct ResolvedForces {
  std::vector<Vec2> force;          // per agent, indexed by id
  std::vector<double> normal_total; // per agent, sum of normal magnitudes
  std::vector<double> contact_normal;  // per contact, same order as input
  Vec2 wall_reaction;               // total force applied to walls
};

// Linear spring normal force k * penetration plus sliding friction
// kappa * penetration * tangential velocity, applied equal and opposite.
// Per-agent sums accumulate in contact order.
ResolvedForces resolve_forces(std::span<const Contact> contacts,
                              std::span<const AgentState> agents,
                              const ContactForceParams& params);

// Time-integrated normal force for one agent. `history` holds only the
// ticks on which the agent's forces were actually resolved.
struct ExposureRecord {
  std::size_t agent_id = 0;
  std::vector<std::uint64_t> ticks;
  std::vector<double> force;
  double peak = 0.0;
  std::vector<double> tier_integral;  // N s above each tier
  std::vector<std::uint64_t> tier_run;      // current continuous ticks >= tier
  std::vector<std::uint64_t> tier_longest;  // longest continuous ticks >= tier
};

ExposureRecord make_exposure_record(std::size_t agent_id, std::size_t tiers);

// Appends one tick. Continuous runs break when a tick is skipped.
void accumulate_exposure(ExposureRecord& record, std::uint64_t tick, double force,
                         double dt, std::span<const double> tiers);

struct InjuryReportConfig {
  InjuryCutoff at_risk{250.0, 1.0};
  InjuryCutoff critical{1500.0, 10.0};
  std::vector<double> tiers{250.0, 1500.0};
};

// Number of ticks needed to cover `seconds`.
std::uint64_t ticks_for(double seconds, double dt);

// Longest run of consecutive recorded ticks with force >= `threshold`.
std::uint64_t longest_sustained(const ExposureRecord& record, double threshold);

nlohmann::json injury_report(std::span<const ExposureRecord> records,
                             const InjuryReportConfig& config, double dt);

}  // namespace crush
