#pragma once

#include <cstdint>
#include <span>

#include "crushsim/agent.hpp"
#include "crushsim/config.hpp"
#include "crushsim/scenario.hpp"

namespace crush {

// Exit maximising familiarity / (1 + distance); ties go to the lowest index.
std::size_t choose_exit(const AgentState& agent, const Scenario& scenario);

// Unit vector toward the nearest point of the target exit, inset by the
// agent radius from both ends. Returns
// `fallback` when the agent sits exactly on that point.
Vec2 desired_direction(const AgentState& agent, const Scenario& scenario,
                       Vec2 fallback);

// Desired speed after the competitiveness-threat coupling, capped.
double effective_desired_speed(const AgentState& agent, const MovementParams& params);

// Psychological repulsion exerted on `agent` by `other`.
Vec2 pair_repulsion(const AgentState& agent, const AgentState& other,
                    const MovementParams& params, std::uint64_t seed,
                    std::uint64_t tick);

// Exponential push away from a wall, acting only where the agent projects
// onto the segment interior.
Vec2 wall_repulsion(const AgentState& agent, const Segment& wall,
                    const MovementParams& params);

// Driving term plus psychological repulsion from neighbours and walls.
// Contact forces are not included. `seed` and `tick` only matter for
// coincident centres, where a fixed-magnitude push along a hashed direction
// replaces the undefined normal.
Vec2 social_force(const AgentState& agent, Vec2 desired_dir,
                  std::span<const AgentState* const> neighbors,
                  std::span<const Segment> walls, const MovementParams& params,
                  std::uint64_t seed = 0, std::uint64_t tick = 0);

// Semi-implicit Euler step with a speed clamp. Throws NumericError on a
// non-finite force.
AgentState integrate(const AgentState& agent, Vec2 net_force, double dt,
                     double speed_cap);

// Hard constraint on top of the force model: a step that would cross a wall
// slides along it instead (normal components of displacement and velocity
// removed); if the slide still crosses something the agent stays put.
AgentState keep_inside(const AgentState& before, AgentState after,
                       std::span<const Segment> walls);

// New perceived threat after relaxing toward the largest threat among the
// agent and its neighbours.
double relax_threat(const AgentState& agent,
                    std::span<const AgentState* const> neighbors, double dt,
                    double relaxation_time);

}  // namespace crush
