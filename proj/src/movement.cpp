#include "crushsim/movement.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "crushsim/error.hpp"
#include "crushsim/random.hpp"

namespace crush {

std::size_t choose_exit(const AgentState& agent, const Scenario& scenario) {
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t e = 0; e < scenario.exits.size(); ++e) {
    const auto& ex = scenario.exits[e];
    const double score = ex.familiarity / (1.0 + distance(ex.segment, agent.position));
    if (score > best_score) {
      best_score = score;
      best = e;
    }
  }
  return best;
}

Vec2 desired_direction(const AgentState& agent, const Scenario& scenario, Vec2 fallback) {
  // Aim at the exit shrunk by one radius at each end so agents do not steer
  // into the jambs and pin themselves there.
  Segment exit = scenario.exits.at(agent.target_exit).segment;
  const double len = exit.length();
  const Vec2 along = (exit.b - exit.a) / len;
  const double inset = std::min(agent.radius, len / 2.0);
  exit = {exit.a + along * inset, exit.b - along * inset};
  const Vec2 to = closest_point(exit, agent.position) - agent.position;
  const double n = to.norm();
  if (n == 0.0) return fallback;
  return to / n;
}

double effective_desired_speed(const AgentState& agent, const MovementParams& params) {
  const double v0 =
      agent.desired_speed * (1.0 + agent.competitiveness * agent.perceived_threat);
  return std::min(v0, params.speed_cap);
}

Vec2 pair_repulsion(const AgentState& agent, const AgentState& other,
                    const MovementParams& params, std::uint64_t seed, std::uint64_t tick) {
  const Vec2 diff = agent.position - other.position;
  const double d = diff.norm();
  if (d == 0.0) {
    // Coincident centres: push apart along a direction hashed from the
    // unordered pair, with opposite signs for the two parties.
    const std::size_t lo = std::min(agent.id, other.id), hi = std::max(agent.id, other.id);
    const double angle =
        2.0 * M_PI *
        unit_double(hash_words({seed, static_cast<std::uint64_t>(Stream::Separation), lo, hi, tick}));
    const Vec2 dir{std::cos(angle), std::sin(angle)};
    const double sign = agent.id == lo ? 1.0 : -1.0;
    return dir * (sign * params.repulsion_strength);
  }
  const double rij = agent.radius + other.radius;
  const double magnitude = params.repulsion_strength * std::exp((rij - d) / params.repulsion_range);
  return diff * (magnitude / d);
}

Vec2 wall_repulsion(const AgentState& agent, const Segment& wall, const MovementParams& params) {
  // Normal-only: past either end of the segment there is no push, otherwise
  // the two jambs of a narrow door hold slow agents in place.
  const Vec2 ab = wall.b - wall.a;
  const double t = dot(agent.position - wall.a, ab) / dot(ab, ab);
  if (t < 0.0 || t > 1.0) return {};
  const Vec2 diff = agent.position - (wall.a + ab * t);
  const double d = diff.norm();
  if (d == 0.0) return {};
  const double magnitude =
      params.wall_repulsion_strength * std::exp((agent.radius - d) / params.wall_repulsion_range);
  return diff * (magnitude / d);
}

Vec2 social_force(const AgentState& agent, Vec2 desired_dir,
                  std::span<const AgentState* const> neighbors, std::span<const Segment> walls,
                  const MovementParams& params, std::uint64_t seed, std::uint64_t tick) {
  const double v0 = effective_desired_speed(agent, params);
  Vec2 force = (desired_dir * v0 - agent.velocity) * (agent.mass / params.relaxation_time);
  for (const AgentState* other : neighbors) {
    if (other->id == agent.id) continue;
    force += pair_repulsion(agent, *other, params, seed, tick);
  }
  for (const auto& w : walls) {
    if (distance(w, agent.position) > params.neighbor_cutoff) continue;
    force += wall_repulsion(agent, w, params);
  }
  return force;
}

AgentState integrate(const AgentState& agent, Vec2 net_force, double dt, double speed_cap) {
  if (!net_force.finite())
    throw NumericError("non-finite force on agent " + std::to_string(agent.id));
  AgentState next = agent;
  Vec2 v = agent.velocity + net_force * (dt / agent.mass);
  const double speed = v.norm();
  if (speed > speed_cap) v = v * (speed_cap / speed);
  next.velocity = v;
  next.position = agent.position + v * dt;
  return next;
}

AgentState keep_inside(const AgentState& before, AgentState after, std::span<const Segment> walls) {
  auto crosses = [&](Vec2 to) {
    const Segment path{before.position, to};
    for (const Segment& w : walls)
      if (segments_intersect(path, w)) return &w;
    return static_cast<const Segment*>(nullptr);
  };
  const Segment* hit = crosses(after.position);
  if (!hit) return after;
  const Vec2 n = normalized(perp(hit->b - hit->a));
  const Vec2 step = after.position - before.position;
  after.position = before.position + (step - n * dot(step, n));
  after.velocity = after.velocity - n * dot(after.velocity, n);
  if (after.position == before.position || crosses(after.position)) {
    after.position = before.position;
    after.velocity = {};
  }
  return after;
}

double relax_threat(const AgentState& agent, std::span<const AgentState* const> neighbors,
                    double dt, double relaxation_time) {
  double target = agent.perceived_threat;
  for (const AgentState* other : neighbors) target = std::max(target, other->perceived_threat);
  const double next =
      agent.perceived_threat + (target - agent.perceived_threat) * std::min(1.0, dt / relaxation_time);
  return std::clamp(next, 0.0, 1.0);
}

}  // namespace crush
