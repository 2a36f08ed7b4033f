#pragma once

#include <cstddef>
#include <optional>

#include "crushsim/vec2.hpp"

namespace crush {

struct AgentState {
  std::size_t id = 0;
  Vec2 position;
  Vec2 velocity;
  double mass = 80.0;
  double radius = 0.25;
  double desired_speed = 1.34;
  double perceived_threat = 0.0;
  double competitiveness = 0.0;
  std::size_t target_exit = 0;
  std::optional<double> evacuated_at;
  // Set once sustained exposure crosses the critical tier; the agent then
  // stays put and acts as a static obstacle.
  bool immobile = false;
  // Last well-defined desired direction, reused when the current one is
  // degenerate.
  Vec2 heading{1.0, 0.0};

  bool active() const { return !evacuated_at.has_value(); }
};

}  // namespace crush
