#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "crushsim/agent.hpp"
#include "crushsim/geometry.hpp"

namespace crush {

struct Exit {
  Segment segment;
  double familiarity = 1.0;
  double capacity_width = 0.0;
};

struct Obstacle {
  std::vector<Vec2> vertices;  // convex
};

enum class Placement { UniformRandom, Grid, Explicit };

struct Range {
  double min = 0.0;
  double max = 0.0;
};

struct ExplicitAgent {
  Vec2 position;
  Vec2 velocity;
  std::optional<double> desired_speed;
  std::optional<double> threat;
  std::optional<double> competitiveness;
};

// How the initial crowd is generated. Lives in the scenario document so a
// scenario file fully describes an experiment's starting state.
struct PopulationSpec {
  std::size_t count = 0;
  Placement placement = Placement::UniformRandom;
  std::optional<Rect> region;  // defaults to the scenario bounds
  double radius = 0.25;
  double mass = 80.0;
  double desired_speed_mean = 1.34;
  double desired_speed_sd = 0.26;
  Range desired_speed_clamp{0.5, 2.0};
  Range threat{0.0, 0.0};
  Range competitiveness{0.0, 0.0};
  std::vector<ExplicitAgent> agents;
};

struct Scenario {
  static constexpr int kSchema = 1;

  std::string name;
  std::vector<Segment> walls;
  std::vector<Obstacle> obstacles;
  std::vector<Exit> exits;
  Rect bounds;
  std::optional<double> aset;
  PopulationSpec population;

  // Everything agents collide with: walls with exit openings removed, plus
  // obstacle edges. Derived by build_scenario().
  std::vector<Segment> solid;
};

// Parses and validates a scenario document. Throws ParseError for malformed
// or incomplete documents and GeometryError for invalid geometry, including
// exits that the free-space flood fill cannot reach.
Scenario build_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::filesystem::path& path);
nlohmann::json to_json(const Scenario& scenario);

// Free-space occupancy grid used by the reachability check.
struct OccupancyGrid {
  double resolution = 0.1;
  Vec2 origin;
  int nx = 0;
  int ny = 0;
  std::vector<std::uint8_t> blocked;  // row-major, ny rows of nx

  bool is_blocked(int i, int j) const { return blocked[j * nx + i] != 0; }
  Vec2 centre(int i, int j) const {
    return {origin.x + (i + 0.5) * resolution, origin.y + (j + 0.5) * resolution};
  }
};

OccupancyGrid rasterize(const Scenario& scenario, double resolution);

// Places `population.count` agents. Deterministic for a fixed seed; throws
// PlacementError when non-overlapping placement fails.
std::vector<AgentState> seed_agents(const Scenario& scenario,
                                    const PopulationSpec& population,
                                    std::uint64_t seed);

}  // namespace crush
