#include "crushsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <random>
#include <sstream>

#include "crushsim/error.hpp"

namespace crush {

using nlohmann::json;

namespace {

constexpr double kGeomEps = 1e-9;

Vec2 read_point(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ParseError(std::string(what) + ": expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

Segment read_segment(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2)
    throw ParseError(std::string(what) + ": expected [[x, y], [x, y]]");
  return {read_point(j[0], what), read_point(j[1], what)};
}

Rect read_rect(const json& j, const char* what) {
  if (!j.is_object() || !j.contains("min") || !j.contains("max"))
    throw ParseError(std::string(what) + ": expected {min: [x, y], max: [x, y]}");
  return {read_point(j["min"], what), read_point(j["max"], what)};
}

Range read_range(const json& j, Range fallback) {
  Range r = fallback;
  if (j.contains("min")) r.min = j["min"].get<double>();
  if (j.contains("max")) r.max = j["max"].get<double>();
  return r;
}

json point_json(Vec2 p) { return json::array({p.x, p.y}); }
json segment_json(const Segment& s) { return json::array({point_json(s.a), point_json(s.b)}); }
json rect_json(const Rect& r) { return {{"min", point_json(r.min)}, {"max", point_json(r.max)}}; }

const char* placement_name(Placement p) {
  switch (p) {
    case Placement::UniformRandom: return "uniform-random-nonoverlapping";
    case Placement::Grid: return "grid";
    case Placement::Explicit: return "explicit-list";
  }
  return "?";
}

Placement parse_placement(const std::string& s) {
  if (s == "uniform-random-nonoverlapping" || s == "uniform") return Placement::UniformRandom;
  if (s == "grid") return Placement::Grid;
  if (s == "explicit-list" || s == "explicit") return Placement::Explicit;
  throw ParseError("population.placement: unknown policy '" + s + "'");
}

PopulationSpec read_population(const json& j) {
  PopulationSpec p;
  if (j.contains("placement")) p.placement = parse_placement(j["placement"].get<std::string>());
  if (j.contains("count")) p.count = j["count"].get<std::size_t>();
  if (j.contains("region")) p.region = read_rect(j["region"], "population.region");
  p.radius = j.value("radius", p.radius);
  p.mass = j.value("mass", p.mass);
  if (j.contains("desired_speed")) {
    const auto& d = j["desired_speed"];
    p.desired_speed_mean = d.value("mean", p.desired_speed_mean);
    p.desired_speed_sd = d.value("sd", p.desired_speed_sd);
    p.desired_speed_clamp = read_range(d, p.desired_speed_clamp);
  }
  if (j.contains("threat")) p.threat = read_range(j["threat"], p.threat);
  if (j.contains("competitiveness"))
    p.competitiveness = read_range(j["competitiveness"], p.competitiveness);
  if (j.contains("agents")) {
    for (const auto& a : j["agents"]) {
      ExplicitAgent e;
      e.position = read_point(a.at("position"), "population.agents[].position");
      if (a.contains("velocity")) e.velocity = read_point(a["velocity"], "velocity");
      if (a.contains("desired_speed")) e.desired_speed = a["desired_speed"].get<double>();
      if (a.contains("threat")) e.threat = a["threat"].get<double>();
      if (a.contains("competitiveness")) e.competitiveness = a["competitiveness"].get<double>();
      p.agents.push_back(e);
    }
    if (p.placement == Placement::Explicit) p.count = p.agents.size();
  }
  return p;
}

// Removes every exit opening lying on `wall` and returns what is left.
std::vector<Segment> cut_openings(const Segment& wall, const std::vector<Exit>& exits) {
  const Vec2 d = wall.b - wall.a;
  const double len2 = d.norm2();
  std::vector<std::pair<double, double>> holes;
  for (const auto& e : exits) {
    const double ca = cross(d, e.segment.a - wall.a);
    const double cb = cross(d, e.segment.b - wall.a);
    const double tol = kGeomEps * std::sqrt(len2) + kGeomEps;
    if (std::abs(ca) > tol || std::abs(cb) > tol) continue;
    double t0 = dot(e.segment.a - wall.a, d) / len2;
    double t1 = dot(e.segment.b - wall.a, d) / len2;
    if (t0 > t1) std::swap(t0, t1);
    t0 = std::max(t0, 0.0);
    t1 = std::min(t1, 1.0);
    if (t1 > t0) holes.emplace_back(t0, t1);
  }
  std::sort(holes.begin(), holes.end());
  std::vector<Segment> pieces;
  double start = 0.0;
  for (const auto& [h0, h1] : holes) {
    if (h0 > start) pieces.push_back({wall.a + d * start, wall.a + d * h0});
    start = std::max(start, h1);
  }
  if (start < 1.0) pieces.push_back({wall.a + d * start, wall.b});
  std::erase_if(pieces, [](const Segment& s) { return s.length() <= kGeomEps; });
  return pieces;
}

bool is_convex(const std::vector<Vec2>& poly) {
  int sign = 0;
  for (std::size_t k = 0; k < poly.size(); ++k) {
    const Vec2 a = poly[k], b = poly[(k + 1) % poly.size()], c = poly[(k + 2) % poly.size()];
    const double z = cross(b - a, c - b);
    if (std::abs(z) <= kGeomEps) continue;
    const int s = z > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    else if (s != sign) return false;
  }
  return sign != 0;
}

void check_reachability(const Scenario& sc) {
  const OccupancyGrid grid = rasterize(sc, 0.1);
  const int nx = grid.nx, ny = grid.ny;
  if (nx <= 0 || ny <= 0) throw GeometryError("bounds too small to rasterize");

  auto crosses = [&](Vec2 p, Vec2 q) {
    const Segment step{p, q};
    return std::any_of(sc.solid.begin(), sc.solid.end(),
                       [&](const Segment& w) { return segments_intersect(step, w); });
  };

  std::vector<int> component(static_cast<std::size_t>(nx) * ny, -1);
  std::vector<std::size_t> sizes;
  for (int j0 = 0; j0 < ny; ++j0) {
    for (int i0 = 0; i0 < nx; ++i0) {
      if (grid.is_blocked(i0, j0) || component[j0 * nx + i0] >= 0) continue;
      const int id = static_cast<int>(sizes.size());
      sizes.push_back(0);
      std::queue<std::pair<int, int>> q;
      q.emplace(i0, j0);
      component[j0 * nx + i0] = id;
      while (!q.empty()) {
        auto [i, j] = q.front();
        q.pop();
        ++sizes[id];
        constexpr int di[4] = {1, -1, 0, 0};
        constexpr int dj[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int a = i + di[k], b = j + dj[k];
          if (a < 0 || b < 0 || a >= nx || b >= ny) continue;
          if (grid.is_blocked(a, b) || component[b * nx + a] >= 0) continue;
          if (crosses(grid.centre(i, j), grid.centre(a, b))) continue;
          component[b * nx + a] = id;
          q.emplace(a, b);
        }
      }
    }
  }
  if (sizes.empty()) throw GeometryError("no walkable space inside bounds");
  const int main_component = static_cast<int>(
      std::max_element(sizes.begin(), sizes.end()) - sizes.begin());

  for (std::size_t e = 0; e < sc.exits.size(); ++e) {
    const Segment& seg = sc.exits[e].segment;
    bool reached = false;
    for (int j = 0; j < ny && !reached; ++j) {
      for (int i = 0; i < nx && !reached; ++i) {
        if (component[j * nx + i] != main_component) continue;
        const Vec2 c = grid.centre(i, j);
        if (distance(seg, c) > grid.resolution) continue;
        reached = !crosses(c, closest_point(seg, c));
      }
    }
    if (!reached)
      throw GeometryError("exit " + std::to_string(e) +
                          " is not reachable from the walkable area");
  }
}

}  // namespace

OccupancyGrid rasterize(const Scenario& scenario, double resolution) {
  OccupancyGrid g;
  g.resolution = resolution;
  g.origin = scenario.bounds.min;
  g.nx = static_cast<int>(std::floor(scenario.bounds.width() / resolution + 1e-9));
  g.ny = static_cast<int>(std::floor(scenario.bounds.height() / resolution + 1e-9));
  g.blocked.assign(static_cast<std::size_t>(std::max(g.nx, 0)) * std::max(g.ny, 0), 0);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const Vec2 c = g.centre(i, j);
      for (const auto& o : scenario.obstacles)
        if (inside_convex(o.vertices, c)) g.blocked[j * g.nx + i] = 1;
    }
  return g;
}

Scenario build_scenario(const json& doc) {
  if (!doc.is_object()) throw ParseError("scenario: expected an object");
  const int schema = doc.value("schema", 0);
  if (schema != Scenario::kSchema)
    throw ParseError("scenario: unsupported schema " + std::to_string(schema) +
                     " (expected " + std::to_string(Scenario::kSchema) + ")");

  Scenario sc;
  try {
    sc.name = doc.value("name", std::string{"unnamed"});
    if (doc.contains("room")) {
      const double w = doc["room"].at("width").get<double>();
      const double h = doc["room"].at("height").get<double>();
      sc.bounds = {{0, 0}, {w, h}};
      sc.walls = {{{0, 0}, {w, 0}}, {{w, 0}, {w, h}}, {{w, h}, {0, h}}, {{0, h}, {0, 0}}};
    }
    if (doc.contains("bounds")) sc.bounds = read_rect(doc["bounds"], "bounds");
    else if (!doc.contains("room")) throw ParseError("scenario: missing 'bounds' or 'room'");
    if (doc.contains("walls"))
      for (const auto& w : doc["walls"]) sc.walls.push_back(read_segment(w, "walls[]"));
    if (doc.contains("obstacles"))
      for (const auto& o : doc["obstacles"]) {
        Obstacle obs;
        for (const auto& v : o) obs.vertices.push_back(read_point(v, "obstacles[][]"));
        sc.obstacles.push_back(std::move(obs));
      }
    if (!doc.contains("exits")) throw ParseError("scenario: missing 'exits'");
    for (const auto& e : doc["exits"]) {
      Exit ex;
      ex.segment = read_segment(e.at("segment"), "exits[].segment");
      ex.familiarity = e.value("familiarity", 1.0);
      ex.capacity_width = e.value("capacity_width", ex.segment.length());
      sc.exits.push_back(ex);
    }
    if (doc.contains("aset") && !doc["aset"].is_null()) sc.aset = doc["aset"].get<double>();
    if (doc.contains("population")) sc.population = read_population(doc["population"]);
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }

  if (!(sc.bounds.width() > 0 && sc.bounds.height() > 0))
    throw GeometryError("bounds must have positive width and height");
  if (sc.exits.empty()) throw GeometryError("scenario has no exit");
  for (std::size_t k = 0; k < sc.walls.size(); ++k)
    if (sc.walls[k].length() <= kGeomEps)
      throw GeometryError("wall " + std::to_string(k) + " is degenerate");
  bool any_familiar = false;
  for (std::size_t k = 0; k < sc.exits.size(); ++k) {
    const auto& e = sc.exits[k];
    if (e.segment.length() <= kGeomEps)
      throw GeometryError("exit " + std::to_string(k) + " is degenerate");
    if (!sc.bounds.contains(e.segment.a, kGeomEps) || !sc.bounds.contains(e.segment.b, kGeomEps))
      throw GeometryError("exit " + std::to_string(k) + " lies outside bounds");
    if (!(e.familiarity >= 0.0))
      throw GeometryError("exit " + std::to_string(k) + " has negative familiarity");
    any_familiar = any_familiar || e.familiarity > 0.0;
  }
  if (!any_familiar) throw GeometryError("all exit familiarity weights are zero");
  for (std::size_t k = 0; k < sc.obstacles.size(); ++k)
    if (sc.obstacles[k].vertices.size() < 3 || !is_convex(sc.obstacles[k].vertices))
      throw GeometryError("obstacle " + std::to_string(k) + " is not a convex polygon");
  const auto& pop = sc.population;
  if (!(pop.radius > 0.0) || !(pop.mass > 0.0))
    throw ParseError("population: radius and mass must be positive");

  for (const auto& w : sc.walls)
    for (auto& piece : cut_openings(w, sc.exits)) sc.solid.push_back(piece);
  for (const auto& o : sc.obstacles)
    for (auto& edge : polygon_edges(o.vertices)) sc.solid.push_back(edge);

  check_reachability(sc);
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  try {
    return build_scenario(doc);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const GeometryError& e) {
    throw GeometryError(path.string() + ": " + e.what());
  }
}

json to_json(const Scenario& sc) {
  json doc;
  doc["schema"] = Scenario::kSchema;
  doc["name"] = sc.name;
  doc["bounds"] = rect_json(sc.bounds);
  doc["walls"] = json::array();
  for (const auto& w : sc.walls) doc["walls"].push_back(segment_json(w));
  doc["obstacles"] = json::array();
  for (const auto& o : sc.obstacles) {
    json poly = json::array();
    for (auto v : o.vertices) poly.push_back(point_json(v));
    doc["obstacles"].push_back(poly);
  }
  doc["exits"] = json::array();
  for (const auto& e : sc.exits)
    doc["exits"].push_back({{"segment", segment_json(e.segment)},
                            {"familiarity", e.familiarity},
                            {"capacity_width", e.capacity_width}});
  doc["aset"] = sc.aset ? json(*sc.aset) : json(nullptr);
  const auto& p = sc.population;
  json pop = {{"count", p.count},
              {"placement", placement_name(p.placement)},
              {"radius", p.radius},
              {"mass", p.mass},
              {"desired_speed",
               {{"mean", p.desired_speed_mean},
                {"sd", p.desired_speed_sd},
                {"min", p.desired_speed_clamp.min},
                {"max", p.desired_speed_clamp.max}}},
              {"threat", {{"min", p.threat.min}, {"max", p.threat.max}}},
              {"competitiveness", {{"min", p.competitiveness.min}, {"max", p.competitiveness.max}}}};
  if (p.region) pop["region"] = rect_json(*p.region);
  if (!p.agents.empty()) {
    json agents = json::array();
    for (const auto& a : p.agents) {
      json ja = {{"position", point_json(a.position)}, {"velocity", point_json(a.velocity)}};
      if (a.desired_speed) ja["desired_speed"] = *a.desired_speed;
      if (a.threat) ja["threat"] = *a.threat;
      if (a.competitiveness) ja["competitiveness"] = *a.competitiveness;
      agents.push_back(ja);
    }
    pop["agents"] = agents;
  }
  doc["population"] = pop;
  return doc;
}

namespace {

class Draws {
 public:
  explicit Draws(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  double normal(double mean, double sd) {
    // Box-Muller; kept local so results do not depend on the standard
    // library's distribution implementations.
    const double u1 = 1.0 - unit();
    const double u2 = unit();
    return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  std::mt19937_64 rng_;
};

bool clear_of_geometry(const Scenario& sc, Vec2 p, double r) {
  if (!sc.bounds.contains(p)) return false;
  if (p.x - r < sc.bounds.min.x || p.x + r > sc.bounds.max.x || p.y - r < sc.bounds.min.y ||
      p.y + r > sc.bounds.max.y)
    return false;
  for (const auto& w : sc.solid)
    if (distance(w, p) < r) return false;
  for (const auto& o : sc.obstacles)
    if (inside_convex(o.vertices, p)) return false;
  return true;
}

bool clear_of_agents(const std::vector<AgentState>& placed, Vec2 p, double r) {
  return std::none_of(placed.begin(), placed.end(), [&](const AgentState& a) {
    return (a.position - p).norm() < a.radius + r;
  });
}

}  // namespace

std::vector<AgentState> seed_agents(const Scenario& scenario, const PopulationSpec& pop,
                                    std::uint64_t seed) {
  const Rect region = pop.region.value_or(scenario.bounds);
  const double r = pop.radius;
  Draws draws(seed);

  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;
  switch (pop.placement) {
    case Placement::UniformRandom: {
      std::vector<AgentState> probe;
      const std::size_t max_attempts = 2000;
      for (std::size_t k = 0; k < pop.count; ++k) {
        bool placed = false;
        for (std::size_t attempt = 0; attempt < max_attempts && !placed; ++attempt) {
          const Vec2 p{draws.uniform(region.min.x + r, region.max.x - r),
                       draws.uniform(region.min.y + r, region.max.y - r)};
          if (!clear_of_geometry(scenario, p, r) || !clear_of_agents(probe, p, r)) continue;
          AgentState a;
          a.position = p;
          a.radius = r;
          probe.push_back(a);
          positions.push_back(p);
          placed = true;
        }
        if (!placed)
          throw PlacementError("could not place agent " + std::to_string(k) + " of " +
                               std::to_string(pop.count) + " without overlap");
      }
      velocities.assign(positions.size(), Vec2{});
      break;
    }
    case Placement::Grid: {
      if (pop.count == 0) break;
      const double area = region.width() * region.height();
      const double spacing =
          std::max(2.0 * r + 0.01, std::sqrt(area / static_cast<double>(pop.count)));
      for (double y = region.min.y + r; y <= region.max.y - r + 1e-12 && positions.size() < pop.count;
           y += spacing)
        for (double x = region.min.x + r;
             x <= region.max.x - r + 1e-12 && positions.size() < pop.count; x += spacing)
          if (clear_of_geometry(scenario, {x, y}, r)) positions.push_back({x, y});
      if (positions.size() < pop.count)
        throw PlacementError("grid placement fits only " + std::to_string(positions.size()) +
                             " of " + std::to_string(pop.count) + " agents");
      velocities.assign(positions.size(), Vec2{});
      break;
    }
    case Placement::Explicit: {
      std::vector<AgentState> probe;
      for (const auto& e : pop.agents) {
        if (!clear_of_geometry(scenario, e.position, r) || !clear_of_agents(probe, e.position, r))
          throw PlacementError("explicit agent at (" + std::to_string(e.position.x) + ", " +
                               std::to_string(e.position.y) + ") overlaps geometry or another agent");
        AgentState a;
        a.position = e.position;
        a.radius = r;
        probe.push_back(a);
        positions.push_back(e.position);
        velocities.push_back(e.velocity);
      }
      break;
    }
  }

  std::vector<AgentState> agents;
  agents.reserve(positions.size());
  for (std::size_t k = 0; k < positions.size(); ++k) {
    AgentState a;
    a.id = k;
    a.position = positions[k];
    a.velocity = velocities[k];
    a.mass = pop.mass;
    a.radius = r;
    a.desired_speed = std::clamp(draws.normal(pop.desired_speed_mean, pop.desired_speed_sd),
                                 pop.desired_speed_clamp.min, pop.desired_speed_clamp.max);
    a.perceived_threat = std::clamp(draws.uniform(pop.threat.min, pop.threat.max), 0.0, 1.0);
    a.competitiveness =
        std::clamp(draws.uniform(pop.competitiveness.min, pop.competitiveness.max), 0.0, 1.0);
    if (pop.placement == Placement::Explicit) {
      const auto& e = pop.agents[k];
      if (e.desired_speed) a.desired_speed = *e.desired_speed;
      if (e.threat) a.perceived_threat = *e.threat;
      if (e.competitiveness) a.competitiveness = *e.competitiveness;
    }
    agents.push_back(a);
  }
  return agents;
}

}  // namespace crush
