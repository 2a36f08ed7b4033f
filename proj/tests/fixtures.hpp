#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "crushsim/scenario.hpp"

namespace fixture {

using nlohmann::json;

// Rectangular room with a single exit on the east wall, centred at y = ey.
inline json room_doc(double w, double h, double ey, double exit_width) {
  return {{"schema", 1},
          {"name", "room"},
          {"room", {{"width", w}, {"height", h}}},
          {"exits", {{{"segment", {{w, ey - exit_width / 2}, {w, ey + exit_width / 2}}}}}}};
}

inline crush::Scenario room(double w, double h, double ey, double exit_width) {
  return crush::build_scenario(room_doc(w, h, ey, exit_width));
}

inline crush::Scenario canonical(const std::string& name) {
  return crush::load_scenario(std::filesystem::path(CRUSHSIM_SCENARIOS) / (name + ".json"));
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("crushsim_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace fixture
