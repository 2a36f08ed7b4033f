#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace crush {

enum class PipelineMode { Implicit, FullForce, Hybrid };

std::string to_string(PipelineMode mode);
PipelineMode parse_mode(const std::string& text);

// Social-force parameters. Defaults follow the usual pedestrian literature
// values; none of them are intrinsic to the pipeline.
struct MovementParams {
  double relaxation_time = 0.5;      // s
  double repulsion_strength = 2000;  // N
  double repulsion_range = 0.08;     // m
  double wall_repulsion_strength = 2000;
  double wall_repulsion_range = 0.08;
  double neighbor_cutoff = 2.0;  // m
  double speed_cap = 2.4;        // m/s
  double threat_relaxation = 2.0;  // s
  // Integration sub-steps per tick. The exponential repulsion is too stiff
  // for one explicit step of 0.05 s once agents are packed.
  std::size_t substeps = 5;
};

struct DetectorConfig {
  double phi_crit = 0.5;
  double mi_crit = 0.1;  // nats
  double hysteresis = 0.1;
  std::size_t window = 40;   // ticks
  std::size_t bins = 8;
  std::size_t subset_k = 10;  // 0 tracks every member
  double v_eps = 0.05;        // m/s
};

struct QualifyConfig {
  std::size_t window = 40;
  std::size_t stride = 10;
  double label_force = 250.0;  // N
  double label_sustain = 1.0;  // s
  double p_crit = 0.5;
  double quorum = 0.25;
  std::string model_path;  // empty: no classifier loaded
};

struct ContactForceParams {
  double body_stiffness = 1.2e5;        // N/m
  double friction_coefficient = 2.4e5;  // kg/(m s)
};

struct InjuryCutoff {
  double force = 0.0;    // N
  double sustain = 0.0;  // s
};

struct QuantifyConfig {
  ContactForceParams contact;
  std::vector<double> tiers{250.0, 1500.0};
  // Placeholders: not medically validated.
  InjuryCutoff at_risk{250.0, 1.0};
  InjuryCutoff critical{1500.0, 10.0};
  bool immobilize_on_critical = true;
  // Feed resolved contact forces back into the equations of motion of
  // agents that were quantified this tick.
  bool contact_feedback = false;
};

struct EscalationPolicy {
  std::size_t cooldown = 80;   // ticks
  double exit_force = 100.0;   // N, L3 -> L2 when the locale peak stays below
};

struct RunConfig {
  static constexpr int kSchema = 1;

  double dt = 0.05;
  double cell_size = 2.0;
  std::size_t log_interval = 1;
  PipelineMode mode = PipelineMode::Hybrid;
  std::uint64_t seed = 1;
  double max_time = 300.0;
  unsigned threads = 1;
  MovementParams movement;
  DetectorConfig detector;
  QualifyConfig qualify;
  QuantifyConfig quantify;
  EscalationPolicy escalation;
};

nlohmann::json to_json(const RunConfig& config);
// Reads a config document; missing keys keep their defaults. Rejects an
// unknown schema major version and out-of-range values with ConfigError.
RunConfig config_from_json(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);
void validate(const RunConfig& config);

}  // namespace crush
