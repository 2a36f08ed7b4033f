#include "crushsim/config.hpp"

#include <cmath>
#include <fstream>

#include "crushsim/error.hpp"

namespace crush {

using nlohmann::json;

std::string to_string(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::Implicit: return "implicit";
    case PipelineMode::FullForce: return "full-force";
    case PipelineMode::Hybrid: return "hybrid";
  }
  return "?";
}

PipelineMode parse_mode(const std::string& text) {
  if (text == "implicit") return PipelineMode::Implicit;
  if (text == "full-force") return PipelineMode::FullForce;
  if (text == "hybrid") return PipelineMode::Hybrid;
  throw ConfigError("unknown pipeline mode '" + text + "' (implicit, full-force, hybrid)");
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j[key].get<T>();
}

}  // namespace

json to_json(const RunConfig& c) {
  const auto& m = c.movement;
  const auto& d = c.detector;
  const auto& q = c.qualify;
  const auto& f = c.quantify;
  return {
      {"schema", RunConfig::kSchema},
      {"dt", c.dt},
      {"cell_size", c.cell_size},
      {"log_interval", c.log_interval},
      {"mode", to_string(c.mode)},
      {"seed", c.seed},
      {"max_time", c.max_time},
      {"threads", c.threads},
      {"movement",
       {{"relaxation_time", m.relaxation_time},
        {"repulsion_strength", m.repulsion_strength},
        {"repulsion_range", m.repulsion_range},
        {"wall_repulsion_strength", m.wall_repulsion_strength},
        {"wall_repulsion_range", m.wall_repulsion_range},
        {"neighbor_cutoff", m.neighbor_cutoff},
        {"speed_cap", m.speed_cap},
        {"threat_relaxation", m.threat_relaxation},
        {"substeps", m.substeps}}},
      {"detector",
       {{"phi_crit", d.phi_crit},
        {"mi_crit", d.mi_crit},
        {"hysteresis", d.hysteresis},
        {"window", d.window},
        {"bins", d.bins},
        {"subset_k", d.subset_k},
        {"v_eps", d.v_eps}}},
      {"qualify",
       {{"window", q.window},
        {"stride", q.stride},
        {"label_force", q.label_force},
        {"label_sustain", q.label_sustain},
        {"p_crit", q.p_crit},
        {"quorum", q.quorum},
        {"model", q.model_path}}},
      {"quantify",
       {{"body_stiffness", f.contact.body_stiffness},
        {"friction_coefficient", f.contact.friction_coefficient},
        {"tiers", f.tiers},
        {"at_risk", {{"force", f.at_risk.force}, {"sustain", f.at_risk.sustain}}},
        {"critical", {{"force", f.critical.force}, {"sustain", f.critical.sustain}}},
        {"immobilize_on_critical", f.immobilize_on_critical},
        {"contact_feedback", f.contact_feedback},
        {"note", "injury cutoffs are configuration placeholders, not medical data"}}},
      {"escalation",
       {{"cooldown", c.escalation.cooldown}, {"exit_force", c.escalation.exit_force}}},
  };
}

RunConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected an object");
  const int schema = doc.value("schema", RunConfig::kSchema);
  if (schema != RunConfig::kSchema)
    throw ConfigError("config: unsupported schema " + std::to_string(schema));
  RunConfig c;
  try {
    read(doc, "dt", c.dt);
    read(doc, "cell_size", c.cell_size);
    read(doc, "log_interval", c.log_interval);
    if (doc.contains("mode")) c.mode = parse_mode(doc["mode"].get<std::string>());
    read(doc, "seed", c.seed);
    read(doc, "max_time", c.max_time);
    read(doc, "threads", c.threads);
    if (doc.contains("movement")) {
      const auto& j = doc["movement"];
      auto& m = c.movement;
      read(j, "relaxation_time", m.relaxation_time);
      read(j, "repulsion_strength", m.repulsion_strength);
      read(j, "repulsion_range", m.repulsion_range);
      read(j, "wall_repulsion_strength", m.wall_repulsion_strength);
      read(j, "wall_repulsion_range", m.wall_repulsion_range);
      read(j, "neighbor_cutoff", m.neighbor_cutoff);
      read(j, "speed_cap", m.speed_cap);
      read(j, "threat_relaxation", m.threat_relaxation);
      read(j, "substeps", m.substeps);
    }
    if (doc.contains("detector")) {
      const auto& j = doc["detector"];
      auto& d = c.detector;
      read(j, "phi_crit", d.phi_crit);
      read(j, "mi_crit", d.mi_crit);
      read(j, "hysteresis", d.hysteresis);
      read(j, "window", d.window);
      read(j, "bins", d.bins);
      read(j, "subset_k", d.subset_k);
      read(j, "v_eps", d.v_eps);
    }
    if (doc.contains("qualify")) {
      const auto& j = doc["qualify"];
      auto& q = c.qualify;
      read(j, "window", q.window);
      read(j, "stride", q.stride);
      read(j, "label_force", q.label_force);
      read(j, "label_sustain", q.label_sustain);
      read(j, "p_crit", q.p_crit);
      read(j, "quorum", q.quorum);
      read(j, "model", q.model_path);
    }
    if (doc.contains("quantify")) {
      const auto& j = doc["quantify"];
      auto& f = c.quantify;
      read(j, "body_stiffness", f.contact.body_stiffness);
      read(j, "friction_coefficient", f.contact.friction_coefficient);
      read(j, "tiers", f.tiers);
      if (j.contains("at_risk")) {
        read(j["at_risk"], "force", f.at_risk.force);
        read(j["at_risk"], "sustain", f.at_risk.sustain);
      }
      if (j.contains("critical")) {
        read(j["critical"], "force", f.critical.force);
        read(j["critical"], "sustain", f.critical.sustain);
      }
      read(j, "immobilize_on_critical", f.immobilize_on_critical);
      read(j, "contact_feedback", f.contact_feedback);
    }
    if (doc.contains("escalation")) {
      read(doc["escalation"], "cooldown", c.escalation.cooldown);
      read(doc["escalation"], "exit_force", c.escalation.exit_force);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void validate(const RunConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("config: ") + what);
  };
  require(c.dt > 0 && std::isfinite(c.dt), "dt must be positive");
  require(c.cell_size > 0, "cell_size must be positive");
  require(c.log_interval >= 1, "log_interval must be >= 1");
  require(c.max_time >= 0, "max_time must be non-negative");
  const auto& m = c.movement;
  require(m.relaxation_time > 0 && m.repulsion_strength > 0 && m.repulsion_range > 0 &&
              m.wall_repulsion_strength > 0 && m.wall_repulsion_range > 0 &&
              m.neighbor_cutoff > 0 && m.speed_cap > 0 && m.threat_relaxation > 0,
          "movement parameters must be strictly positive");
  require(m.substeps >= 1, "movement.substeps must be >= 1");
  const auto& d = c.detector;
  require(d.window >= 2, "detector.window must be >= 2");
  require(d.bins >= 2, "detector.bins must be >= 2");
  require(d.phi_crit > 0 && d.phi_crit < 1, "detector.phi_crit must lie in (0, 1)");
  require(d.hysteresis >= 0, "detector.hysteresis must be non-negative");
  const auto& q = c.qualify;
  require(q.window >= 1 && q.stride >= 1, "qualify window and stride must be >= 1");
  require(q.p_crit > 0 && q.p_crit < 1, "qualify.p_crit must lie in (0, 1)");
  require(q.quorum >= 0 && q.quorum <= 1, "qualify.quorum must lie in [0, 1]");
  const auto& f = c.quantify;
  require(f.contact.body_stiffness >= 0 && f.contact.friction_coefficient >= 0,
          "contact parameters must be non-negative");
}

}  // namespace crush
