#include "crushsim/archive.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <sstream>

#include <fmt/format.h>
#include <fmt/os.h>

#include "crushsim/error.hpp"

namespace crush {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_csv(const fs::path& path, std::string_view header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << header << '\n';
  return out;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IncompleteArchive("archive is missing " + path.filename().string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string phase_name(PhaseState s) { return s == PhaseState::Ordered ? "ordered" : "disordered"; }

// Minimal reader for the comma-separated files this module writes (no
// quoting, header row first).
struct CsvReader {
  std::ifstream in;
  fs::path path;
  std::size_t line_no = 1;
  std::vector<std::string_view> fields;
  std::string line;

  explicit CsvReader(const fs::path& p) : in(p), path(p) {
    if (!in) throw IncompleteArchive("archive is missing " + p.filename().string());
    std::getline(in, line);
  }

  bool next() {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      fields.clear();
      std::string_view rest(line);
      for (;;) {
        const auto comma = rest.find(',');
        fields.push_back(rest.substr(0, comma));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
      return true;
    }
    return false;
  }

  template <typename T>
  T get(std::size_t k) const {
    if (k >= fields.size())
      throw ParseError(fmt::format("{}:{}: expected at least {} fields", path.string(), line_no, k + 1));
    T value{};
    const auto f = fields[k];
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
    if (ec != std::errc() || ptr != f.data() + f.size())
      throw ParseError(fmt::format("{}:{}: bad number '{}'", path.string(), line_no, f));
    return value;
  }
};

}  // namespace

const std::vector<std::string>& archive_files() {
  static const std::vector<std::string> files{
      "config.json",     "scenario.json",    "metadata.json",    "trajectory.csv",
      "verdicts.csv",    "transitions.csv",  "exposure.csv",     "exits.csv",
      "cost_summary.json", "metrics.json",   "injury_report.json"};
  return files;
}

ArchiveWriter::ArchiveWriter(const fs::path& dir, const Simulation& sim) : dir_(dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create " + dir.string() + ": " + ec.message());

  json config = to_json(sim.config());
  config["archive_schema"] = kArchiveSchema;
  write_json(dir / "config.json", config);
  write_json(dir / "scenario.json", to_json(sim.scenario()));

  trajectory_ = open_csv(dir / "trajectory.csv",
                         "tick,time,agent_id,x,y,vx,vy,locale_i,locale_j,analysis_level");
  verdicts_ = open_csv(dir / "verdicts.csv", "tick,locale_i,locale_j,state,phi,mi,confidence");
  transitions_ = open_csv(dir / "transitions.csv", "tick,locale_i,locale_j,from_level,to_level,trigger");
  exposure_ = open_csv(dir / "exposure.csv", "tick,agent_id,normal_force_total,peak_to_date");
  exits_ = open_csv(dir / "exits.csv", "tick,time,agent_id,exit_index");
  record_features_ = sim.config().mode == PipelineMode::FullForce;
  if (record_features_) {
    std::string header = "tick,agent_id";
    for (const char* name : kFeatureNames) header += fmt::format(",{}", name);
    features_ = open_csv(dir / "features.csv", header);
  }
  peak_.assign(sim.agents().size(), 0.0);

  std::map<CellKey, Level> levels;
  const Level initial = pinned_level(sim.config().mode).value_or(Level::Identify);
  for (const auto& [key, members] : sim.grid().cells) levels[key] = initial;
  write_trajectory(sim, sim.tick(), levels);
}

void ArchiveWriter::write_trajectory(const Simulation& sim, std::uint64_t tick,
                                     const std::map<CellKey, Level>& levels) {
  if (tick % sim.config().log_interval != 0) return;
  const double time = static_cast<double>(tick) * sim.config().dt;
  const double cell = sim.config().cell_size;
  std::string buf;
  for (const auto& a : sim.agents()) {
    if (!a.active()) continue;
    const CellKey key = cell_of(a.position, cell);
    auto it = levels.find(key);
    const int level = static_cast<int>(it == levels.end() ? Level::Identify : it->second);
    fmt::format_to(std::back_inserter(buf), "{},{},{},{},{},{},{},{},{},{}\n", tick, time, a.id,
                   a.position.x, a.position.y, a.velocity.x, a.velocity.y, key.i, key.j, level);
  }
  trajectory_ << buf;
}

void ArchiveWriter::on_tick(const Simulation& sim, const TickReport& r) {
  write_trajectory(sim, r.tick, r.levels);
  std::string buf;
  for (const auto& v : r.verdicts)
    fmt::format_to(std::back_inserter(buf), "{},{},{},{},{},{},{}\n", r.tick, v.locale.i, v.locale.j,
                   phase_name(v.verdict.state), v.verdict.phi_mean, v.verdict.mi_value,
                   v.verdict.confidence);
  verdicts_ << buf;
  buf.clear();
  for (const auto& t : r.transitions)
    fmt::format_to(std::back_inserter(buf), "{},{},{},{},{},{}\n", r.tick, t.locale.i, t.locale.j,
                   to_string(t.transition.from), to_string(t.transition.to), t.transition.trigger);
  transitions_ << buf;
  buf.clear();
  for (std::size_t id : r.covered) {
    const double f = r.forces.normal_total[id];
    peak_[id] = std::max(peak_[id], f);
    fmt::format_to(std::back_inserter(buf), "{},{},{},{}\n", r.tick, id, f, peak_[id]);
  }
  exposure_ << buf;
  buf.clear();
  for (const auto& e : r.exits)
    fmt::format_to(std::back_inserter(buf), "{},{},{},{}\n", e.tick, e.time, e.agent_id, e.exit_index);
  exits_ << buf;
  if (record_features_) {
    buf.clear();
    for (const auto& a : sim.agents()) {
      if (!a.active()) continue;
      fmt::format_to(std::back_inserter(buf), "{},{}", r.tick, a.id);
      for (double v : r.features[a.id]) fmt::format_to(std::back_inserter(buf), ",{}", v);
      buf += '\n';
    }
    features_ << buf;
  }
}

void ArchiveWriter::finish(const Simulation& sim, const std::string& status) {
  for (auto* s : {&trajectory_, &verdicts_, &transitions_, &exposure_, &exits_, &features_})
    if (s->is_open()) s->close();

  const auto& c = sim.counters();
  auto cost_json = [](const CostEstimate& e) {
    return json{{"mi_evaluations", e.mi_evaluations},
                {"classifier_forward_passes", e.classifier_forward_passes},
                {"force_pair_evaluations", e.force_pair_evaluations}};
  };
  json per_locale = json::array();
  for (const auto& [key, e] : c.per_locale) {
    json row = cost_json(e);
    row["locale_i"] = key.i;
    row["locale_j"] = key.j;
    per_locale.push_back(row);
  }
  json cost{{"schema", kArchiveSchema},
            {"mode", to_string(sim.config().mode)},
            {"status", status},
            {"ticks", sim.tick()},
            {"total", cost_json(c.total)},
            {"per_level",
             {{"L1", cost_json(c.per_level[0])},
              {"L2", cost_json(c.per_level[1])},
              {"L3", cost_json(c.per_level[2])}}},
            {"per_locale", per_locale}};
  write_json(dir_ / "cost_summary.json", cost);

  const EgressTimes egress =
      egress_times(sim.exit_log(), sim.agents().size(), sim.scenario().aset);
  json metrics = metrics_report(egress, sim.finished_density_history(), sim.fruin_timeline());
  metrics["status"] = status;
  write_json(dir_ / "metrics.json", metrics);

  const auto& q = sim.config().quantify;
  InjuryReportConfig ir{q.at_risk, q.critical, q.tiers};
  write_json(dir_ / "injury_report.json", injury_report(sim.exposure(), ir, sim.config().dt));

  const auto now = std::chrono::system_clock::now();
  write_json(dir_ / "metadata.json",
             {{"schema", kArchiveSchema},
              {"written_at_unix_ms",
               std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count()}});
}

RunOutcome run_to_archive(const Scenario& scenario, const RunConfig& config,
                          const fs::path& out_dir, std::shared_ptr<const Classifier> model) {
  Simulation sim(scenario, config, seed_agents(scenario, scenario.population, config.seed),
                 std::move(model));
  ArchiveWriter writer(out_dir, sim);
  TickObserver* observers[] = {&writer};
  RunOutcome out;
  try {
    sim.run(observers);
  } catch (const NumericError&) {
    writer.finish(sim, "numeric-error");
    throw;
  }
  out.status = sim.timed_out() ? RunStatus::TimedOut : RunStatus::Completed;
  out.ticks = sim.tick();
  out.time = sim.time();
  writer.finish(sim, out.status == RunStatus::Completed ? "completed" : "timed-out");
  return out;
}

void check_archive(const fs::path& archive) {
  if (!fs::is_directory(archive)) throw IncompleteArchive("archive directory not found: " + archive.string());
  for (const auto& f : archive_files())
    if (!fs::exists(archive / f)) throw IncompleteArchive("archive is missing " + f);
}

TrainingRun load_training_run(const fs::path& archive) {
  const json config = read_json(archive / "config.json");
  const std::string mode = config.value("mode", "");
  if (mode != to_string(PipelineMode::FullForce))
    throw ModeError("training needs a full-force archive, got mode '" + mode + "'");
  TrainingRun run;
  run.mode = mode;
  run.run_id = config.value("seed", std::uint64_t{0});
  run.dt = config.value("dt", 0.05);

  std::map<std::pair<std::uint64_t, std::size_t>, double> force;
  CsvReader exposure(archive / "exposure.csv");
  while (exposure.next())
    force[{exposure.get<std::uint64_t>(0), exposure.get<std::size_t>(1)}] = exposure.get<double>(2);

  CsvReader features(archive / "features.csv");
  while (features.next()) {
    const auto tick = features.get<std::uint64_t>(0);
    const auto id = features.get<std::size_t>(1);
    FeatureRow row{};
    for (std::size_t k = 0; k < kFeatureCount; ++k) row[k] = features.get<double>(2 + k);
    auto it = force.find({tick, id});
    if (it == force.end())
      throw ParseError(fmt::format("{}:{}: no exposure row for agent {} at tick {}",
                                   features.path.string(), features.line_no, id, tick));
    AgentSeries& s = run.agents[id];
    if (s.features.empty()) s.first_tick = tick;
    else if (s.first_tick + s.features.size() != tick)
      throw ParseError(fmt::format("{}:{}: gap in agent {} series", features.path.string(),
                                   features.line_no, id));
    s.features.push_back(row);
    s.normal_force.push_back(it->second);
  }
  return run;
}

std::string report_text(const fs::path& archive) {
  check_archive(archive);
  const json config = read_json(archive / "config.json");
  const json metrics = read_json(archive / "metrics.json");
  const json cost = read_json(archive / "cost_summary.json");
  const json injury = read_json(archive / "injury_report.json");

  std::size_t transitions = 0;
  {
    CsvReader t(archive / "transitions.csv");
    while (t.next()) ++transitions;
  }

  std::string out;
  auto line = [&]<typename... A>(fmt::format_string<A...> f, A&&... args) {
    out += fmt::format(f, std::forward<A>(args)...);
    out += '\n';
  };
  line("mode: {}  seed: {}  status: {}", config.value("mode", "?"),
       config.value("seed", std::uint64_t{0}), metrics.value("status", "?"));
  const auto& rset = metrics["rset"];
  line("rset: {}", rset.is_number() ? fmt::format("{:.2f} s", rset.get<double>()) : rset.dump());
  line("aset: {}", metrics["aset"].is_number()
                       ? fmt::format("{:.2f} s", metrics["aset"].get<double>())
                       : std::string("not configured"));
  line("verdict: {}", metrics.value("verdict", "?"));
  line("worst fruin level: {}", metrics["fruin"].value("worst_level", "?"));
  const auto& imo = metrics["imo"];
  if (imo.value("evaluated", false))
    line("imo: {} (worst locale {:.1f}% of time at >= 4 p/m2)", imo.value("pass", false) ? "pass" : "FAIL",
         100.0 * imo.value("violating_fraction", 0.0));
  else
    line("imo: not evaluated (run incomplete)");
  line("level transitions: {}", transitions);
  const auto& total = cost["total"];
  line("cost: {} force pair evaluations, {} MI evaluations, {} classifier passes",
       total.value("force_pair_evaluations", std::uint64_t{0}),
       total.value("mi_evaluations", std::uint64_t{0}),
       total.value("classifier_forward_passes", std::uint64_t{0}));

  line("");
  line("exposure (top 10 by peak):");
  const auto& agents = injury["agents"];
  if (agents.empty()) {
    line("  no force data collected");
  } else {
    line("  {:>6} {:>10} {:>8} {:>8}", "agent", "peak [N]", "at-risk", "critical");
    std::size_t shown = 0;
    for (const auto& a : agents) {
      line("  {:>6} {:>10.1f} {:>8} {:>8}", a.value("agent_id", 0), a.value("peak", 0.0),
           a.value("at_risk", false) ? "yes" : "no", a.value("critical", false) ? "yes" : "no");
      if (++shown == 10) break;
    }
  }
  line("");
  line("metrics:");
  out += metrics.dump(2);
  out += '\n';
  return out;
}

void RunRecorder::on_tick(const Simulation& sim, const TickReport& r) {
  const auto agents = sim.agents();
  Tick t;
  t.tick = r.tick;
  t.position.reserve(agents.size());
  t.velocity.reserve(agents.size());
  t.active.reserve(agents.size());
  t.agent_level.assign(agents.size(), Level::Identify);
  for (const auto& a : agents) {
    t.position.push_back(a.position);
    t.velocity.push_back(a.velocity);
    t.active.push_back(a.active());
    if (a.active()) {
      auto it = r.levels.find(cell_of(a.position, sim.config().cell_size));
      if (it != r.levels.end()) t.agent_level[a.id] = it->second;
    }
  }
  t.covered = r.covered;
  t.normal_total.assign(agents.size(), 0.0);
  for (std::size_t id : r.covered) {
    t.covered_force.push_back(r.forces.force[id]);
    t.normal_total[id] = r.forces.normal_total[id];
    t.net_contact_force += r.forces.force[id];
  }
  t.wall_reaction = r.forces.wall_reaction;
  t.net_contact_force += r.forces.wall_reaction;
  t.transitions = r.transitions;
  ticks.push_back(std::move(t));

  if (keep_features_) {
    training.mode = to_string(sim.config().mode);
    training.run_id = sim.config().seed;
    training.dt = sim.config().dt;
    for (const auto& a : agents) {
      if (!a.active()) continue;
      AgentSeries& s = training.agents[a.id];
      if (s.features.empty()) s.first_tick = r.tick;
      s.features.push_back(r.features[a.id]);
      s.normal_force.push_back(r.forces.normal_total.empty() ? 0.0 : r.forces.normal_total[a.id]);
    }
  }
}

json BenchmarkResult::to_json() const {
  auto cost_json = [](const CostCounters& c) {
    return json{{"force_pair_evaluations", c.total.force_pair_evaluations},
                {"mi_evaluations", c.total.mi_evaluations},
                {"classifier_forward_passes", c.total.classifier_forward_passes}};
  };
  return json{{"schema", kArchiveSchema},
              {"full_force", cost_json(full_force)},
              {"hybrid", cost_json(hybrid)},
              {"force_pair_ratio", pair_ratio},
              {"first_divergence_tick", first_divergence ? json(*first_divergence) : json(nullptr)},
              {"force_agreement",
               {{"compared_agent_ticks", compared_agent_ticks}, {"mismatches", force_mismatches}}},
              {"escalation",
               {{"events", escalation_events}, {"hits", escalation_hits}, {"hit_rate", hit_rate()}}},
              {"transitions", {{"L1_to_L2", l1_to_l2}, {"L2_to_L3", l2_to_l3}}}};
}

BenchmarkResult run_benchmark(const Scenario& scenario, const RunConfig& config,
                              std::shared_ptr<const Classifier> model) {
  const auto agents = seed_agents(scenario, scenario.population, config.seed);

  RunConfig full_cfg = config;
  full_cfg.mode = PipelineMode::FullForce;
  RunRecorder full;
  Simulation full_sim(scenario, full_cfg, agents, model);
  {
    TickObserver* obs[] = {&full};
    full_sim.run(obs);
  }

  RunConfig hybrid_cfg = config;
  hybrid_cfg.mode = PipelineMode::Hybrid;
  RunRecorder hybrid;
  Simulation hybrid_sim(scenario, hybrid_cfg, agents, model);
  {
    TickObserver* obs[] = {&hybrid};
    hybrid_sim.run(obs);
  }

  BenchmarkResult b;
  b.full_force = full_sim.counters();
  b.hybrid = hybrid_sim.counters();
  const auto full_pairs = b.full_force.total.force_pair_evaluations;
  b.pair_ratio = full_pairs == 0 ? 0.0
                                 : static_cast<double>(b.hybrid.total.force_pair_evaluations) /
                                       static_cast<double>(full_pairs);

  const std::size_t common = std::min(full.ticks.size(), hybrid.ticks.size());
  for (std::size_t k = 0; k < common; ++k) {
    const auto& f = full.ticks[k];
    const auto& h = hybrid.ticks[k];
    if (f.position != h.position || f.velocity != h.velocity || f.active != h.active) {
      b.first_divergence = f.tick;
      break;
    }
    // Every agent is covered in full-force, so its force sits at index id.
    for (std::size_t c = 0; c < h.covered.size(); ++c) {
      const std::size_t id = h.covered[c];
      const auto pos = std::lower_bound(f.covered.begin(), f.covered.end(), id) - f.covered.begin();
      ++b.compared_agent_ticks;
      const Vec2 a = h.covered_force[c], e = f.covered_force[static_cast<std::size_t>(pos)];
      if (std::bit_cast<std::uint64_t>(a.x) != std::bit_cast<std::uint64_t>(e.x) ||
          std::bit_cast<std::uint64_t>(a.y) != std::bit_cast<std::uint64_t>(e.y))
        ++b.force_mismatches;
    }
  }
  if (!b.first_divergence && full.ticks.size() != hybrid.ticks.size())
    b.first_divergence = common + 1;

  // Escalation soundness: the tick an agent's sustained-force label turns on
  // in full-force, was that agent inside an L3 locale in the hybrid run?
  const double dt = config.dt;
  const auto sustain = ticks_for(config.qualify.label_sustain, dt);
  std::vector<std::uint64_t> run(agents.size(), 0);
  for (std::size_t k = 0; k < full.ticks.size(); ++k) {
    const auto& f = full.ticks[k];
    for (std::size_t id = 0; id < agents.size(); ++id) {
      const bool above = f.active[id] && f.normal_total[id] >= config.qualify.label_force;
      run[id] = above ? run[id] + 1 : 0;
      if (run[id] != sustain) continue;
      ++b.escalation_events;
      if (k < hybrid.ticks.size() && hybrid.ticks[k].agent_level[id] == Level::Quantify)
        ++b.escalation_hits;
    }
  }

  for (const auto& t : hybrid.ticks)
    for (const auto& tr : t.transitions) {
      if (tr.transition.from == Level::Identify && tr.transition.to == Level::Qualify) ++b.l1_to_l2;
      if (tr.transition.from == Level::Qualify && tr.transition.to == Level::Quantify) ++b.l2_to_l3;
    }
  return b;
}

}  // namespace crush
