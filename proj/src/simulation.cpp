#include "crushsim/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "crushsim/error.hpp"
#include "crushsim/movement.hpp"
#include "crushsim/parallel.hpp"
#include "crushsim/random.hpp"

namespace crush {

namespace {

constexpr double kNeighborhoodRadius = 1.0;  // m, for the density feature

std::size_t level_index(Level level) { return static_cast<std::size_t>(level) - 1; }

// Ids within `radius` of `p` found through a grid whose cells are at least
// `radius` wide.
void gather_within(const LocaleGrid& grid, std::span<const AgentState> agents, Vec2 p,
                   double radius, std::vector<const AgentState*>& out) {
  out.clear();
  const CellKey c = cell_of(p, grid.cell_size);
  for (int di = -1; di <= 1; ++di)
    for (int dj = -1; dj <= 1; ++dj)
      if (const auto* m = grid.members({c.i + di, c.j + dj}))
        for (std::size_t id : *m)
          if ((agents[id].position - p).norm() <= radius) out.push_back(&agents[id]);
  std::sort(out.begin(), out.end(),
            [](const AgentState* a, const AgentState* b) { return a->id < b->id; });
}

}  // namespace

void CostCounters::add(CellKey locale, Level level, const CostEstimate& cost) {
  total += cost;
  per_locale[locale] += cost;
  per_level[level_index(level)] += cost;
}

std::vector<double> flatten_window(const std::vector<FeatureRow>& ring, std::size_t fill,
                                   std::size_t window) {
  std::vector<double> out;
  out.reserve(window * kFeatureCount);
  const std::size_t start = fill % window;
  for (std::size_t k = 0; k < window; ++k) {
    const auto& row = ring[(start + k) % window];
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

Simulation::Simulation(Scenario scenario, RunConfig config, std::vector<AgentState> agents,
                       std::shared_ptr<const Classifier> model)
    : scenario_(std::move(scenario)),
      config_(std::move(config)),
      model_(std::move(model)),
      agents_(std::move(agents)) {
  validate(config_);
  double min_radius = std::numeric_limits<double>::infinity(), max_radius = 0.0, mass_sum = 0.0;
  for (std::size_t k = 0; k < agents_.size(); ++k) {
    auto& a = agents_[k];
    if (a.id != k) throw ConfigError("agent ids must equal their index");
    if (!(a.mass > 0) || !(a.radius > 0) || !(a.desired_speed >= 0))
      throw ConfigError("agent " + std::to_string(k) + " has non-positive mass/radius or negative speed");
    min_radius = std::min(min_radius, a.radius);
    max_radius = std::max(max_radius, a.radius);
    mass_sum += a.mass;
  }
  mean_mass_ = agents_.empty() ? 1.0 : mass_sum / static_cast<double>(agents_.size());

  const double limit = std::min(min_radius, config_.cell_size) / 2.0;
  if (!(config_.movement.speed_cap * config_.dt < limit))
    throw ConfigError("dt too large: speed_cap * dt must stay below min(radius, cell_size) / 2");
  if (config_.movement.neighbor_cutoff < 2.0 * max_radius)
    throw ConfigError("neighbor_cutoff must be at least twice the largest agent radius");
  if (model_ && (model_->window() != config_.qualify.window || model_->features() != kFeatureCount))
    throw ConfigError("classifier window/features do not match qualify.window");

  for (auto& a : agents_) {
    a.target_exit = choose_exit(a, scenario_);
    a.heading = desired_direction(a, scenario_, a.heading);
  }
  active_count_ = static_cast<std::size_t>(
      std::count_if(agents_.begin(), agents_.end(), [](const AgentState& a) { return a.active(); }));

  grid_ = partition_locales(agents_, config_.cell_size, 0);
  exposure_.reserve(agents_.size());
  for (const auto& a : agents_) exposure_.push_back(make_exposure_record(a.id, config_.quantify.tiers.size()));
  critical_run_.assign(agents_.size(), 0.0);
  feedback_force_.assign(agents_.size(), Vec2{});
  features_.assign(agents_.size(), FeatureRow{});
  windows_.assign(agents_.size(), std::vector<FeatureRow>(config_.qualify.window));
  window_fill_.assign(agents_.size(), 0);
}

bool Simulation::timed_out() const { return !evacuated() && time() >= config_.max_time; }

void Simulation::run(std::span<TickObserver* const> observers) {
  while (!evacuated() && time() < config_.max_time) step(observers);
}

DensityHistory Simulation::finished_density_history() const {
  DensityHistory h = density_;
  h.duration = time();
  h.complete = evacuated();
  return h;
}

void Simulation::move_agents(std::vector<ExitEvent>& exits) {
  const std::uint64_t tick = tick_ + 1;
  const auto& params = config_.movement;
  const double h = config_.dt / static_cast<double>(params.substeps);
  const double now = static_cast<double>(tick) * config_.dt;

  std::vector<std::size_t> active;
  for (const auto& a : agents_)
    if (a.active()) active.push_back(a.id);

  // Neighbour lists, headings and targets are fixed for the whole tick.
  const LocaleGrid neighbor_grid = partition_locales(agents_, params.neighbor_cutoff);
  std::vector<std::vector<std::size_t>> near(agents_.size());
  std::vector<Vec2> dirs(agents_.size());
  std::vector<std::size_t> targets(agents_.size());
  parallel_for(active.size(), config_.threads, [&](std::size_t k) {
    const AgentState& a = agents_[active[k]];
    std::vector<const AgentState*> found;
    gather_within(neighbor_grid, agents_, a.position, params.neighbor_cutoff, found);
    for (const AgentState* o : found)
      if (o->id != a.id) near[a.id].push_back(o->id);
    AgentState probe = a;
    probe.target_exit = choose_exit(a, scenario_);
    targets[a.id] = probe.target_exit;
    dirs[a.id] = desired_direction(probe, scenario_, a.heading);
  });

  std::vector<AgentState> cur = agents_;
  for (std::size_t id : active) {
    cur[id].target_exit = targets[id];
    cur[id].heading = dirs[id];
  }
  std::vector<AgentState> next = cur;
  for (std::size_t sub = 0; sub < params.substeps; ++sub) {
    parallel_for(active.size(), config_.threads, [&](std::size_t k) {
      const AgentState& a = cur[active[k]];
      if (!a.active()) return;
      if (a.immobile) {
        next[a.id].velocity = {};
        return;
      }
      std::vector<const AgentState*> neighbors;
      for (std::size_t o : near[a.id])
        if (cur[o].active()) neighbors.push_back(&cur[o]);
      const Vec2 force = social_force(a, dirs[a.id], neighbors, scenario_.solid, params,
                                      config_.seed, tick) +
                         feedback_force_[a.id];
      AgentState moved = keep_inside(a, integrate(a, force, h, params.speed_cap), scenario_.solid);
      if (!moved.position.finite() || !moved.velocity.finite())
        throw NumericError("non-finite state at tick " + std::to_string(tick) + " for agent " +
                           std::to_string(a.id));
      next[a.id] = moved;
    });
    for (std::size_t id : active) {
      if (!cur[id].active()) continue;
      const Segment path{cur[id].position, next[id].position};
      if (path.a == path.b) continue;
      for (std::size_t e = 0; e < scenario_.exits.size(); ++e) {
        if (!segments_intersect(path, scenario_.exits[e].segment)) continue;
        next[id].evacuated_at = now;
        next[id].velocity = {};
        exits.push_back({tick, now, id, e});
        --active_count_;
        break;
      }
    }
    cur = next;
  }

  // Threat spreads once per tick from the start-of-tick snapshot.
  parallel_for(active.size(), config_.threads, [&](std::size_t k) {
    const std::size_t id = active[k];
    std::vector<const AgentState*> neighbors;
    for (std::size_t o : near[id]) neighbors.push_back(&agents_[o]);
    cur[id].perceived_threat = relax_threat(agents_[id], neighbors, config_.dt, params.threat_relaxation);
  });
  agents_ = std::move(cur);
}

void Simulation::compute_features() {
  const LocaleGrid near = partition_locales(agents_, kNeighborhoodRadius);
  const double area = grid_.cell_area();
  const double disc = std::numbers::pi * kNeighborhoodRadius * kNeighborhoodRadius;
  std::vector<std::size_t> active;
  for (const auto& a : agents_)
    if (a.active()) active.push_back(a.id);
  parallel_for(active.size(), config_.threads, [&](std::size_t k) {
    const AgentState& a = agents_[active[k]];
    const auto* members = grid_.members(cell_of(a.position, grid_.cell_size));
    const double locale_density = static_cast<double>(members ? members->size() : 0) / area;
    const PiFeatures pi = pi_features(a, a.heading, locale_density, mean_mass_);
    std::vector<const AgentState*> close;
    gather_within(near, agents_, a.position, kNeighborhoodRadius, close);
    const double others = static_cast<double>(close.size()) - 1.0;
    const double diameter = 2.0 * a.radius;
    features_[a.id] = {pi.speed_ratio, pi.alignment, pi.density_star, pi.mass_ratio,
                       pi.threat,      pi.competitiveness, others / disc * diameter * diameter};
    const std::size_t window = windows_[a.id].size();
    windows_[a.id][window_fill_[a.id] % window] = features_[a.id];
    ++window_fill_[a.id];
  });
}

std::map<CellKey, bool> Simulation::detector_readiness() const {
  std::map<CellKey, bool> ready;
  for (const auto& [key, members] : grid_.cells) {
    auto it = detectors_.find(key);
    const std::size_t next_size =
        std::min(config_.detector.window, (it == detectors_.end() ? 0 : it->second.signal.size()) + 1);
    ready[key] = 2 * next_size >= config_.detector.window;
  }
  return ready;
}

void Simulation::step(std::span<TickObserver* const> observers) {
  const std::uint64_t tick = tick_ + 1;
  TickReport report;
  report.tick = tick;
  report.time = static_cast<double>(tick) * config_.dt;

  move_agents(report.exits);
  grid_ = partition_locales(agents_, config_.cell_size, grid_.generation + 1);
  std::size_t covered_count = 0;
  for (const auto& [key, members] : grid_.cells) covered_count += members.size();
  if (covered_count != active_count_)
    throw NumericError("locale partition lost agents at tick " + std::to_string(tick));

  compute_features();

  const auto pinned = pinned_level(config_.mode);
  for (const auto& [key, members] : grid_.cells) {
    if (!analyses_.contains(key)) {
      LocaleAnalysis a;
      a.locale = key;
      a.level = pinned.value_or(Level::Identify);
      analyses_.emplace(key, a);
    }
    if (!detectors_.contains(key)) detectors_.emplace(key, LocaleDetector(config_.detector.window));
  }

  std::vector<std::uint8_t> window_ready(agents_.size(), 0);
  for (std::size_t k = 0; k < agents_.size(); ++k)
    window_ready[k] = agents_[k].active() && window_fill_[k] >= config_.qualify.window;
  const TickPlan plan = plan_tick(analyses_, grid_, config_.mode, model_ != nullptr, window_ready,
                                  detector_readiness(), agents_, scenario_.solid.size());

  const std::size_t n_locales = plan.locales.size();
  std::vector<std::optional<TransitionVerdict>> verdicts(n_locales);
  std::vector<std::optional<QualifyOutcome>> outcomes(n_locales);
  std::vector<CostEstimate> cost(n_locales);

  // Identification.
  std::vector<LocaleDetector*> detectors(n_locales, nullptr);
  for (std::size_t l = 0; l < n_locales; ++l)
    if (plan.locales[l].update_detector) detectors[l] = &detectors_.at(plan.locales[l].locale);
  parallel_for(n_locales, config_.threads, [&](std::size_t l) {
    LocaleDetector* det = detectors[l];
    if (!det) return;
    const CellKey key = plan.locales[l].locale;
    const auto& members = grid_.cells.at(key);
    det->signal.update_subset(members, config_.detector.subset_k,
                              hash_words({config_.seed, static_cast<std::uint64_t>(key.i),
                                          static_cast<std::uint64_t>(key.j)}));
    SubsetSample sample;
    std::vector<Vec2> velocities;
    for (std::size_t id : det->signal.subset()) {
      velocities.push_back(agents_[id].velocity);
      sample.speed_ratio.push_back(features_[id][0]);
      sample.alignment.push_back(features_[id][1]);
    }
    const OrderParameter op = order_parameter(velocities, config_.detector.v_eps);
    sample.phi = op.phi;
    sample.stagnant = op.stagnant;
    verdicts[l] = det->observe(std::move(sample), config_.detector);
    if (verdicts[l]) cost[l].mi_evaluations = 1;
  });

  // Qualification.
  std::vector<std::pair<std::size_t, std::size_t>> jobs;  // (locale slot, agent)
  for (std::size_t l = 0; l < n_locales; ++l)
    for (std::size_t id : plan.locales[l].classify) jobs.emplace_back(l, id);
  std::vector<double> probability(jobs.size(), 0.0);
  parallel_for(jobs.size(), config_.threads, [&](std::size_t k) {
    const std::size_t id = jobs[k].second;
    probability[k] = model_->forward(flatten_window(windows_[id], window_fill_[id], config_.qualify.window));
  });
  for (std::size_t k = 0, begin = 0; k <= jobs.size(); ++k) {
    if (k < jobs.size() && jobs[k].first == jobs[begin].first) continue;
    if (k > begin) {
      const std::size_t l = jobs[begin].first;
      outcomes[l] = qualify_locale(std::span<const double>(probability).subspan(begin, k - begin),
                                   config_.qualify.p_crit, config_.qualify.quorum);
      cost[l].classifier_forward_passes = k - begin;
    }
    begin = k;
  }

  // Quantification.
  std::vector<std::optional<QuantifySummary>> summaries(n_locales);
  std::fill(feedback_force_.begin(), feedback_force_.end(), Vec2{});
  if (!plan.covered.empty()) {
    const ContactSearch search =
        contact_pairs(agents_, plan.covered, grid_, scenario_.solid, config_.threads);
    report.forces = resolve_forces(search.contacts, agents_, config_.quantify.contact);
    const auto critical_ticks = ticks_for(config_.quantify.critical.sustain, config_.dt);
    for (std::size_t id : plan.covered) {
      const double f = report.forces.normal_total[id];
      accumulate_exposure(exposure_[id], tick, f, config_.dt, config_.quantify.tiers);
      critical_run_[id] = f >= config_.quantify.critical.force ? critical_run_[id] + 1.0 : 0.0;
      if (config_.quantify.immobilize_on_critical &&
          critical_run_[id] >= static_cast<double>(critical_ticks) && !agents_[id].immobile) {
        agents_[id].immobile = true;
        agents_[id].velocity = {};
      }
      if (config_.quantify.contact_feedback) feedback_force_[id] = report.forces.force[id];
    }
    std::uint64_t attributed = 0;
    for (std::size_t l = 0; l < n_locales; ++l) {
      if (!plan.locales[l].resolve_contacts) continue;
      const auto& members = grid_.cells.at(plan.locales[l].locale);
      QuantifySummary s;
      for (std::size_t id : members) s.peak_force = std::max(s.peak_force, report.forces.normal_total[id]);
      summaries[l] = s;
      cost[l].force_pair_evaluations = count_pair_evaluations(members, plan.covered, grid_,
                                                              scenario_.solid.size(), agents_);
      attributed += cost[l].force_pair_evaluations;
    }
    if (attributed != search.pair_evaluations)
      throw NumericError("pair evaluation accounting mismatch at tick " + std::to_string(tick));
  } else {
    report.forces.force.assign(agents_.size(), Vec2{});
    report.forces.normal_total.assign(agents_.size(), 0.0);
  }
  for (std::size_t k = 0; k < agents_.size(); ++k)
    if (!std::binary_search(plan.covered.begin(), plan.covered.end(), k)) critical_run_[k] = 0.0;

  // Control.
  for (std::size_t l = 0; l < n_locales; ++l) {
    const LocalePlan& lp = plan.locales[l];
    LocaleAnalysis& analysis = analyses_.at(lp.locale);
    report.levels[lp.locale] = lp.level;
    if (pinned) {
      if (verdicts[l]) analysis.last_verdict = verdicts[l];
      if (outcomes[l]) analysis.last_qualify = outcomes[l];
      ++analysis.dwell;
    } else {
      auto result = advance(analysis, verdicts[l], outcomes[l], summaries[l], config_.escalation);
      analysis = result.analysis;
      if (result.transition) report.transitions.push_back({lp.locale, *result.transition});
    }
    if (verdicts[l]) report.verdicts.push_back({lp.locale, *verdicts[l]});
    counters_.add(lp.locale, lp.level, cost[l]);
    report.cost += cost[l];
  }

  // Density bookkeeping.
  std::map<CellKey, double> densities;
  double peak_density = 0.0;
  for (const auto& [key, members] : grid_.cells) {
    const double rho = static_cast<double>(members.size()) / grid_.cell_area();
    densities[key] = rho;
    peak_density = std::max(peak_density, rho);
  }
  density_.record(densities);
  fruin_timeline_.push_back(fruin_level(peak_density).level);
  exit_log_.insert(exit_log_.end(), report.exits.begin(), report.exits.end());

  report.covered = plan.covered;
  report.halo = plan.halo;
  report.features = features_;
  report.planned = plan.estimate;
  tick_ = tick;
  for (TickObserver* o : observers) o->on_tick(*this, report);
}

}  // namespace crush
