#include "crushsim/quantify.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "crushsim/error.hpp"
#include "crushsim/parallel.hpp"

namespace crush {

using nlohmann::json;

bool Contact::operator<(const Contact& o) const {
  return std::tuple(static_cast<int>(kind), first, second) <
         std::tuple(static_cast<int>(o.kind), o.first, o.second);
}

namespace {

void collect(const AgentState& a, std::span<const AgentState> agents,
             std::span<const std::size_t> covered, const LocaleGrid& grid,
             std::span<const Segment> walls, std::vector<Contact>& out, std::uint64_t& evals) {
  const auto candidates = grid.neighborhood(cell_of(a.position, grid.cell_size));
  for (std::size_t j : candidates) {
    if (j == a.id) continue;
    if (j < a.id && std::binary_search(covered.begin(), covered.end(), j)) continue;
    ++evals;
    const AgentState& b = agents[j];
    const AgentState& lo = a.id < b.id ? a : b;
    const AgentState& hi = a.id < b.id ? b : a;
    const Vec2 diff = hi.position - lo.position;
    const double d = diff.norm();
    const double reach = lo.radius + hi.radius;
    if (!(d < reach)) continue;
    Contact c;
    c.kind = ContactKind::AgentAgent;
    c.first = lo.id;
    c.second = hi.id;
    c.penetration = reach - d;
    c.normal = d > 0.0 ? diff / d : Vec2{1.0, 0.0};
    c.tangent = perp(c.normal);
    c.tangential_velocity = dot(lo.velocity - hi.velocity, c.tangent);
    out.push_back(c);
  }
  for (std::size_t w = 0; w < walls.size(); ++w) {
    ++evals;
    const Vec2 diff = closest_point(walls[w], a.position) - a.position;
    const double d = diff.norm();
    if (!(d < a.radius) || d == 0.0) continue;
    Contact c;
    c.kind = ContactKind::AgentWall;
    c.first = a.id;
    c.second = w;
    c.penetration = a.radius - d;
    c.normal = diff / d;
    c.tangent = perp(c.normal);
    c.tangential_velocity = dot(a.velocity, c.tangent);
    out.push_back(c);
  }
}

}  // namespace

ContactSearch contact_pairs(std::span<const AgentState> agents,
                            std::span<const std::size_t> covered, const LocaleGrid& grid,
                            std::span<const Segment> walls, unsigned threads) {
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(threads, covered.size()));
  std::vector<std::vector<Contact>> parts(chunks);
  std::vector<std::uint64_t> evals(chunks, 0);
  const std::size_t per = (covered.size() + chunks - 1) / std::max<std::size_t>(chunks, 1);
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * per;
    const std::size_t hi = std::min(covered.size(), lo + per);
    for (std::size_t k = lo; k < hi; ++k)
      collect(agents[covered[k]], agents, covered, grid, walls, parts[c], evals[c]);
  });
  ContactSearch out;
  for (std::size_t c = 0; c < chunks; ++c) {
    out.contacts.insert(out.contacts.end(), parts[c].begin(), parts[c].end());
    out.pair_evaluations += evals[c];
  }
  std::sort(out.contacts.begin(), out.contacts.end());
  return out;
}

std::uint64_t count_pair_evaluations(std::span<const std::size_t> counted,
                                     std::span<const std::size_t> covered,
                                     const LocaleGrid& grid, std::size_t wall_count,
                                     std::span<const AgentState> agents) {
  std::uint64_t evals = 0;
  for (std::size_t i : counted) {
    const auto candidates = grid.neighborhood(cell_of(agents[i].position, grid.cell_size));
    for (std::size_t j : candidates) {
      if (j == i) continue;
      if (j < i && std::binary_search(covered.begin(), covered.end(), j)) continue;
      ++evals;
    }
    evals += wall_count;
  }
  return evals;
}

ResolvedForces resolve_forces(std::span<const Contact> contacts,
                              std::span<const AgentState> agents,
                              const ContactForceParams& params) {
  ResolvedForces out;
  out.force.assign(agents.size(), Vec2{});
  out.normal_total.assign(agents.size(), 0.0);
  out.contact_normal.reserve(contacts.size());
  for (const Contact& c : contacts) {
    const double fn = params.body_stiffness * c.penetration;
    const double ft = params.friction_coefficient * c.penetration * c.tangential_velocity;
    const Vec2 on_first = c.normal * (-fn) - c.tangent * ft;
    if (!on_first.finite())
      throw NumericError("non-finite contact force for agent " + std::to_string(c.first));
    out.force[c.first] += on_first;
    out.normal_total[c.first] += fn;
    if (c.kind == ContactKind::AgentAgent) {
      out.force[c.second] -= on_first;
      out.normal_total[c.second] += fn;
    } else {
      out.wall_reaction -= on_first;
    }
    out.contact_normal.push_back(fn);
  }
  return out;
}

ExposureRecord make_exposure_record(std::size_t agent_id, std::size_t tiers) {
  ExposureRecord r;
  r.agent_id = agent_id;
  r.tier_integral.assign(tiers, 0.0);
  r.tier_run.assign(tiers, 0);
  r.tier_longest.assign(tiers, 0);
  return r;
}

void accumulate_exposure(ExposureRecord& record, std::uint64_t tick, double force, double dt,
                         std::span<const double> tiers) {
  if (record.tier_integral.size() != tiers.size()) {
    record.tier_integral.resize(tiers.size(), 0.0);
    record.tier_run.resize(tiers.size(), 0);
    record.tier_longest.resize(tiers.size(), 0);
  }
  const bool contiguous = !record.ticks.empty() && record.ticks.back() + 1 == tick;
  record.ticks.push_back(tick);
  record.force.push_back(force);
  record.peak = std::max(record.peak, force);
  for (std::size_t t = 0; t < tiers.size(); ++t) {
    if (!contiguous) record.tier_run[t] = 0;
    if (force >= tiers[t]) {
      record.tier_integral[t] += (force - tiers[t]) * dt;
      ++record.tier_run[t];
      record.tier_longest[t] = std::max(record.tier_longest[t], record.tier_run[t]);
    } else {
      record.tier_run[t] = 0;
    }
  }
}

std::uint64_t ticks_for(double seconds, double dt) {
  return static_cast<std::uint64_t>(std::ceil(seconds / dt - 1e-9));
}

std::uint64_t longest_sustained(const ExposureRecord& record, double threshold) {
  std::uint64_t best = 0, run = 0;
  for (std::size_t k = 0; k < record.ticks.size(); ++k) {
    const bool contiguous = k > 0 && record.ticks[k - 1] + 1 == record.ticks[k];
    if (!contiguous) run = 0;
    run = record.force[k] >= threshold ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best;
}

json injury_report(std::span<const ExposureRecord> records, const InjuryReportConfig& config,
                   double dt) {
  std::vector<const ExposureRecord*> order;
  for (const auto& r : records)
    if (!r.ticks.empty()) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const ExposureRecord* a, const ExposureRecord* b) {
    if (a->peak != b->peak) return a->peak > b->peak;
    return a->agent_id < b->agent_id;
  });

  const auto at_risk_ticks = ticks_for(config.at_risk.sustain, dt);
  const auto critical_ticks = ticks_for(config.critical.sustain, dt);
  json agents = json::array();
  json at_risk = json::array();
  json critical = json::array();
  for (const ExposureRecord* r : order) {
    const auto risk_run = longest_sustained(*r, config.at_risk.force);
    const auto crit_run = longest_sustained(*r, config.critical.force);
    const bool is_critical = crit_run > 0 && crit_run >= critical_ticks;
    const bool is_at_risk = is_critical || (risk_run > 0 && risk_run >= at_risk_ticks);
    json tiers = json::array();
    for (std::size_t t = 0; t < config.tiers.size() && t < r->tier_integral.size(); ++t)
      tiers.push_back({{"tier", config.tiers[t]}, {"integral", r->tier_integral[t]}});
    agents.push_back({{"agent_id", r->agent_id},
                      {"peak", r->peak},
                      {"tier_exposure", tiers},
                      {"longest_at_risk_s", static_cast<double>(risk_run) * dt},
                      {"longest_critical_s", static_cast<double>(crit_run) * dt},
                      {"at_risk", is_at_risk},
                      {"critical", is_critical}});
    if (is_at_risk) at_risk.push_back(r->agent_id);
    if (is_critical) critical.push_back(r->agent_id);
  }
  return {{"schema", 1},
          {"assumptions",
           "force cutoffs are configuration placeholders; no force-to-injury mapping is "
           "implied or medically validated"},
          {"config",
           {{"at_risk", {{"force", config.at_risk.force}, {"sustain", config.at_risk.sustain}}},
            {"critical", {{"force", config.critical.force}, {"sustain", config.critical.sustain}}},
            {"tiers", config.tiers}}},
          {"agents", agents},
          {"at_risk", at_risk},
          {"critical", critical}};
}

}  // namespace crush
