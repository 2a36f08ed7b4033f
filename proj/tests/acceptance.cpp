// One line per acceptance criterion, PASS or FAIL with the measured values.
// Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "chain.hpp"
#include "crushsim/archive.hpp"
#include "crushsim/classifier.hpp"
#include "crushsim/identify.hpp"
#include "crushsim/parallel.hpp"
#include "crushsim/safety_metrics.hpp"
#include "crushsim/scenario.hpp"
#include "crushsim/simulation.hpp"

namespace fs = std::filesystem;
using namespace crush;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int n, const char* name, double budget_s, const std::function<Verdict()>& body) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool in_time = secs < budget_s;
  const bool ok = v.pass && in_time;
  if (!ok) ++failures;
  fmt::print("[{}] {}. {}: {} ({:.1f} s of {:.0f} s){}\n", ok ? "PASS" : "FAIL", n, name, v.detail,
             secs, budget_s, in_time ? "" : " over time budget");
  std::fflush(stdout);
}

Scenario canonical(const std::string& name) {
  return load_scenario(fs::path(CRUSHSIM_SCENARIOS) / (name + ".json"));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

constexpr unsigned kThreads = 4;
constexpr std::uint64_t kTrainSeed = 1;
constexpr std::uint64_t kEvalSeed = 2;

RunConfig base_config(PipelineMode mode, std::uint64_t seed) {
  RunConfig cfg;
  cfg.mode = mode;
  cfg.seed = seed;
  cfg.threads = kThreads;
  return cfg;
}

TrainingRun full_force_run(const Scenario& sc, std::uint64_t seed) {
  const auto cfg = base_config(PipelineMode::FullForce, seed);
  Simulation sim(sc, cfg, seed_agents(sc, sc.population, seed));
  RunRecorder rec(true);
  TickObserver* obs[] = {&rec};
  sim.run(obs);
  return rec.training;
}

std::vector<LabelledSample> dataset(const TrainingRun& run) {
  const QualifyConfig q;
  return extract_dataset(run, q.window, q.stride, q.label_force, q.label_sustain);
}

// ---- 1 ----

Verdict mi_exactness() {
  std::mt19937_64 rng(20);
  std::vector<int> x(10000);
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = k < x.size() / 2 ? 0 : 1;
  std::shuffle(x.begin(), x.end(), rng);
  const double self = mutual_information(x, x);
  double shuffled = 0.0;
  auto y = x;
  for (int r = 0; r < 100; ++r) {
    std::shuffle(y.begin(), y.end(), rng);
    shuffled += mutual_information(x, y);
  }
  shuffled /= 100;
  const double err = std::abs(self - std::numbers::ln2);
  return {err < 1e-3 && shuffled < 0.05,
          fmt::format("MI(X,X) - ln2 = {:.2e} nats, mean shuffled MI = {:.2e} nats", err, shuffled)};
}

// ---- 2 ----

// Vicsek particles in a periodic box. Each particle also has a goal
// direction (+x) and walks slower when heading away from it, the way a
// crowd member facing the wrong way makes less progress; that gives the
// speed-ratio and alignment features something to carry.
struct VicsekPoint {
  double eta = 0.0;
  double phi = 0.0;  // brute force, every particle, time averaged
  PhaseState full = PhaseState::Ordered;
  PhaseState subset = PhaseState::Ordered;
};

VicsekPoint vicsek(double eta, const std::vector<std::size_t>& subset) {
  constexpr int N = 200;
  constexpr double L = 10.0, R = 1.0, v0 = 0.3;
  constexpr int transient = 500, observe = 200;
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(N), y(N), th(N), sp(N, v0), next(N);
  for (int i = 0; i < N; ++i) {
    x[i] = u(rng) * L;
    y[i] = u(rng) * L;
    th[i] = (2 * u(rng) - 1) * std::numbers::pi;
  }
  DetectorConfig cfg;
  OrderSignal full(cfg.window), part(cfg.window);
  std::vector<std::size_t> everyone(N);
  for (int i = 0; i < N; ++i) everyone[i] = static_cast<std::size_t>(i);

  auto sample = [&](const std::vector<std::size_t>& who) {
    SubsetSample s;
    std::vector<Vec2> vel;
    for (auto i : who) {
      vel.push_back({sp[i] * std::cos(th[i]), sp[i] * std::sin(th[i])});
      s.speed_ratio.push_back(sp[i] / v0);
      s.alignment.push_back(std::cos(th[i]));
    }
    const auto op = order_parameter(vel, cfg.v_eps * v0);
    s.phi = op.phi;
    s.stagnant = op.stagnant;
    return s;
  };

  double phi_sum = 0.0;
  for (int t = 0; t < transient + observe; ++t) {
    for (int i = 0; i < N; ++i) {
      double sx = 0, sy = 0;
      for (int j = 0; j < N; ++j) {
        double dx = x[j] - x[i], dy = y[j] - y[i];
        dx -= L * std::round(dx / L);
        dy -= L * std::round(dy / L);
        if (dx * dx + dy * dy <= R * R) {
          sx += std::cos(th[j]);
          sy += std::sin(th[j]);
        }
      }
      next[i] = std::atan2(sy, sx) + eta * (u(rng) - 0.5);
    }
    th.swap(next);
    for (int i = 0; i < N; ++i) {
      sp[i] = v0 * (0.75 + 0.25 * std::cos(th[i]));
      x[i] = std::fmod(x[i] + sp[i] * std::cos(th[i]) + L, L);
      y[i] = std::fmod(y[i] + sp[i] * std::sin(th[i]) + L, L);
    }
    if (t >= transient) {
      auto all = sample(everyone);
      phi_sum += all.phi;
      full.push(std::move(all));
      part.push(sample(subset));
    }
  }
  VicsekPoint p;
  p.eta = eta;
  p.phi = phi_sum / observe;
  p.full = detect_transition(full, cfg, PhaseState::Ordered)->state;
  p.subset = detect_transition(part, cfg, PhaseState::Ordered)->state;
  return p;
}

Verdict vicsek_validation() {
  std::vector<std::size_t> everyone(200);
  for (std::size_t i = 0; i < everyone.size(); ++i) everyone[i] = i;
  const auto subset = sample_subset(everyone, DetectorConfig{}.subset_k, 99);

  std::vector<VicsekPoint> sweep(20);
  parallel_for(sweep.size(), kThreads, [&](std::size_t k) {
    sweep[k] = vicsek(0.25 * static_cast<double>(k + 1), subset);
  });

  std::optional<double> crossing;
  for (std::size_t k = 1; k < sweep.size() && !crossing; ++k)
    if (sweep[k - 1].phi >= 0.5 && sweep[k].phi < 0.5)
      crossing = sweep[k - 1].eta + (sweep[k - 1].phi - 0.5) / (sweep[k - 1].phi - sweep[k].phi) *
                                        (sweep[k].eta - sweep[k - 1].eta);
  std::optional<double> flagged;
  for (const auto& p : sweep)
    if (p.full == PhaseState::Disordered) {
      flagged = p.eta;
      break;
    }
  std::size_t agree = 0;
  for (const auto& p : sweep) agree += p.full == p.subset ? 1 : 0;
  const double agreement = static_cast<double>(agree) / static_cast<double>(sweep.size());
  if (!crossing || !flagged)
    return {false, fmt::format("crossing {}, flagged {}", crossing ? "found" : "missing",
                               flagged ? "found" : "never")};
  const double gap = std::abs(*flagged - *crossing);
  return {gap <= 0.5 && agreement >= 0.9,
          fmt::format("phi=0.5 crossing at eta {:.2f}, detector flags at eta {:.2f} (gap {:.2f}); "
                      "subset k=10 agrees on {}/{} points",
                      *crossing, *flagged, gap, agree, sweep.size())};
}

// ---- 3 ----

Verdict force_oracles(const Scenario& bottleneck) {
  const auto cfg = base_config(PipelineMode::FullForce, kTrainSeed);
  Simulation sim(bottleneck, cfg, seed_agents(bottleneck, bottleneck.population, cfg.seed));
  RunRecorder rec;
  TickObserver* obs[] = {&rec};
  sim.run(obs);
  double worst = 0.0;
  for (const auto& t : rec.ticks) worst = std::max(worst, t.net_contact_force.norm());

  const auto c = chain::run(5, 800.0);
  double chain_err = 0.0;
  for (std::size_t i = 0; i < c.oracle.size(); ++i)
    chain_err = std::max(chain_err, std::abs(c.simulated[i] - c.oracle[i]) / c.oracle[i]);
  return {worst < 1e-6 && chain_err < 0.02 && c.simulated.size() == 5,
          fmt::format("max |sum of contact forces| = {:.2e} N over {} ticks; 5-disc chain worst "
                      "relative error {:.2e}",
                      worst, rec.ticks.size(), chain_err)};
}

// ---- 4 ----

Verdict gradient_check() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int net = 0; net < 20; ++net) {
    const std::size_t window = 1 + net % 4, features = 2 + net % 3, hidden = 2 + net % 5;
    Classifier m(window, features, hidden);
    auto p = m.parameters();
    for (double& v : p) v = u(rng);
    m.set_parameters(p);
    std::vector<std::vector<double>> xs(8, std::vector<double>(window * features));
    std::vector<int> ys(8);
    std::vector<double> ws(8);
    for (std::size_t s = 0; s < xs.size(); ++s) {
      for (double& v : xs[s]) v = 2 * u(rng);
      ys[s] = static_cast<int>(s % 2);
      ws[s] = 0.5 + std::abs(u(rng));
    }
    std::vector<double> grad;
    loss_and_gradient(m, xs, ys, ws, &grad);
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double h = 1e-5;
      auto q = p;
      q[k] = p[k] + h;
      m.set_parameters(q);
      const double up = loss_and_gradient(m, xs, ys, ws, nullptr);
      q[k] = p[k] - h;
      m.set_parameters(q);
      const double down = loss_and_gradient(m, xs, ys, ws, nullptr);
      m.set_parameters(p);
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[k]) /
                                  std::max(1e-8, std::abs(fd) + std::abs(grad[k])));
    }
  }
  return {worst < 1e-5, fmt::format("worst relative gradient error {:.2e} over 20 networks", worst)};
}

// ---- 5 ----

std::shared_ptr<const Classifier> model;

Verdict classifier_skill(const Scenario& bottleneck) {
  const auto train_set = dataset(full_force_run(bottleneck, kTrainSeed));
  const auto test_set = dataset(full_force_run(bottleneck, kEvalSeed));
  const QualifyConfig q;
  model = std::make_shared<const Classifier>(train(train_set, q.window, kFeatureCount, {}));
  const auto m = evaluate(*model, test_set);
  return {m.auc >= 0.8, fmt::format("held-out AUC {:.3f} (seed {} -> seed {}, {} positives of {})",
                                    m.auc, kTrainSeed, kEvalSeed, m.positives, m.samples)};
}

// ---- 6 ----

Verdict hybrid_equivalence(const Scenario& bottleneck) {
  if (!model) return {false, "no classifier (criterion 5 did not produce one)"};
  const auto r = run_benchmark(bottleneck, base_config(PipelineMode::Hybrid, kEvalSeed), model);
  const bool a = r.compared_agent_ticks > 0 && r.force_mismatches == 0;
  const bool b = r.pair_ratio < 0.5;
  const bool c = r.escalation_events > 0 && r.hit_rate() >= 0.95;
  return {a && b && c,
          fmt::format("(a) {} mismatches in {} co-escalated agent-ticks [{}]; (b) pair ratio {:.3f} "
                      "[{}]; (c) hit rate {}/{} = {:.3f} [{}]",
                      r.force_mismatches, r.compared_agent_ticks, a ? "ok" : "fail", r.pair_ratio,
                      b ? "ok" : "fail", r.escalation_hits, r.escalation_events, r.hit_rate(),
                      c ? "ok" : "fail")};
}

// ---- 7 ----

struct TransitionLog : TickObserver {
  std::vector<LocaleTransition> all;
  std::size_t max_level = 1;
  void on_tick(const Simulation&, const TickReport& r) override {
    all.insert(all.end(), r.transitions.begin(), r.transitions.end());
    for (auto& [k, l] : r.levels) max_level = std::max(max_level, static_cast<std::size_t>(l));
  }
};

TransitionLog hybrid_log(const Scenario& sc, std::uint64_t seed) {
  Simulation sim(sc, base_config(PipelineMode::Hybrid, seed), seed_agents(sc, sc.population, seed), model);
  TransitionLog log;
  TickObserver* obs[] = {&log};
  sim.run(obs);
  return log;
}

Verdict discrimination(const Scenario& corridor, const Scenario& bottleneck) {
  if (!model) return {false, "no classifier (criterion 5 did not produce one)"};
  const auto calm = hybrid_log(corridor, kEvalSeed);
  const auto crush = hybrid_log(bottleneck, kEvalSeed);

  // locales within one cell of the exit's midpoint
  const double cell = RunConfig{}.cell_size;
  const auto& ex = bottleneck.exits.front().segment;
  Vec2 mid = (ex.a + ex.b) * 0.5;
  mid.x = std::min(mid.x, bottleneck.bounds.max.x - 1e-6);
  mid.y = std::min(mid.y, bottleneck.bounds.max.y - 1e-6);
  const CellKey door = cell_of(mid, cell);
  auto near = [&](CellKey k) { return std::abs(k.i - door.i) <= 1 && std::abs(k.j - door.j) <= 1; };
  std::size_t up12 = 0, up23 = 0;
  for (const auto& t : crush.all) {
    if (!near(t.locale)) continue;
    if (t.transition.from == Level::Identify && t.transition.to == Level::Qualify) ++up12;
    if (t.transition.from == Level::Qualify && t.transition.to == Level::Quantify) ++up23;
  }
  return {calm.all.empty() && calm.max_level == 1 && up12 >= 1 && up23 >= 1,
          fmt::format("corridor: {} transitions, highest level L{}; bottleneck near exit: {} L1->L2, "
                      "{} L2->L3",
                      calm.all.size(), calm.max_level, up12, up23)};
}

// ---- 8 ----

Verdict safety_metrics(const Scenario& empty_room) {
  const bool f = fruin_level_for_space(0.40).level == 'F' && fruin_level_for_space(0.46).level == 'E';

  auto hist = [](std::size_t dense) {
    DensityHistory h;
    for (std::size_t t = 0; t < 100; ++t) h.record({{CellKey{0, 0}, t < dense ? 4.0 : 1.0}});
    h.complete = true;
    return h;
  };
  const auto i15 = imo_check(hist(15)), i10 = imo_check(hist(10)), i9 = imo_check(hist(9));
  const bool imo = !i15.pass && i15.violating_fraction == 0.15 && !i10.pass && i9.pass;

  Simulation sim(empty_room, base_config(PipelineMode::Hybrid, 1),
                 seed_agents(empty_room, empty_room.population, 1));
  sim.run();
  double last = -1.0;
  for (const auto& a : sim.agents())
    if (a.evacuated_at) last = std::max(last, *a.evacuated_at);
  const auto e = egress_times(sim.exit_log(), sim.agents().size(), empty_room.aset);
  const bool rset = sim.evacuated() && e.rset && *e.rset == last;
  return {f && imo && rset,
          fmt::format("Fruin 0.40->{} 0.46->{}; IMO 15%/10%/9% -> {}/{}/{}; RSET {} vs last exit {:.2f} s",
                      fruin_level_for_space(0.40).level, fruin_level_for_space(0.46).level,
                      i15.pass ? "pass" : "fail", i10.pass ? "pass" : "fail", i9.pass ? "pass" : "fail",
                      e.rset ? fmt::format("{:.2f} s", *e.rset) : std::string("incomplete"), last)};
}

// ---- 9 ----

Verdict determinism(const Scenario& bottleneck) {
  const auto root = fs::temp_directory_path() / "crushsim_acceptance";
  fs::remove_all(root);
  const auto cfg = base_config(PipelineMode::Hybrid, kEvalSeed);
  run_to_archive(bottleneck, cfg, root / "a", model);
  run_to_archive(bottleneck, cfg, root / "b", model);
  const auto a = slurp(root / "a" / "trajectory.csv");
  const auto b = slurp(root / "b" / "trajectory.csv");
  return {!a.empty() && a == b,
          fmt::format("{} threads, trajectory CSVs {} ({} bytes)", kThreads,
                      a == b ? "byte-identical" : "differ", a.size())};
}

}  // namespace

int main() {
  const auto empty_room = canonical("empty_room");
  const auto corridor = canonical("corridor");
  const auto bottleneck = canonical("bottleneck");

  criterion(1, "MI estimator exactness", 1, mi_exactness);
  criterion(2, "Vicsek validation", 120, vicsek_validation);
  criterion(3, "Force-engine oracles", 60, [&] { return force_oracles(bottleneck); });
  criterion(4, "Gradient check", 10, gradient_check);
  criterion(5, "Classifier skill", 300, [&] { return classifier_skill(bottleneck); });
  criterion(6, "Hybrid equivalence and savings", 300, [&] { return hybrid_equivalence(bottleneck); });
  criterion(7, "Ordered/disordered discrimination", 300,
            [&] { return discrimination(corridor, bottleneck); });
  criterion(8, "Safety metrics", 60, [&] { return safety_metrics(empty_room); });
  criterion(9, "Determinism", 300, [&] { return determinism(bottleneck); });

  fmt::print("{} of 9 criteria failed\n", failures);
  return failures;
}
