#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"

#include "crushsim/archive.hpp"
#include "crushsim/classifier.hpp"
#include "crushsim/error.hpp"

using namespace crush;

static double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

static LabelledSample toy(double a, double b, bool label) {
  LabelledSample s;
  s.window.values = {a, b};
  s.label = label;
  return s;
}

static double train_accuracy(const Classifier& m, const std::vector<LabelledSample>& set) {
  return evaluate(m, set).accuracy;
}

TEST_CASE("label_from_force") {
  const double dt = 0.05;
  std::vector<double> zero(40, 0.0);
  CHECK_FALSE(label_from_force(zero, 250, 1.0, dt));
  std::vector<double> high(40, 500.0);
  CHECK(label_from_force(high, 250, 1.0, dt));
  std::vector<double> square(40);
  for (std::size_t k = 0; k < square.size(); ++k) square[k] = k % 2 ? 500.0 : 100.0;
  CHECK_FALSE(label_from_force(square, 250, 1.0, dt));
  CHECK_THROWS_AS(label_from_force(std::vector<double>(5, 500.0), 250, 1.0, dt), InsufficientHistory);

  // record form: a skipped tick breaks continuity
  auto rec = make_exposure_record(0, 1);
  std::vector<double> tiers{250};
  for (std::uint64_t t = 0; t < 40; ++t) accumulate_exposure(rec, t, 500, dt, tiers);
  CHECK(label_from_force(rec, 39, 250, 1.0, dt));
  accumulate_exposure(rec, 45, 500, dt, tiers);
  CHECK_THROWS_AS(label_from_force(rec, 45, 250, 1.0, dt), InsufficientHistory);
}

TEST_CASE("extract_dataset window arithmetic") {
  TrainingRun run;
  run.mode = "full-force";
  SUBCASE("empty run") { CHECK(extract_dataset(run, 40, 20, 250, 1).empty()); }
  SUBCASE("one agent, 100 ticks") {
    auto& s = run.agents[0];
    s.first_tick = 1;
    s.features.assign(100, FeatureRow{});
    s.normal_force.assign(100, 0.0);
    auto set = extract_dataset(run, 40, 20, 250, 1);
    REQUIRE(set.size() == 4);
    CHECK(set[0].window.end_tick == 40);
    CHECK(set[3].window.end_tick == 100);
    CHECK(set[0].window.values.size() == 40 * kFeatureCount);
  }
  SUBCASE("wrong mode") {
    run.mode = "implicit";
    CHECK_THROWS_AS(extract_dataset(run, 40, 20, 250, 1), ModeError);
  }
}

TEST_CASE("forward") {
  Classifier m(1, 2, 1);
  SUBCASE("zero parameters give one half") {
    CHECK(m.forward(std::vector<double>{3.0, -1.0}) == 0.5);
  }
  SUBCASE("hand-set single unit") {
    m.w1 = {10.0, 0.0};
    m.w2 = {10.0};
    const double x1 = 0.3;
    CHECK(m.forward(std::vector<double>{x1, 7.0}) ==
          doctest::Approx(logistic(10 * logistic(10 * x1))).epsilon(1e-12));
    CHECK(m.forward(std::vector<double>{x1, 7.0}) == m.forward(std::vector<double>{x1, 7.0}));
  }
  SUBCASE("shape") { CHECK_THROWS_AS(m.forward(std::vector<double>{1.0}), ShapeError); }
}

TEST_CASE("gradient matches central differences") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int net = 0; net < 20; ++net) {
    const std::size_t window = 1 + net % 3, features = 2 + net % 2, hidden = 1 + net % 4;
    Classifier m(window, features, hidden);
    auto p = m.parameters();
    for (double& v : p) v = u(rng);
    m.set_parameters(p);
    std::vector<std::vector<double>> xs(6, std::vector<double>(window * features));
    std::vector<int> ys(6);
    std::vector<double> ws(6);
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
      const double rel = std::abs(fd - grad[k]) / std::max(1e-8, std::abs(fd) + std::abs(grad[k]));
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("training on toy sets") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SUBCASE("separable") {
    std::vector<LabelledSample> set;
    while (set.size() < 200) {
      const double a = u(rng), b = u(rng);
      if (std::abs(a + b) < 0.1) continue;
      set.push_back(toy(a, b, a + b > 0));
    }
    Hyperparameters hp;
    hp.epochs = 200;
    hp.hidden = 4;
    auto m = train(set, 1, 2, hp);
    CHECK(train_accuracy(m, set) == 1.0);
    CHECK(m.loss_curve.back() < m.loss_curve.front());
  }
  SUBCASE("xor") {
    std::vector<LabelledSample> set;
    while (set.size() < 400) {
      const double a = u(rng), b = u(rng);
      if (std::abs(a) < 0.1 || std::abs(b) < 0.1) continue;
      set.push_back(toy(a, b, (a > 0) != (b > 0)));
    }
    Hyperparameters hp;
    hp.hidden = 4;
    hp.epochs = 300;
    hp.learning_rate = 0.1;
    auto m = train(set, 1, 2, hp);
    CHECK(train_accuracy(m, set) >= 0.95);
  }
  SUBCASE("single class") {
    std::vector<LabelledSample> set{toy(1, 1, true), toy(2, 2, true)};
    CHECK_THROWS_AS(train(set, 1, 2, Hyperparameters{}), DegenerateDataset);
  }
}

TEST_CASE("model file round trip is exact") {
  std::vector<LabelledSample> set{toy(0, 1, true), toy(1, 0, false), toy(0.5, 0.2, false), toy(0.1, 0.9, true)};
  Hyperparameters hp;
  hp.epochs = 5;
  auto m = train(set, 1, 2, hp);
  std::stringstream a;
  save_model(m, a);
  auto back = load_model(a);
  std::stringstream b;
  save_model(back, b);
  CHECK(a.str() == b.str());
  CHECK(back.forward(std::vector<double>{0.3, 0.4}) == m.forward(std::vector<double>{0.3, 0.4}));
  std::stringstream bad("crushnet 99\n");
  CHECK_THROWS_AS(load_model(bad), ParseError);
}

TEST_CASE("roc_auc") {
  CHECK(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}) == 1.0);
  CHECK(roc_auc(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}) == 0.5);
}

TEST_CASE("qualify_locale") {
  CHECK(qualify_locale(std::vector<double>(5, 0.99), 0.5, 0.3).confirmed);
  CHECK_FALSE(qualify_locale(std::vector<double>(5, 0.01), 0.5, 0.3).confirmed);
  // one of four exactly at p_crit, quorum 0.25
  CHECK(qualify_locale(std::vector<double>{0.5, 0.1, 0.1, 0.1}, 0.5, 0.25).confirmed);
  CHECK_THROWS_AS(qualify_locale(std::vector<double>{}, 0.5, 0.25), InsufficientData);
}

TEST_CASE("bottleneck training run has a usable positive fraction") {
  auto sc = fixture::canonical("bottleneck");
  RunConfig cfg;
  cfg.mode = PipelineMode::FullForce;
  cfg.seed = 1;
  cfg.threads = 4;
  Simulation sim(sc, cfg, seed_agents(sc, sc.population, cfg.seed));
  RunRecorder rec(true);
  TickObserver* obs[] = {&rec};
  sim.run(obs);
  DatasetStats stats;
  auto set = extract_dataset(rec.training, cfg.qualify.window, cfg.qualify.stride,
                             cfg.qualify.label_force, cfg.qualify.label_sustain, &stats);
  MESSAGE("positives " << stats.positives << " of " << set.size() << " = "
                       << stats.positive_fraction());
  CHECK(stats.positives > 0);
  CHECK(stats.positive_fraction() >= 0.05);
  CHECK(stats.positive_fraction() <= 0.50);
}
