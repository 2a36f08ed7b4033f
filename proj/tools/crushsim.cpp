// crushsim: run scenarios, train the crush classifier, compare hybrid against
// full-force cost, and summarise archives.
//
// Every flag can also come from the environment: --max-time is CRUSHSIM_MAX_TIME
// and so on (prefix CRUSHSIM_, upper case, dashes to underscores).

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "crushsim/archive.hpp"
#include "crushsim/classifier.hpp"
#include "crushsim/config.hpp"
#include "crushsim/error.hpp"
#include "crushsim/random.hpp"
#include "crushsim/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string env_name(const std::string& flag) {
  std::string out = "CRUSHSIM_";
  for (char c : flag) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

template <typename T>
CLI::Option* flag(CLI::App* app, const std::string& name, T& target, const std::string& help) {
  return app->add_option("--" + name, target, help)->envname(env_name(name));
}

// Overrides shared by run and benchmark.
struct RunFlags {
  std::string scenario, config, model, mode;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<double> max_time;

  void attach(CLI::App* app, bool with_mode) {
    flag(app, "scenario", scenario, "scenario JSON")->required();
    flag(app, "config", config, "run config JSON (defaults when omitted)");
    flag(app, "model", model, "classifier model file (overrides qualify.model_path)");
    flag(app, "seed", seed, "run seed");
    flag(app, "threads", threads, "worker threads");
    flag(app, "max-time", max_time, "simulated seconds before giving up");
    if (with_mode) flag(app, "mode", mode, "implicit | full-force | hybrid");
  }

  crush::RunConfig load() const {
    crush::RunConfig cfg = config.empty() ? crush::RunConfig{} : crush::load_config(config);
    if (!mode.empty()) cfg.mode = crush::parse_mode(mode);
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    if (max_time) cfg.max_time = *max_time;
    if (!model.empty()) cfg.qualify.model_path = model;
    crush::validate(cfg);
    return cfg;
  }
};

std::shared_ptr<const crush::Classifier> load_model_for(const crush::RunConfig& cfg) {
  if (cfg.qualify.model_path.empty()) return nullptr;
  return std::make_shared<const crush::Classifier>(crush::load_model(fs::path(cfg.qualify.model_path)));
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw crush::ConfigError("cannot write " + path.string());
  out << text;
}

json metrics_json(const crush::BinaryMetrics& m) {
  return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall},
          {"auc", std::isnan(m.auc) ? json(nullptr) : json(m.auc)},
          {"samples", m.samples},   {"positives", m.positives}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crushsim: crowd crush evacuation simulator with escalating analysis"};
  app.require_subcommand(1);

  RunFlags run_flags;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "simulate a scenario into an archive directory");
  run_flags.attach(run, true);
  flag(run, "out", out_dir, "archive directory")->required();

  std::string archive, holdout, model_out, loss_csv, metrics_out;
  crush::Hyperparameters hyper;
  std::optional<std::size_t> window, stride;
  double holdout_fraction = 0.2;
  auto* train = app.add_subcommand("train", "train the classifier on a full-force archive");
  flag(train, "archive", archive, "full-force archive")->required();
  flag(train, "holdout-archive", holdout, "second full-force archive used for evaluation");
  flag(train, "holdout-fraction", holdout_fraction, "agent fraction held out when no holdout archive");
  flag(train, "model-out", model_out, "model file to write")->required();
  flag(train, "loss-csv", loss_csv, "loss curve CSV (default: next to the model)");
  flag(train, "metrics-out", metrics_out, "held-out metrics JSON (default: next to the model)");
  flag(train, "hidden", hyper.hidden, "hidden units");
  flag(train, "epochs", hyper.epochs, "epochs");
  flag(train, "learning-rate", hyper.learning_rate, "SGD step size");
  flag(train, "train-seed", hyper.seed, "initialisation and shuffle seed");
  flag(train, "window", window, "window length in ticks (default: archive config)");
  flag(train, "stride", stride, "ticks between samples (default: archive config)");

  RunFlags bench_flags;
  std::string bench_out;
  auto* bench = app.add_subcommand("benchmark", "run full-force and hybrid from the same seed");
  bench_flags.attach(bench, false);
  flag(bench, "json-out", bench_out, "write the comparison JSON here as well as stdout");

  auto* report = app.add_subcommand("report", "summarise an archive");
  flag(report, "archive", archive, "archive directory")->required();

  std::string dump_config;
  auto* dump = app.add_subcommand("config-dump", "print the effective run config");
  flag(dump, "config", dump_config, "config to merge over the defaults");

  std::string lint_scenario;
  auto* lint = app.add_subcommand("validate", "check a scenario file");
  flag(lint, "scenario", lint_scenario, "scenario JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      const auto cfg = run_flags.load();
      const auto scenario = crush::load_scenario(run_flags.scenario);
      const auto outcome = crush::run_to_archive(scenario, cfg, out_dir, load_model_for(cfg));
      if (outcome.status == crush::RunStatus::TimedOut) {
        std::cerr << fmt::format("timed out after {:.2f} s; archive written to {}\n", outcome.time, out_dir);
        return 4;
      }
      std::cout << fmt::format("completed in {} ticks ({:.2f} s); archive written to {}\n", outcome.ticks,
                               outcome.time, out_dir);
      return 0;
    }

    if (*train) {
      crush::check_archive(archive);
      const json cfg_doc = json::parse(std::ifstream(fs::path(archive) / "config.json"));
      const crush::RunConfig cfg = crush::config_from_json(cfg_doc);
      const std::size_t w = window.value_or(cfg.qualify.window);
      const std::size_t s = stride.value_or(cfg.qualify.stride);
      const auto run_data = crush::load_training_run(archive);
      crush::DatasetStats stats;
      auto samples = crush::extract_dataset(run_data, w, s, cfg.qualify.label_force,
                                            cfg.qualify.label_sustain, &stats);

      std::vector<crush::LabelledSample> train_set, test_set;
      if (!holdout.empty()) {
        train_set = std::move(samples);
        test_set = crush::extract_dataset(crush::load_training_run(holdout), w, s, cfg.qualify.label_force,
                                          cfg.qualify.label_sustain);
      } else {
        for (auto& smp : samples) {
          const double u = crush::unit_double(crush::hash_words({hyper.seed, smp.window.agent_id, 0x401d}));
          (u < holdout_fraction ? test_set : train_set).push_back(std::move(smp));
        }
      }
      const auto model = crush::train(train_set, w, crush::kFeatureCount, hyper);
      if (fs::path(model_out).has_parent_path()) fs::create_directories(fs::path(model_out).parent_path());
      crush::save_model(model, fs::path(model_out));

      std::string loss = "epoch,loss\n";
      for (std::size_t e = 0; e < model.loss_curve.size(); ++e)
        loss += fmt::format("{},{}\n", e, model.loss_curve[e]);
      const fs::path stem = fs::path(model_out).replace_extension();
      write_file(loss_csv.empty() ? stem.string() + ".loss.csv" : loss_csv, loss);

      json metrics{{"schema", 1},
                   {"train", metrics_json(crush::evaluate(model, train_set))},
                   {"held_out", test_set.empty() ? json(nullptr) : metrics_json(crush::evaluate(model, test_set))},
                   {"held_out_source", holdout.empty() ? "agent split" : holdout},
                   {"positive_fraction", stats.positive_fraction()}};
      write_file(metrics_out.empty() ? stem.string() + ".metrics.json" : metrics_out, metrics.dump(2) + "\n");
      std::cout << metrics.dump(2) << '\n';
      return 0;
    }

    if (*bench) {
      const auto cfg = bench_flags.load();
      const auto scenario = crush::load_scenario(bench_flags.scenario);
      const auto result = crush::run_benchmark(scenario, cfg, load_model_for(cfg));
      const std::string text = result.to_json().dump(2) + "\n";
      if (!bench_out.empty()) write_file(bench_out, text);
      std::cout << text;
      return 0;
    }

    if (*report) {
      std::cout << crush::report_text(archive);
      return 0;
    }

    if (*dump) {
      const auto cfg = dump_config.empty() ? crush::RunConfig{} : crush::load_config(dump_config);
      std::cout << crush::to_json(cfg).dump(2) << '\n';
      return 0;
    }

    if (*lint) {
      const auto scenario = crush::load_scenario(lint_scenario);
      std::cout << fmt::format("{}: ok ({} walls, {} obstacles, {} exits)\n", lint_scenario,
                               scenario.walls.size(), scenario.obstacles.size(), scenario.exits.size());
      return 0;
    }
  } catch (const crush::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
