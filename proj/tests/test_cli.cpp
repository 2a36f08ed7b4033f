#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <algorithm>
#include <string>

#include "doctest.h"
#include "fixtures.hpp"

#include "crushsim/archive.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + CRUSHSIM_CLI + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string scenario(const std::string& name) {
  return (fs::path(CRUSHSIM_SCENARIOS) / (name + ".json")).string();
}

json read_json(const fs::path& p) { return json::parse(fixture::slurp(p)); }

std::size_t lines(const fs::path& p) {
  const auto text = fixture::slurp(p);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("empty population gives header-only CSVs") {
  auto dir = fixture::scratch("cli_empty");
  fs::create_directories(dir);
  auto doc = read_json(scenario("empty_room"));
  doc["population"]["count"] = 0;
  const auto sc = dir / "nobody.json";
  std::ofstream(sc) << doc.dump();
  auto r = cli("run --scenario " + sc.string() + " --max-time 1 --out " + (dir / "a").string());
  // nobody to evacuate: the run stops at once
  CHECK(r.code == 0);
  for (const char* f : {"verdicts.csv", "transitions.csv", "exposure.csv", "exits.csv"})
    CHECK(lines(dir / "a" / f) == 1);
  auto m = read_json(dir / "a" / "metrics.json");
  CHECK(m["rset"] == "incomplete");
}

TEST_CASE("same invocation twice gives identical trajectories") {
  auto a = fixture::scratch("cli_det_a"), b = fixture::scratch("cli_det_b");
  const std::string base = "run --scenario " + scenario("bottleneck") + " --seed 4 --threads 4 --out ";
  REQUIRE(cli(base + a.string()).code == 0);
  REQUIRE(cli(base + b.string()).code == 0);
  for (const auto& f : crush::archive_files()) {
    if (f == "metadata.json") continue;
    CHECK_MESSAGE(fixture::slurp(a / f) == fixture::slurp(b / f), f);
  }
}

TEST_CASE("environment mirrors flags") {
  auto dir = fixture::scratch("cli_env");
  auto r = cli("run --scenario " + scenario("bottleneck") + " --out " + dir.string(),
               "CRUSHSIM_MAX_TIME=2 CRUSHSIM_SEED=9");
  CHECK(r.code == 4);  // timed out after two seconds
  auto cfg = read_json(dir / "config.json");
  CHECK(cfg["max_time"] == 2.0);
  CHECK(cfg["seed"] == 9);
}

TEST_CASE("train, benchmark and report on the bottleneck") {
  auto dir = fixture::scratch("cli_flow");
  const std::string ff = "run --scenario " + scenario("bottleneck") + " --mode full-force --threads 4";
  REQUIRE(cli(ff + " --seed 1 --out " + (dir / "ff1").string()).code == 0);
  REQUIRE(cli(ff + " --seed 2 --out " + (dir / "ff2").string()).code == 0);

  SUBCASE("train reports held-out metrics and is reproducible") {
    const std::string t = "train --archive " + (dir / "ff1").string() + " --holdout-archive " +
                          (dir / "ff2").string() + " --model-out ";
    REQUIRE(cli(t + (dir / "m1" / "model.crushnet").string()).code == 0);
    REQUIRE(cli(t + (dir / "m2" / "model.crushnet").string()).code == 0);
    CHECK(fixture::slurp(dir / "m1" / "model.crushnet") == fixture::slurp(dir / "m2" / "model.crushnet"));
    auto m = read_json(dir / "m1" / "model.metrics.json");
    CHECK(m["held_out"]["auc"].is_number());
    CHECK(fs::exists(dir / "m1" / "model.loss.csv"));

    auto hy = dir / "hy";
    REQUIRE(cli("run --scenario " + scenario("bottleneck") + " --seed 2 --threads 4 --model " +
                (dir / "m1" / "model.crushnet").string() + " --out " + hy.string())
                .code == 0);
    CHECK(fixture::slurp(hy / "transitions.csv").find(",L1,L2,") != std::string::npos);

    auto b = cli("benchmark --scenario " + scenario("bottleneck") + " --seed 2 --threads 4 --model " +
                 (dir / "m1" / "model.crushnet").string() + " --json-out " + (dir / "bench.json").string());
    REQUIRE(b.code == 0);
    auto bj = read_json(dir / "bench.json");
    CHECK(bj["force_pair_ratio"].get<double>() < 1.0);
    CHECK(bj.contains("first_divergence_tick"));
  }

  SUBCASE("implicit archive cannot be trained on") {
    REQUIRE(cli("run --scenario " + scenario("bottleneck") + " --mode implicit --threads 4 --out " +
                (dir / "imp").string())
                .code == 0);
    auto r = cli("train --archive " + (dir / "imp").string() + " --model-out " + (dir / "x.crushnet").string());
    CHECK(r.code == 2);
    CHECK(r.out.find("full-force") != std::string::npos);
  }

  SUBCASE("report sorts exposure by peak") {
    auto r = cli("report --archive " + (dir / "ff1").string());
    REQUIRE(r.code == 0);
    std::regex row(R"(^\s+(\d+)\s+([0-9.]+)\s+(yes|no)\s+(yes|no)$)");
    std::vector<double> peaks;
    std::istringstream in(r.out);
    for (std::string line; std::getline(in, line);) {
      std::smatch m;
      if (std::regex_match(line, m, row)) peaks.push_back(std::stod(m[2]));
    }
    REQUIRE(peaks.size() == 10);
    CHECK(std::is_sorted(peaks.rbegin(), peaks.rend()));
  }

  SUBCASE("tampered archive") {
    fs::remove(dir / "ff1" / "cost_summary.json");
    auto r = cli("report --archive " + (dir / "ff1").string());
    CHECK(r.code == 4);
    CHECK(r.out.find("cost_summary.json") != std::string::npos);
  }
}

TEST_CASE("report on a run without L3 activity") {
  auto dir = fixture::scratch("cli_calm");
  REQUIRE(cli("run --scenario " + scenario("empty_room") + " --out " + dir.string()).code == 0);
  auto r = cli("report --archive " + dir.string());
  CHECK(r.code == 0);
  CHECK(r.out.find("no force data collected") != std::string::npos);
}

TEST_CASE("benchmark on the empty room") {
  auto r = cli("benchmark --scenario " + scenario("empty_room"));
  REQUIRE(r.code == 0);
  auto j = json::parse(r.out);
  CHECK(j["hybrid"]["force_pair_evaluations"] == 0);
  CHECK(j["full_force"]["force_pair_evaluations"].get<std::uint64_t>() > 0);
}

TEST_CASE("bad input") {
  CHECK(cli("run --out /tmp/x").code == 2);
  CHECK(cli("validate --scenario /nonexistent.json").code == 2);
  CHECK(cli("validate --scenario " + scenario("corridor")).code == 0);
}
