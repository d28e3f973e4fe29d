#include <doctest.h>

#include <string>

#include "fishswim/config.hpp"
#include "fishswim/errors.hpp"

using namespace fishswim;
using namespace fishswim::config;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse(text, "run.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("an empty object gives the defaults") {
  const RunConfig c = parse("{}");
  CHECK(c.env.sim.nx == 190);
  CHECK(c.sac.gamma == 0.99);
  CHECK(c.train.env == EnvKind::kFish);
  CHECK(c.env.task.kind == env::TaskKind::kPosition);
}

TEST_CASE("values are read into their blocks") {
  const RunConfig c = parse(R"({
    "fluid": {"nx": 96, "ny": 96, "domain_x": 1.8, "domain_y": 1.8},
    "episode": {"task": "uturn", "t_max": 200, "uturn_distance": 0.75},
    "randomization": {"joint_sigma_deg": 1.0},
    "sac": {"hidden": [64, 64], "batch_size": 64},
    "train": {"env": "sanity", "total_steps": 5000},
    "baseline": {"amplitude_deg": [10, 20, 30]}
  })");
  CHECK(c.env.sim.nx == 96);
  CHECK(c.env.sim.fluid.domain_x == 1.8);
  CHECK(c.env.task.kind == env::TaskKind::kUturn);
  CHECK(c.env.episode.t_max == 200);
  CHECK(c.env.randomization.joint_sigma == doctest::Approx(deg2rad(1.0)));
  CHECK(c.sac.hidden == std::vector<int>{64, 64});
  CHECK(c.train.env == EnvKind::kSanity);
  CHECK(c.train.total_steps == 5000);
  CHECK(c.baseline.cpg.amplitude[0] == doctest::Approx(deg2rad(10.0)));
}

TEST_CASE("unknown keys are reported with their path and line") {
  const std::string msg = error_of("{\n  \"sac\": {\n    \"gama\": 0.9\n  }\n}");
  CHECK(msg.find("run.json:3") != std::string::npos);
  CHECK(msg.find("sac.gama") != std::string::npos);
  CHECK(error_of(R"({"fishes": {}})").find("fishes") != std::string::npos);
}

TEST_CASE("wrong types and bad choices are rejected") {
  CHECK(error_of(R"({"sac": {"gamma": "high"}})").find("sac.gamma") != std::string::npos);
  CHECK(error_of(R"({"fluid": {"nx": 1.5}})").find("fluid.nx") != std::string::npos);
  CHECK(error_of(R"({"episode": {"task": "spiral"}})").find("spiral") != std::string::npos);
  CHECK(error_of(R"({"fish": {"link_mass": [1, 2]}})").find("link_mass") != std::string::npos);
  CHECK_FALSE(error_of("[1, 2]").empty());
  CHECK(error_of("{\n\"sac\": {,}\n}").find("run.json:2") != std::string::npos);
}

TEST_CASE("semantic validation runs after binding") {
  CHECK_FALSE(error_of(R"({"fluid": {"viscosity": 1e-6}})").empty());
  CHECK_FALSE(error_of(R"({"train": {"total_steps": 0}})").empty());
  CHECK_THROWS_AS(load("/nonexistent/run.json"), ConfigError);
}

TEST_CASE("the effective configuration round-trips") {
  RunConfig c = parse(R"({"fluid": {"nx": 80, "ny": 72, "domain_y": 3.24},
                          "sac": {"hidden": [32]},
                          "episode": {"task": "pentagram"}})");
  const std::string text = to_json(c);
  const RunConfig back = parse(text);
  CHECK(to_json(back) == text);
  CHECK(back.env.sim.ny == 72);
  CHECK(back.sac.hidden == std::vector<int>{32});
  CHECK(back.env.task.kind == env::TaskKind::kPentagram);
}

TEST_CASE("policy hash tracks dynamics and network shape only") {
  const std::string base = policy_hash(parse("{}"));
  CHECK(base.size() == 16);
  CHECK(policy_hash(parse("{}")) == base);
  CHECK(policy_hash(parse(R"({"episode": {"task": "uturn"}})")) == base);
  CHECK(policy_hash(parse(R"({"randomization": {"enabled": false}})")) == base);
  CHECK(policy_hash(parse(R"({"sac": {"learning_rate": 1e-3}})")) == base);
  CHECK(policy_hash(parse(R"({"sac": {"hidden": [64, 64]}})")) != base);
  CHECK(policy_hash(parse(R"({"fluid": {"nx": 128, "ny": 128}})")) != base);
  CHECK(policy_hash(parse(R"({"fish": {"servo": {"kp": [3, 3, 3]}}})")) != base);
  CHECK(policy_hash(parse(R"({"train": {"env": "sanity"}})")) != base);
}
