#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ecpsim/errors.hpp"
#include "ecpsim/scenario.hpp"

using namespace ecpsim;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kMinimalDoc = R"json({
  "name": "mini",
  "duration": 0.1,
  "bodies": [
    {"name": "cube", "kind": "cuboid", "extents": [1, 1, 1], "mass": 1.0,
     "position": [0, 0, 0.5]},
    {"name": "ground", "kind": "halfspace", "fixed": true}
  ],
  "contacts": [{"body_f": "cube", "body_g": "ground", "mu": 0.25}]
})json";

}  // namespace

TEST_CASE("minimal config with defaults") {
  const ScenarioConfig cfg = parse_config(kMinimalDoc);
  CHECK(cfg.params.beta == doctest::Approx(9.8));
  CHECK(cfg.params.h == doctest::Approx(0.01));
  CHECK(cfg.solver.tolerance == doctest::Approx(1e-8));
  CHECK(cfg.bodies.size() == 2);
  CHECK(cfg.contacts.size() == 1);
  CHECK(cfg.contacts[0].friction.e_t == 1.0);
  // Cube inertia derived from the shape.
  CHECK(cfg.bodies[0].inertia_body(0, 0) == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("unknown fields are rejected with their path") {
  const char* doc = R"json({"name": "x", "duration": 1,
    "bodies": [{"name": "b", "kind": "cuboid", "extents": [1,1,1], "massk": 2}]})json";
  try {
    parse_config(doc);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("massk") != std::string::npos);
  }
}

TEST_CASE("schema validation") {
  // Negative friction coefficient.
  std::string doc = kMinimalDoc;
  doc.replace(doc.find("0.25"), 4, "-0.1");
  CHECK_THROWS_AS(parse_config(doc), ConfigError);

  // Unknown body reference.
  std::string doc2 = kMinimalDoc;
  doc2.replace(doc2.find("\"ground\"", doc2.find("body_g")), 8, "\"nope\"");
  CHECK_THROWS_AS(parse_config(doc2), ConfigError);
}

TEST_CASE("builtin parameters match the published scenarios") {
  const ScenarioConfig s1 = builtin("scenario1");
  CHECK(s1.contacts[0].friction.mu == doctest::Approx(0.12));
  CHECK(s1.initial_states[0].linear_velocity.x() == doctest::Approx(4.0));
  CHECK(s1.duration == doctest::Approx(4.0));

  const ScenarioConfig s2 = builtin("scenario2");
  CHECK(s2.bodies[0].mass == doctest::Approx(10.0));
  CHECK(s2.bodies[0].geometry->length() == doctest::Approx(5.0));
  CHECK(s2.contacts[0].friction.mu == doctest::Approx(0.3));
  REQUIRE(s2.schedule.size() == 1);
  CHECK(s2.schedule[0].type == ScheduleEntry::Type::Triggered);
  CHECK(s2.schedule[0].condition == "spin_z_crosses_zero");
  CHECK(s2.schedule[0].impulse.angular.z() == doctest::Approx(3.0));

  const ScenarioConfig s3 = builtin("scenario3");
  CHECK(s3.contacts[0].friction.mu == doctest::Approx(0.2));
  CHECK(s3.initial_states[0].position.z() == doctest::Approx(std::sqrt(3.0) / 2));
  REQUIRE(s3.schedule.size() == 2);
  CHECK(s3.schedule[0].t_start == doctest::Approx(1.0));
  CHECK(s3.schedule[0].impulse.linear.x() == doctest::Approx(std::sqrt(2.0) / 2));
  CHECK(s3.schedule[0].impulse.angular.x() == doctest::Approx(0.5));
  CHECK(s3.schedule[1].impulse.linear.x() == doctest::Approx(10.0));

  const ScenarioConfig s4 = builtin("scenario4");
  CHECK(s4.bodies[0].mass == doctest::Approx(75.0));
  CHECK(s4.bodies[0].geometry->radius() == doctest::Approx(0.1));
  CHECK(s4.contacts.size() == 3);

  CHECK_THROWS_AS(builtin("scenario9"), ConfigError);
}

TEST_CASE("overlapping timed entries need the additive flag") {
  std::string doc = R"json({
    "name": "x", "duration": 1,
    "bodies": [
      {"name": "cube", "kind": "cuboid", "extents": [1,1,1], "position": [0,0,0.5]},
      {"name": "ground", "kind": "halfspace", "fixed": true}],
    "schedule": [
      {"type": "timed", "body": "cube", "t_start": 0.1, "t_end": 0.5, "linear": [1,0,0]},
      {"type": "timed", "body": "cube", "t_start": 0.3, "t_end": 0.6, "linear": [0,1,0]}]
  })json";
  CHECK_THROWS_AS(parse_config(doc), ConfigError);

  std::string additive = doc;
  size_t pos = 0;
  while ((pos = additive.find("\"type\": \"timed\"", pos)) != std::string::npos) {
    additive.replace(pos, 15, "\"type\": \"timed\", \"additive\": true");
    pos += 30;
  }
  CHECK_NOTHROW(parse_config(additive));
}

TEST_CASE("short run produces one row per step and deterministic csv") {
  ScenarioConfig cfg = parse_config(kMinimalDoc);
  cfg.duration = 0.05;
  const RunResult r1 = run_scenario(cfg, "/tmp/ecpsim_run_a.csv");
  CHECK(r1.exit_code == 0);
  CHECK(r1.steps_completed == 5);
  CHECK(r1.trajectory.size() == 5);
  CHECK(r1.trajectory.front().t == doctest::Approx(0.01));
  CHECK(r1.trajectory.back().t == doctest::Approx(0.05));

  const RunResult r2 = run_scenario(cfg, "/tmp/ecpsim_run_b.csv");
  CHECK(slurp("/tmp/ecpsim_run_a.csv") == slurp("/tmp/ecpsim_run_b.csv"));
  CHECK(!slurp("/tmp/ecpsim_run_a.csv").empty());
  std::remove("/tmp/ecpsim_run_a.csv");
  std::remove("/tmp/ecpsim_run_b.csv");
}

TEST_CASE("csv write failure maps to exit code 3") {
  ScenarioConfig cfg = parse_config(kMinimalDoc);
  cfg.duration = 0.02;
  const RunResult r = run_scenario(cfg, "/nonexistent_dir/out.csv");
  CHECK(r.exit_code == 3);
}

TEST_CASE("dump-config exposes the embedded documents") {
  CHECK(builtin_json("scenario1").find("0.12") != std::string::npos);
  CHECK_THROWS_AS(builtin_json("nope"), ConfigError);
}
