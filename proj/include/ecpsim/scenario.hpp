#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ecpsim/oracles.hpp"
#include "ecpsim/stepper.hpp"

namespace ecpsim {

/// Event-driven or timed applied-impulse schedule entry. Timed entries fire
/// on every step whose start time lies in [t_start, t_end); triggered
/// entries fire when the named predicate holds, at most once per
/// refractory window.
struct ScheduleEntry {
  enum class Type { Timed, Triggered };
  Type type = Type::Timed;
  int body = 0;
  AppliedImpulse impulse;
  double t_start = 0.0;
  double t_end = 0.0;
  std::string condition;  // "spin_z_crosses_zero"
  int refractory_steps = 1;
  bool additive = false;
};

struct ScenarioConfig {
  std::string name;
  std::vector<RigidBody> bodies;
  std::vector<State> initial_states;
  std::vector<ContactPair> contacts;
  StepParams params;
  double duration = 1.0;
  SolveOptions solver;
  std::vector<ScheduleEntry> schedule;
  std::string output_path;
};

struct BodyRecord {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
  Vec3 linear_velocity = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();
};

struct ContactRecord {
  Vec3 a1 = Vec3::Zero();
  Vec3 a2 = Vec3::Zero();
  double p_n = 0.0, p_t = 0.0, p_o = 0.0, p_r = 0.0, sigma = 0.0;
  int facets = 0;
  double gap = 0.0;
  double L = 0.0, D = 0.0;
  VecX l_f;
  int k1 = 0;
  Vec3 frame_n = Vec3::UnitZ();
};

/// One row per step (t is the end-of-step time). Applied impulses actually
/// delivered during the step and the solver report are kept for
/// verification harnesses.
struct TrajectoryRecord {
  double t = 0.0;
  std::vector<BodyRecord> bodies;
  std::vector<ContactRecord> contacts;
  std::vector<AppliedImpulse> applied;
  SolveReport report;
};

/// Parses and validates a JSON scenario document; unknown fields are
/// rejected with their path. Defaults: gravity 9.8, step 0.01, tolerance 1e-8.
ScenarioConfig parse_config(const std::string& text);

/// The four built-in paper scenarios, embedded as JSON.
ScenarioConfig builtin(const std::string& name);
const std::string& builtin_json(const std::string& name);

struct RunResult {
  int exit_code = 0;  // 0 ok, 2 solver failure, 3 I/O failure
  std::vector<TrajectoryRecord> trajectory;
  int steps_completed = 0;
};

/// Steps the scenario for duration/h steps, evaluating the schedule each
/// step. Writes one CSV row per completed step to csv_path (or the config's
/// output path; empty disables the file).
RunResult run_scenario(const ScenarioConfig& config, const std::string& csv_path = "");

struct CheckResult {
  std::string name;
  bool pass = false;
  double measured = 0.0;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

/// Scenario-specific verification checks evaluated on a finished run.
VerifyReport verify_scenario(const ScenarioConfig& config, const RunResult& run);

/// Runs a builtin (or a config file path) and prints one pass/fail line per
/// check. Returns the process exit code (0 pass, 1 fail, 2 solver, 3 I/O).
int verify(const std::string& name_or_path);

/// Deepest boundary-probe penetration of any body into any other (meters,
/// >= 0); used by the non-penetration checks.
double max_penetration_depth(const std::vector<RigidBody>& bodies,
                             const std::vector<State>& states);

/// Contact-line angle (vs world X) of a lying cylinder's axis; nullopt for
/// other shapes.
std::optional<double> line_angle(const RigidBody& body, const Quat& orientation);

}  // namespace ecpsim
