#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "synccav/ctm.hpp"
#include "synccav/feasibility.hpp"
#include "synccav/mpc.hpp"
#include "synccav/types.hpp"
#include "synccav/weights.hpp"
#include "synccav/world.hpp"

namespace synccav::harness {

struct SyncTolerances {
  double eps_d = 2.0;  // m
  double eps_v = 0.5;  // m/s
  int hold = 3;        // consecutive steps
};

struct HarnessOptions {
  weights::Strategy strategy = weights::Strategy::Adaptive;
  int step_budget = 300;
  mpc::MpcOptions mpc;
  bool fallback = true;  // q2 -> q1 when the following relation is lost
  int fallback_steps = 2;
  SyncTolerances tol;
  bool stop_when_synced = true;
  bool strict_guard = false;  // halt when the feasibility guard reports a violated condition
};

struct StepRecord {
  int step = 0;
  Phase phase = Phase::CatchUp;
  int follower = 1;                 // subject slot that follows in q2
  std::vector<Vehicle> vehicles;    // states at the start of the step
  std::array<ControlInput2D, 2> applied{};
  mpc::SolveStatus status = mpc::SolveStatus::Optimal;
  bool used_first_iterate = false;
  bool deferred_switch = false;  // platoon entry postponed because its problem was infeasible
  int pc_iterations = 0;
  bool pc_converged = false;
  int nodes = 0;
  double wall = 0.0;
  double objective = 0.0;
  double gap = 0.0;
  weights::LossReport losses;
  weights::WeightConfig weights;
  guard::FeasibilityReport feasibility;
  int safeguard_clamps = 0;
  int handoffs = 0;
};

// Vehicle accounting of the coupled CTM over all lanes (vehicles).
struct FlowAccount {
  double initial = 0.0;
  double inflow = 0.0;
  double outflow = 0.0;
  double exits = 0.0;    // tracked vehicles leaving past the road end
  double entries = 0.0;  // tracked vehicles entering at the upstream boundary
  double current = 0.0;

  double expected() const { return initial + inflow - outflow - exits + entries; }
  double relative_error() const;
};

struct SimTrace {
  std::vector<StepRecord> steps;
  std::vector<std::vector<ctm::CellLane>> flow;  // flow[t] at the start of step t, plus the final state
  std::vector<Vehicle> final_vehicles;
  FlowAccount account;
  bool truncated = false;
  std::string termination;  // "synced", "budget", "infeasible", "road_end", "guard"
  Phase final_phase = Phase::CatchUp;
  SyncTolerances tol;
  LaneGeometry geometry;
  double desired_spacing = 20.0;
  double dt = 1.0;
  double v_max = 33.33;
  double monitoring_range = 150.0;
};

struct Metrics {
  bool complete = false;         // run ended without truncation
  bool catchup_reached = false;  // a following relation formed
  bool synced = false;
  double sync_time_catchup = 0.0;  // s
  double sync_time_total = 0.0;    // s
  double avg_traffic_speed = 0.0;  // m/s
  double control_rms = 0.0;        // m/s^2
  double rel_speed_var = 0.0;      // m^2/s^2
  int steps = 0;
  int infeasible_steps = 0;
  int gap_violations = 0;
  double min_gap = 0.0;  // smallest same-lane bumper gap over the trace
  int phase_switches_to_q2 = 0;
  SyncTolerances tol;
};

// CTM lanes of the scenario with tracked counts taken from the world.
std::vector<ctm::CellLane> make_lanes(const ScenarioConfig& cfg, const world::World& w);
std::vector<std::vector<double>> tracked_counts(const std::vector<ctm::CellLane>& lanes, const world::World& w);

// Advances the lanes one step against the already advanced world; removed vehicles still on the road are handed to
// the flow of their cell. Updates the account.
std::vector<ctm::CellLane> couple_step(const std::vector<ctm::CellLane>& lanes, const world::World& before,
                                       const world::World& after, const std::vector<Vehicle>& removed, double dt,
                                       FlowAccount& acc, int* handoffs = nullptr);

double total_vehicles(const std::vector<ctm::CellLane>& lanes, double dt);

// Subject slot following the other one immediately in some lane, -1 if neither.
int following_subject(const world::World& w);

Phase phase_update(Phase current, bool following, int& absent_steps, int fallback_steps, bool fallback);

SimTrace run_closed_loop(const ScenarioConfig& cfg, const HarnessOptions& opt);

Metrics compute_metrics(const SimTrace& trace);

// Greenshield volume-to-capacity ratio 4(k/kj) - 4(k/kj)^2. Throws outside [0, k_jam].
double congestion_ratio(double k, double k_jam);

// ---- data ingestion ----

struct ColumnMap {
  std::string vehicle_id = "vehicle_id";
  std::string frame = "frame";
  std::string time = "time";
  std::string x = "x";
  std::string y = "y";
  std::string speed = "speed";
  std::string lane = "lane";
};

struct IngestOptions {
  ColumnMap columns;
  bool feet = false;  // positions and speeds in ft, ft/s
  int subject_a = -1;  // vehicle ids of the subject pair; -1 picks the two lowest ids
  int subject_b = -1;
  double window_start = -1.0;  // s; -1 uses the earliest time
  double lane_width = 3.6;
  int lanes = 0;  // 0 derives the count from the data
};

struct IngestError : std::runtime_error {
  std::vector<std::string> items;
  explicit IngestError(std::vector<std::string> items);
};

struct TrajectoryRecord {
  int id = 0;
  long frame = 0;
  double time = 0.0;
  double x = 0.0, y = 0.0, speed = 0.0;
  int lane = 0;
};

std::vector<TrajectoryRecord> parse_trajectories(const std::string& csv_text, const IngestOptions& opt);
ScenarioConfig load_trajectories(const std::string& path, const IngestOptions& opt);
ScenarioConfig scenario_from_records(const std::vector<TrajectoryRecord>& recs, const IngestOptions& opt);

// ---- export ----

std::string trajectory_csv(const SimTrace& t);
std::string metrics_json(const Metrics& m, const SimTrace& t);
std::string plot_data(const SimTrace& t);
std::string loss_log_csv(const SimTrace& t);
// Writes trajectory.csv, flow.csv, metrics.json, plot.dat and losses.csv into dir. Throws with the path on failure.
void export_results(const SimTrace& t, const Metrics& m, const std::string& dir);

// ---- scenario generators ----

// Two subjects 60 m apart in adjacent lanes behind slower traffic, two HDVs, v/c about 0.5.
ScenarioConfig canonical_scenario();

struct FamilyParams {
  double vc = 0.5;          // target volume-to-capacity ratio
  double cav_share = 0.0;   // fraction of neighbors that are CAVs
  std::uint64_t seed = 1;
};
ScenarioConfig family_scenario(const FamilyParams& p);

// Randomized start used by the recursive-feasibility runs (not guaranteed to pass the feasibility guard).
ScenarioConfig random_scenario(std::uint64_t seed);

}  // namespace synccav::harness
