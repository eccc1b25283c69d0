#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "synccav/ctm.hpp"
#include "synccav/linear.hpp"
#include "synccav/types.hpp"
#include "synccav/weights.hpp"
#include "synccav/world.hpp"

namespace synccav::mpc {

// Predicted neighbor trajectory, index t = 0..T.
struct NeighborPrediction {
  int id = 0;
  VehicleClass cls = VehicleClass::Hdv;
  int lane = 0;
  VehicleParams params;
  std::vector<double> x, v;
};

// Everything one horizon problem needs.
struct Snapshot {
  LaneGeometry geometry;
  LimitSet limits;
  double dt = 1.0;
  int horizon = 5;
  double desired_spacing = 20.0;
  double big_m = 6000.0;
  std::array<Kinematics2D, 2> subject{};
  std::array<int, 2> subject_id{1, 2};
  std::array<VehicleParams, 2> subject_params{};
  std::vector<NeighborPrediction> neighbors;
  // Flow loss caused by a subject occupying (lane, step): [(i*T + t-1)*lanes + l], normalized by q_max^2.
  std::vector<double> flow_penalty;
  Phase phase = Phase::CatchUp;
  int follower = 1;  // platoon phase: which subject (0/1) follows the other
};

struct InfeasibleAtStart : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MpcOptions {
  int node_budget = 20000;
  double time_limit = 0.8;  // seconds per solve; <= 0 disables the wall-clock budget
  double feas_tol = 1e-6;
  int cut_rounds = 12;
  bool check_initial = true;
  int pc_max_iters = 5;
  double pc_tol = 0.01;  // m
};

// Semantic tag of each binary variable.
enum class BinKind { None, Gamma, Order, Pair, CutIn, Follow };
struct BinMeta {
  BinKind kind = BinKind::None;
  int subject = -1;   // 0/1
  int neighbor = -1;  // index into Snapshot::neighbors
  int lane = -1;
  int step = -1;
  int dir = 0;        // Follow: 0 means subject 0 follows subject 1
};

struct MpcProblem {
  Snapshot snap;
  int T = 0;
  LinearConstraintSet cs;
  int n_u = 0;
  int n_cont = 0;  // u then z
  std::vector<BinMeta> meta;  // per variable
  bool trivially_infeasible = false;
  std::string infeasible_reason;

  // Condensed subject states as affine maps of the controls, t = 0..T.
  std::array<std::vector<Affine>, 2> x, y, vx, vy;
  // Lane per subject and step when only one is admissible (its indicator is the constant 1), else -1.
  std::array<std::vector<int>, 2> fixed_lane;

  // Objective 1/2 c'Hc + g'c + c0 over continuous variables plus bin_obj over binaries.
  Phase phase = Phase::CatchUp;
  weights::WeightConfig weights;
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  double c0 = 0.0;
  std::vector<double> bin_obj;

  int u_index(int subject, int axis, int step) const { return (subject * 2 + axis) * T + step; }
  int z_index(int t) const { return n_u + t - 1; }
};

// Throws InfeasibleAtStart when a subject starts inside its safety gap (unless options disable the check).
MpcProblem assemble_constraints(const Snapshot& snap, const MpcOptions& opt = {});
// Catch-up: J_u + J_w - J_y - J_eta; platoon: J_u + J_w - J_y + J_v + J_z. Throws on invalid weights.
void assemble_objective(MpcProblem& p, Phase phase, const weights::WeightConfig& w);

enum class SolveStatus { Optimal, Feasible, Infeasible, TimeLimit };
const char* to_string(SolveStatus s);

struct Breakdown {
  double J_u = 0, J_w = 0, J_y = 0, J_eta = 0, J_v = 0, J_z = 0;
  double total() const { return J_u + J_w - J_y - J_eta + J_v + J_z; }
};

using Plan = std::array<std::vector<ControlInput2D>, 2>;

struct MpcSolution {
  SolveStatus status = SolveStatus::Infeasible;
  Plan u;
  std::vector<double> values;  // full variable assignment
  double objective = 0.0;
  Breakdown parts;
  int nodes = 0;
  double wall = 0.0;
  double root_bound = 0.0;
  double best_bound = 0.0;
  double gap = 0.0;
  bool ok() const { return status == SolveStatus::Optimal || status == SolveStatus::Feasible; }
};

// Subject states t = 0..T under a plan.
std::array<std::vector<Kinematics2D>, 2> trajectory(const Snapshot& s, const Plan& u);

MpcSolution solve(const MpcProblem& p, const MpcOptions& opt = {}, const Plan* warm = nullptr);

// Objective parts of a full assignment.
Breakdown evaluate(const MpcProblem& p, const std::vector<double>& values);

// Exhaustive search over a control grid. Neighbors are re-simulated through the plant for every candidate.
// Tractability guard: T <= 3, at most 2 neighbors and 2 lanes.
struct OracleGrid {
  double ux_step = 0.5;
  std::vector<double> uy_values{-1.0, 0.0, 1.0};
};
MpcSolution brute_force_oracle(const MpcProblem& p, const world::World& w, const OracleGrid& grid);

// Snapshot for the current world, with neighbors predicted against subject reference trajectories.
Snapshot make_snapshot(const ScenarioConfig& cfg, const world::World& w,
                       const std::array<std::vector<Kinematics2D>, 2>& ref, const std::vector<ctm::CellLane>* lanes,
                       Phase phase, int follower);

struct PcResult {
  MpcSolution last;
  MpcSolution first;
  int iterations = 0;
  bool converged = false;
};

// Alternates solving against fixed neighbor predictions and re-predicting neighbors from the new plan.
PcResult predictor_corrector_iterate(const ScenarioConfig& cfg, const world::World& w,
                                     const std::vector<ctm::CellLane>* lanes, Phase phase, int follower,
                                     const weights::WeightConfig& weights, const MpcOptions& opt,
                                     const Plan* previous = nullptr);

std::string problem_dump(const MpcProblem& p);
std::string solution_dump(const MpcProblem& p, const MpcSolution& s);

}  // namespace synccav::mpc
