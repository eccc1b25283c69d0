#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "support/instances.hpp"
#include "synccav/feasibility.hpp"
#include "synccav/harness.hpp"
#include "synccav/scenario.hpp"

using namespace synccav;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kInfeasible = 2;
constexpr int kInvalid = 3;

ScenarioConfig load(const std::string& s) {
  if (s == "canonical") return harness::canonical_scenario();
  return scenario::load_scenario_file(s);
}

weights::Strategy strategy_of(const std::string& s) {
  if (s == "s1") return weights::Strategy::S1;
  if (s == "s2") return weights::Strategy::S2;
  if (s == "s3") return weights::Strategy::S3;
  return weights::Strategy::Adaptive;
}

struct RunFlags {
  std::string strategy = "adaptive";
  int steps = 300;
  int node_budget = 20000;
  double time_limit = 0.8;
  double eps_d = 2.0, eps_v = 0.5;
  int hold = 3;
  bool no_stop = false;
  bool strict_guard = false;
};

void add_run_flags(CLI::App* a, RunFlags& f) {
  a->add_option("--strategy", f.strategy, "Weighting strategy")
      ->check(CLI::IsMember({"adaptive", "s1", "s2", "s3"}))
      ->capture_default_str();
  a->add_option("--steps", f.steps, "Step budget")->capture_default_str();
  a->add_option("--node-budget", f.node_budget, "Branch-and-bound node budget per solve")->capture_default_str();
  a->add_option("--time-limit", f.time_limit, "Wall-clock limit per solve in s (<= 0 disables)")
      ->capture_default_str();
  a->add_option("--eps-d", f.eps_d, "Spacing tolerance of the sync rule (m)")->capture_default_str();
  a->add_option("--eps-v", f.eps_v, "Speed tolerance of the sync rule (m/s)")->capture_default_str();
  a->add_option("--hold", f.hold, "Steps the sync rule must hold")->capture_default_str();
  a->add_flag("--no-stop", f.no_stop, "Keep running after synchronization");
  a->add_flag("--strict-guard", f.strict_guard, "Stop when the feasibility guard reports a violation");
}

harness::HarnessOptions options_of(const RunFlags& f) {
  harness::HarnessOptions o;
  o.strategy = strategy_of(f.strategy);
  o.step_budget = f.steps;
  o.mpc.node_budget = f.node_budget;
  o.mpc.time_limit = f.time_limit;
  o.tol = {f.eps_d, f.eps_v, f.hold};
  o.stop_when_synced = !f.no_stop;
  o.strict_guard = f.strict_guard;
  return o;
}

void print_validation(const ValidationError& e) {
  std::cerr << "invalid scenario:\n";
  for (const auto& m : e.messages) std::cerr << "  " << m << "\n";
}

int cmd_run(const std::string& path, const std::string& out, const RunFlags& f) {
  auto cfg = load(path);
  auto tr = harness::run_closed_loop(cfg, options_of(f));
  auto m = harness::compute_metrics(tr);
  if (!out.empty()) harness::export_results(tr, m, out);
  std::printf("termination %s steps %d sync_total %.1f s avg_speed %.3f m/s gap_violations %d\n",
              tr.termination.c_str(), m.steps, m.sync_time_total, m.avg_traffic_speed, m.gap_violations);
  return tr.truncated ? kInfeasible : kOk;
}

int cmd_check(const std::string& path) {
  auto cfg = load(path);
  scenario::validate_scenario(cfg);
  auto r = guard::check_theorem1(cfg.vehicles, cfg.geometry, cfg.limits, cfg.dt, true);
  std::printf("condition i   %s\n", r.condition_i ? "ok" : "fail");
  for (const auto& s : r.condition_ii) std::printf("condition ii  vehicle %d v %.3f %s\n", s.id, s.v, s.ok ? "ok" : "fail");
  for (const auto& t : r.condition_iii)
    std::printf("condition iii vehicle %d tau %.3f bound %.3f %s\n", t.id, t.tau, t.bound, t.ok ? "ok" : "fail");
  for (const auto& c : r.condition_iv)
    std::printf("condition iv  %d behind %d relative %.3f threshold %.3f %s\n", c.follower, c.leader, c.relative,
                c.threshold, !c.applicable ? "n/a" : (c.ok ? "ok" : "fail"));
  std::printf("overall %s\n", r.overall ? "feasible" : "not guaranteed");
  return r.overall ? kOk : kInfeasible;
}

int cmd_sweep(const std::vector<double>& vcs, const std::vector<double>& shares, int seeds, std::uint64_t seed,
              const std::string& out, const RunFlags& f) {
  std::ostringstream csv;
  csv << "vc,cav_share,seed,termination,steps,sync_time_total,avg_traffic_speed,infeasible_steps,gap_violations\n";
  bool infeasible = false;
  for (double vc : vcs)
    for (double sh : shares)
      for (int k = 0; k < seeds; ++k) {
        std::uint64_t s = seed + static_cast<std::uint64_t>(k);
        auto cfg = harness::family_scenario({vc, sh, s});
        auto tr = harness::run_closed_loop(cfg, options_of(f));
        auto m = harness::compute_metrics(tr);
        infeasible |= tr.truncated;
        char line[256];
        std::snprintf(line, sizeof line, "%.3f,%.3f,%llu,%s,%d,%.1f,%.6f,%d,%d\n", vc, sh,
                      static_cast<unsigned long long>(s), tr.termination.c_str(), m.steps, m.sync_time_total,
                      m.avg_traffic_speed, m.infeasible_steps, m.gap_violations);
        csv << line;
      }
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream o(out);
    if (!(o << csv.str())) throw std::runtime_error("cannot write '" + out + "'");
  }
  return infeasible ? kInfeasible : kOk;
}

int cmd_oracle(int count, std::uint64_t seed, int max_t) {
  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  int disagree = 0;
  for (int k = 0; k < count; ++k) {
    int T = 1 + k % max_t;
    auto in = testsupport::next_tractable(rng, T);
    auto s = mpc::solve(in.p);
    auto o = mpc::brute_force_oracle(in.p, in.w, testsupport::grid_for(T));
    bool agree = s.ok() == (o.status == mpc::SolveStatus::Optimal);
    if (agree && s.ok()) agree = s.objective <= o.objective + 1e-6;
    disagree += !agree;
    std::printf("%3d T %d %-9s solver %-10s %12.6f oracle %-10s %12.6f %s\n", k, T, to_string(in.phase),
                mpc::to_string(s.status), s.objective, mpc::to_string(o.status), o.objective, agree ? "ok" : "MISMATCH");
  }
  std::printf("%d of %d instances agree\n", count - disagree, count);
  return disagree ? kFailed : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-vehicle synchronization controller in mixed traffic"};
  app.require_subcommand(1);

  RunFlags rf;
  std::string scen = "canonical", out;
  auto* run = app.add_subcommand("run", "Closed-loop run of a scenario");
  run->add_option("scenario", scen, "Scenario JSON file or 'canonical'")->capture_default_str();
  run->add_option("-o,--out", out, "Output directory");
  add_run_flags(run, rf);

  auto* check = app.add_subcommand("check", "Feasibility guard on the initial state of a scenario");
  check->add_option("scenario", scen, "Scenario JSON file or 'canonical'")->capture_default_str();

  std::vector<double> vcs{0.35, 0.55, 0.75}, shares{0.2, 0.6};
  int seeds = 5;
  std::uint64_t seed = 1;
  auto* sweep = app.add_subcommand("sweep", "Grid over v/c and neighbor CAV share");
  sweep->add_option("--vc", vcs, "Volume-to-capacity ratios")->delimiter(',')->capture_default_str();
  sweep->add_option("--share", shares, "Neighbor CAV shares")->delimiter(',')->capture_default_str();
  sweep->add_option("--seeds", seeds, "Scenarios per grid point")->capture_default_str();
  sweep->add_option("--seed", seed, "First generator seed")->capture_default_str();
  sweep->add_option("-o,--out", out, "CSV output file (stdout if omitted)");
  add_run_flags(sweep, rf);

  harness::IngestOptions io;
  std::string input, output;
  auto* ingest = app.add_subcommand("ingest", "Trajectory CSV to scenario JSON");
  ingest->add_option("input", input, "Trajectory CSV")->required();
  ingest->add_option("output", output, "Scenario JSON to write")->required();
  ingest->add_flag("--feet", io.feet, "Positions and speeds are in feet");
  ingest->add_option("--subject-a", io.subject_a, "Vehicle id of the first subject");
  ingest->add_option("--subject-b", io.subject_b, "Vehicle id of the second subject");
  ingest->add_option("--window-start", io.window_start, "Snapshot time (s)");
  ingest->add_option("--lanes", io.lanes, "Lane count (derived when omitted)");
  ingest->add_option("--lane-width", io.lane_width, "Lane width (m)")->capture_default_str();
  ingest->add_option("--col-id", io.columns.vehicle_id)->capture_default_str();
  ingest->add_option("--col-frame", io.columns.frame)->capture_default_str();
  ingest->add_option("--col-time", io.columns.time)->capture_default_str();
  ingest->add_option("--col-x", io.columns.x)->capture_default_str();
  ingest->add_option("--col-y", io.columns.y)->capture_default_str();
  ingest->add_option("--col-speed", io.columns.speed)->capture_default_str();
  ingest->add_option("--col-lane", io.columns.lane)->capture_default_str();

  int count = 50, max_t = 3;
  auto* oracle = app.add_subcommand("oracle", "Solver against exhaustive search on tiny instances");
  oracle->add_option("--count", count, "Instances")->capture_default_str();
  oracle->add_option("--seed", seed, "Instance seed")->capture_default_str();
  oracle->add_option("--max-horizon", max_t, "Largest horizon")->check(CLI::Range(1, 3))->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(scen, out, rf);
    if (*check) return cmd_check(scen);
    if (*sweep) return cmd_sweep(vcs, shares, seeds, seed, out, rf);
    if (*ingest) {
      auto cfg = harness::load_trajectories(input, io);
      scenario::validate_scenario(cfg);
      std::ofstream o(output);
      if (!(o << scenario::scenario_to_json(cfg))) throw std::runtime_error("cannot write '" + output + "'");
      std::printf("%zu vehicles, %d lanes -> %s\n", cfg.vehicles.size(), cfg.geometry.count(), output.c_str());
      return kOk;
    }
    if (*oracle) return cmd_oracle(count, seed, max_t);
  } catch (const ValidationError& e) {
    print_validation(e);
    return kInvalid;
  } catch (const harness::IngestError& e) {
    std::cerr << "cannot ingest trajectories:\n";
    for (const auto& m : e.items) std::cerr << "  " << m << "\n";
    return kInvalid;
  } catch (const mpc::InfeasibleAtStart& e) {
    std::cerr << e.what() << "\n";
    return kInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kOk;
}
