#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>

#include "synccav/ctm.hpp"

using namespace synccav;
using namespace synccav::ctm;
using doctest::Approx;

namespace {

// Independent recomputation of one update straight from the definitions, in vehicle counts per step.
std::vector<double> reference_step(const std::vector<double>& f, const std::vector<double>& tracked, double inflow,
                                   double qmax, double kjam, double w, double dL, double dt) {
  const std::size_t n = f.size();
  std::vector<double> send(n), recv(n), enter(n + 1);
  for (std::size_t c = 0; c < n; ++c) {
    double veh = f[c] * dt / 3600.0 + tracked[c];
    double dens = veh / dL;
    send[c] = f[c] < qmax ? f[c] : qmax;
    double rc = w * (kjam - dens) * 3600.0;
    if (rc < 0) rc = 0;
    recv[c] = rc < qmax ? rc : qmax;
  }
  enter[0] = inflow < recv[0] ? inflow : recv[0];
  for (std::size_t c = 1; c < n; ++c) enter[c] = send[c - 1] < recv[c] ? send[c - 1] : recv[c];
  enter[n] = send[n - 1];
  std::vector<double> out(n);
  for (std::size_t c = 0; c < n; ++c) out[c] = f[c] + enter[c] - enter[c + 1];
  return out;
}

CtmParams P() { return {}; }

}  // namespace

TEST_CASE("coupled density") {
  CHECK(coupled_density(0, 2, 1, 40) == Approx(0.05));
  CHECK(coupled_density(1800, 0, 1, 40) == Approx(0.0125));
  // a synthetic stream at 1800 veh/h carries 0.5 vehicles per one-second step
  CHECK(1800.0 / 3600.0 * 1.0 == Approx(0.5));
  // k_jam reached with 4 tracked: flow equivalent of 0.8 vehicles
  double f = (0.12 * 40 - 4) * 3600.0;
  CHECK(f * 1.0 / 3600.0 == Approx(0.8));
  CHECK(coupled_density(f, 4, 1, 40) == Approx(0.12));
}

TEST_CASE("empty lane stays empty") {
  auto l = make_lane(5, P(), 40, 0, 0, 1);
  for (int t = 0; t < 10; ++t) l = ctm_step(l, std::vector<double>(5, 0), 1);
  for (int c = 0; c < 5; ++c) {
    CHECK(l.f[c] == 0);
    CHECK(l.k[c] == 0);
  }
}

TEST_CASE("sending and receiving bounds") {
  auto l = make_lane(3, P(), 40, 1000, 0, 1);
  CHECK(l.s[1] == 1000);
  l.f[1] = 2500;
  refresh(l, 1);
  CHECK(l.s[1] == 2000);
  // a jammed cell receives nothing
  l.tracked[2] = 0.12 * 40 - l.f[2] / 3600.0;
  refresh(l, 1);
  CHECK(l.k[2] == Approx(0.12));
  CHECK(l.r[2] == Approx(0.0).epsilon(1e-9));
  CHECK(l.y[2] == Approx(0.0).epsilon(1e-9));
}

TEST_CASE("free flow: entering equals upstream sending") {
  auto l = make_lane(6, P(), 40, 600, 600, 1);
  for (int t = 0; t < 20; ++t) {
    for (int c = 1; c < 6; ++c) CHECK(l.y[c] == Approx(l.s[c - 1]));
    l = ctm_step(l, std::vector<double>(6, 0), 1);
  }
}

TEST_CASE("matches the reference recomputation on 3 cells over 10 steps") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> F(0, 2600), T(0, 2);
  for (int rep = 0; rep < 20; ++rep) {
    auto l = make_lane(3, P(), 40, 0, F(rng), 1);
    for (int c = 0; c < 3; ++c) l.f[c] = F(rng);
    l.tracked = {std::floor(T(rng)), std::floor(T(rng)), std::floor(T(rng))};
    refresh(l, 1);
    for (int t = 0; t < 10; ++t) {
      auto ref = reference_step(l.f, l.tracked, l.inflow, 2000, 0.12, 6, 40, 1);
      std::vector<double> next{std::floor(T(rng)), std::floor(T(rng)), std::floor(T(rng))};
      l = ctm_step(l, next, 1);
      for (int c = 0; c < 3; ++c) CHECK(l.f[c] == Approx(ref[c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("conservation with boundary accounting") {
  auto l = make_lane(10, P(), 40, 900, 1500, 1);
  double in = 0, out = 0;
  const double start = vehicle_count(l, 1);
  for (int t = 0; t < 200; ++t) {
    in += l.y[0] / 3600.0;
    out += l.outflow / 3600.0;
    l = ctm_step(l, std::vector<double>(10, 0), 1);
  }
  CHECK(vehicle_count(l, 1) == Approx(start + in - out).epsilon(1e-12));
}

TEST_CASE("tracked vehicles never raise receiving flow") {
  auto l = make_lane(4, P(), 40, 1500, 0, 1);
  double prev = l.r[2];
  for (int n = 1; n <= 5; ++n) {
    l.tracked[2] = n;
    refresh(l, 1);
    CHECK(l.r[2] <= prev);
    prev = l.r[2];
  }
}

TEST_CASE("density stays within bounds without tracked vehicles") {
  auto l = make_lane(8, P(), 40, 2500, 2000, 1);
  for (int t = 0; t < 100; ++t) {
    for (int c = 0; c < 8; ++c) {
      CHECK(l.k[c] >= 0);
      CHECK(l.k[c] <= 0.12 + 1e-12);
    }
    l = ctm_step(l, std::vector<double>(8, 0), 1);
  }
}

TEST_CASE("trace export") {
  std::vector<std::vector<CellLane>> h{{make_lane(2, P(), 40, 100, 0, 1)}};
  auto rows = upstream_impact_trace(h);
  CHECK(rows.size() == 2);
  auto csv = flow_csv(rows);
  CHECK(csv.rfind("step,lane,cell,f,y,k,tracked_count\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
