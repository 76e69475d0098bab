#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mgcs/ems.hpp"
#include "mgcs/scenario.hpp"

using namespace mgcs;

namespace {

BatterySpec battery(double capacity_wh) {
  BatterySpec b;
  b.capacity_wh = capacity_wh;
  b.p_conv_max_w = 1.5 * capacity_wh;
  b.p_dispatch_w = 0.4 * capacity_wh;
  return b;
}

// Flat-load, no-PV problem; costs reduce to hand arithmetic.
HorizonProblem flat_problem(int T, double load_w, double price) {
  HorizonProblem p;
  p.horizon = T;
  p.price_grid.assign(T, price);
  p.price_bess.assign(T, 0.0);
  p.load_w.push_back(std::vector<double>(T, load_w));
  return p;
}

DispatchPlan idle_plan(const HorizonProblem& p) {
  DispatchPlan plan;
  const int n = static_cast<int>(p.batteries.size());
  plan.d.assign(p.horizon, std::vector<int>(n, 0));
  plan.p_b.assign(p.horizon, std::vector<double>(n, 0.0));
  plan.e.assign(p.horizon + 1, std::vector<double>(n, 0.0));
  for (int t = 0; t <= p.horizon; ++t)
    for (int i = 0; i < n; ++i) plan.e[t][i] = p.batteries[i].e0_wh;
  plan.p_g.assign(p.horizon, 0.0);
  for (int t = 0; t < p.horizon; ++t)
    plan.p_g[t] = grid_power(p, t, plan.d[t]);
  return plan;
}

}  // namespace

TEST_CASE("soc_step: discharge drains, charge fills, scaled by eta") {
  const auto spec = battery(1000.0);
  // one hour at the 400 W dispatch quantum moves 0.95 * 400 = 380 Wh
  CHECK(soc_step(500.0, +1, spec, 1.0) == doctest::Approx(120.0));
  CHECK(soc_step(500.0, -1, spec, 1.0) == doctest::Approx(880.0));
  CHECK(soc_step(500.0, 0, spec, 1.0) == 500.0);
  CHECK(soc_step(500.0, +1, spec, 0.5) == doctest::Approx(310.0));
}

TEST_CASE("feasible_actions respects the soc band and preference order") {
  const auto spec = battery(1000.0);  // band [150, 950] Wh, step 380 Wh
  CHECK(feasible_actions(950.0, spec, 1.0) == std::vector<int>{0, +1});
  CHECK(feasible_actions(150.0, spec, 1.0) == std::vector<int>{0, -1});
  CHECK(feasible_actions(500.0, spec, 1.0) == std::vector<int>{0, -1});
  CHECK(feasible_actions(550.0, spec, 1.0) == std::vector<int>{0, -1, +1});
  // idle is always present
  CHECK(!feasible_actions(150.0, spec, 10.0).empty());
}

TEST_CASE("grid_power balances load, pv and dispatch") {
  HorizonProblem p = flat_problem(1, 1000.0, 0.1);
  p.pv_w.push_back({300.0});
  p.batteries.push_back({2, battery(1000.0), 500.0});
  int d_row[1] = {+1};
  CHECK(grid_power(p, 0, d_row) == doctest::Approx(1000.0 - 300.0 - 400.0));
  d_row[0] = -1;
  CHECK(grid_power(p, 0, d_row) == doctest::Approx(1000.0 - 300.0 + 400.0));
}

TEST_CASE("horizon_cost worked example: 720 W for 24 h at 0.10") {
  auto p = flat_problem(24, 720.0, 0.10);
  auto plan = idle_plan(p);
  CHECK(horizon_cost(p, plan) == doctest::Approx(1.728));
  // a plan whose trajectory leaves the band is rejected
  p.batteries.push_back({2, battery(1000.0), 500.0});
  plan = idle_plan(p);
  plan.e[5][0] = 10.0;
  CHECK_THROWS_AS(horizon_cost(p, plan), EmsError);
}

TEST_CASE("dp picks the obvious peak-discharge plan") {
  auto p = flat_problem(4, 500.0, 0.05);
  p.price_grid = {0.05, 0.30, 0.05, 0.05};
  p.batteries.push_back({2, battery(1000.0), 500.0});
  const auto plan = dp_dispatch(p);
  CHECK(plan.d[1][0] == +1);                       // discharge into the peak
  CHECK(plan.d[0][0] + plan.d[2][0] + plan.d[3][0] >= -1);
  CHECK(plan.e.front()[0] == 500.0);
  CHECK(plan.cost < horizon_cost(p, idle_plan(p)));
}

TEST_CASE("zero prices leave every battery idle (tie-break)") {
  auto p = flat_problem(6, 500.0, 0.0);
  p.batteries.push_back({2, battery(1000.0), 500.0});
  p.batteries.push_back({3, battery(2000.0), 1000.0});
  const auto plan = dp_dispatch(p);
  for (const auto& row : plan.d)
    for (int d : row) CHECK(d == 0);
  CHECK(plan.cost == 0.0);
}

TEST_CASE("dp equals brute force on random instances") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> horizon(2, 8);
  std::uniform_real_distribution<double> price(0.0, 0.3);
  std::uniform_real_distribution<double> load(0.0, 1500.0);
  std::uniform_real_distribution<double> soc0(0.2, 0.9);
  std::uniform_int_distribution<int> nbat(1, 3);
  for (int it = 0; it < 60; ++it) {
    HorizonProblem p;
    p.horizon = horizon(rng);
    for (int t = 0; t < p.horizon; ++t) {
      p.price_grid.push_back(price(rng));
      p.price_bess.push_back(0.25 * price(rng));
    }
    p.load_w.push_back({});
    for (int t = 0; t < p.horizon; ++t) p.load_w[0].push_back(load(rng));
    const int n = nbat(rng);
    for (int i = 0; i < n; ++i) {
      auto spec = battery(i % 2 ? 2000.0 : 1000.0);
      p.batteries.push_back({2 + i, spec, soc0(rng) * spec.capacity_wh});
    }
    const auto a = dp_dispatch(p);
    const auto b = brute_force_dispatch(p);
    CHECK(a.d == b.d);
    CHECK(a.cost == doctest::Approx(b.cost).epsilon(1e-12));
  }
}

TEST_CASE("problem validation") {
  auto p = flat_problem(4, 500.0, 0.1);
  p.price_bess.pop_back();
  CHECK_THROWS_AS(dp_dispatch(p), EmsError);
  p = flat_problem(4, 500.0, 0.1);
  p.batteries.push_back({2, battery(1000.0), 50.0});  // below soc_min
  CHECK_THROWS_AS(dp_dispatch(p), EmsError);
  p = flat_problem(14, 500.0, 0.1);
  p.batteries.push_back({2, battery(1000.0), 500.0});
  CHECK_THROWS_AS(brute_force_dispatch(p), EmsError);  // T > 12
}

TEST_CASE("controller samples forecasts at hour midpoints") {
  const auto cfg = default_scenario();
  EmsController ems(cfg, 1.0);
  std::map<int, EmsMeasurement> meas;
  for (const auto& bus : cfg.spec.buses)
    meas[bus.bus_id] = {0.5, 0.0, true};
  const auto prob = ems.build_problem(0.0, meas);
  const auto* grid = cfg.find_profile(ProfileKind::PriceGrid);
  CHECK(prob.price_grid[0] == doctest::Approx(grid->value_at(1800.0)));
  CHECK(prob.price_grid[7] == doctest::Approx(grid->value_at(7.5 * 3600.0)));
  REQUIRE(prob.batteries.size() == 4);
  CHECK(prob.batteries[0].e0_wh == doctest::Approx(500.0));
  // anchored at the hour containing now_s
  const auto prob2 = ems.build_problem(2.2 * 3600.0, meas);
  CHECK(prob2.price_grid[0] == doctest::Approx(grid->value_at(2.5 * 3600.0)));
  // missing battery measurement on the non-stale path throws
  meas.erase(3);
  CHECK_THROWS_AS(ems.build_problem(0.0, meas), EmsError);
}

TEST_CASE("stale measurements freeze the previous command row") {
  const auto cfg = default_scenario();
  EmsController ems(cfg, 0.5);
  std::map<int, EmsMeasurement> meas;
  for (const auto& bus : cfg.spec.buses)
    meas[bus.bus_id] = {0.5, 100.0, true};
  auto fresh = ems.tick(100.2, meas);
  CHECK(!fresh.stale);
  REQUIRE(fresh.commands.size() == 4);
  for (auto [bus, d] : fresh.commands) CHECK((d >= -1 && d <= 1));
  // same measurements, too old now
  auto stale = ems.tick(101.0, meas);
  CHECK(stale.stale);
  CHECK(stale.commands == fresh.commands);
  CHECK(stale.plan.d.empty());
  // a missing unit also counts as stale rather than throwing
  meas.erase(4);
  meas[2].t_recv_s = 100.9;
  CHECK(ems.tick(101.0, meas).stale);
}

TEST_CASE("default staleness limit tracks the traffic class") {
  auto cfg = default_scenario();
  cfg.traffic_class = TrafficClass::DS3;
  cfg.congestion = 0.0;
  const double ds3 = default_staleness_limit_s(cfg);
  // two poll periods plus two one-way delays of roughly 2.03 ms
  CHECK(ds3 > 0.204);
  CHECK(ds3 < 0.205);
  cfg.traffic_class = TrafficClass::DS0;
  const double ds0 = default_staleness_limit_s(cfg);
  CHECK(ds0 > ds3);
  CHECK(ds0 == doctest::Approx(0.2 + 2.0 * 24.25e-3).epsilon(1e-3));
}
