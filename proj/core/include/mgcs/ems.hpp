#pragma once

#include <map>
#include <span>
#include <vector>

#include "mgcs/scenario.hpp"
#include "mgcs/types.hpp"

namespace mgcs {

// Per-battery state for a horizon problem.
struct HorizonBattery {
  int bus_id = 0;
  BatterySpec spec;
  double e0_wh = 0.0;
};

struct HorizonProblem {
  int horizon = 24;        // T stages
  double dt_h = 1.0;
  std::vector<double> price_grid;           // length T, currency/kWh
  std::vector<double> price_bess;           // length T
  std::vector<std::vector<double>> load_w;  // per bus, each length T
  std::vector<std::vector<double>> pv_w;    // per pv unit, each length T
  std::vector<HorizonBattery> batteries;
};

struct DispatchPlan {
  std::vector<std::vector<int>> d;       // [T][n] in {-1,0,+1}
  std::vector<std::vector<double>> p_b;  // [T][n] watts, discharge positive
  std::vector<double> p_g;               // [T] watts, import positive
  std::vector<std::vector<double>> e;    // [T+1][n] watt-hours
  double cost = 0.0;                     // currency over the horizon

  bool operator==(const DispatchPlan&) const = default;
};

struct EmsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Stored-energy update for one stage. Discharge (d=+1) reduces the stored
// energy by eta * p_dispatch * dt.
double soc_step(double e_wh, int d, const BatterySpec& spec, double dt_h);

// Subset of {-1, 0, +1} whose soc_step result stays within bounds. Always
// contains 0. Returned in preference order: 0, -1, +1.
std::vector<int> feasible_actions(double e_wh, const BatterySpec& spec, double dt_h);

double grid_power(const HorizonProblem& p, int t, std::span<const int> d_row);

double horizon_cost(const HorizonProblem& p, const DispatchPlan& plan);

// Exact optimum by per-battery dynamic programming over the SoC lattice.
// Tie-break: prefer d=0, then -1, then +1 (earliest stage first).
DispatchPlan dp_dispatch(const HorizonProblem& p);

// Exhaustive per-battery enumeration; same tie-break. Requires T <= 12.
DispatchPlan brute_force_dispatch(const HorizonProblem& p);

// ---------------------------------------------------------------------------
// Receding-horizon controller (slow stage of the two-time-scale EMS).

struct EmsMeasurement {
  double soc = 0.0;
  double t_recv_s = -1.0;  // sim-time when the snapshot was received
  bool valid = false;
};

struct EmsTickResult {
  std::map<int, int> commands;  // bus -> d for the current hour
  bool stale = false;
  DispatchPlan plan;            // full plan (empty when stale)
  double p_g_forecast = 0.0;
  double cost_forecast = 0.0;
};

class EmsController {
 public:
  EmsController(const ScenarioConfig& cfg, double staleness_limit_s);

  // Builds a horizon problem anchored at the hour containing now_s, solves it
  // and returns the first-hour command row. Stale measurements cause the
  // previous row to be reused with the stale flag raised.
  EmsTickResult tick(double now_s, const std::map<int, EmsMeasurement>& meas);

  HorizonProblem build_problem(double now_s,
                               const std::map<int, EmsMeasurement>& meas) const;

  double staleness_limit_s() const { return staleness_limit_s_; }

 private:
  ScenarioConfig cfg_;
  double staleness_limit_s_;
  std::map<int, int> prev_commands_;
};

// Default staleness limit: two poll periods plus two mean one-way delays of
// the configured traffic class.
double default_staleness_limit_s(const ScenarioConfig& cfg);

}  // namespace mgcs
