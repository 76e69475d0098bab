#include "mgcs/ems.hpp"

#include <algorithm>
#include <cmath>

#include "mgcs/netem.hpp"

namespace mgcs {

namespace {

constexpr int kActionsPref[3] = {0, -1, +1};  // tie-break preference order

double lattice_step_wh(const BatterySpec& spec, double dt_h) {
  return spec.eta * spec.p_dispatch_w * dt_h;
}

// e after k net charge steps; one multiply keeps DP and brute force on the
// exact same float values.
double lattice_e(double e0, int k, double step) { return e0 + k * step; }

bool in_bounds(double e, const BatterySpec& spec) {
  const double eps = 1e-9 * spec.capacity_wh;
  return e >= spec.soc_min * spec.capacity_wh - eps &&
         e <= spec.soc_max * spec.capacity_wh + eps;
}

// Marginal value of one unit of discharge at stage t, currency.
double stage_reward(const HorizonProblem& p, int t, const BatterySpec& spec) {
  return (p.price_grid[t] + p.price_bess[t]) * (spec.p_dispatch_w / 1000.0) *
         p.dt_h;
}

struct PerBatteryPlan {
  std::vector<int> d;
  double value = 0.0;  // total discharge reward, right-associated sum
};

PerBatteryPlan solve_battery_dp(const HorizonProblem& p, const HorizonBattery& bat) {
  const int T = p.horizon;
  const double step = lattice_step_wh(bat.spec, p.dt_h);
  const int K = T;  // lattice index k in [-K, K], offset by K
  const int W = 2 * K + 1;
  // V[idx] is the best cost-to-go from lattice point k = idx - K.
  std::vector<double> v_next(W, 0.0), v_cur(W, 0.0);
  std::vector<std::vector<int>> choice(T, std::vector<int>(W, 0));
  for (int t = T - 1; t >= 0; --t) {
    const double r = stage_reward(p, t, bat.spec);
    for (int idx = 0; idx < W; ++idx) {
      const int k = idx - K;
      if (!in_bounds(lattice_e(bat.e0_wh, k, step), bat.spec)) continue;
      double best = 0.0;
      int best_d = 0;
      bool have = false;
      for (int d : kActionsPref) {
        // charge (d=-1) moves k up by one, discharge down by one
        const int k2 = k - d;
        if (std::abs(k2) > K) continue;
        if (!in_bounds(lattice_e(bat.e0_wh, k2, step), bat.spec)) continue;
        const double val = d * r + v_next[k2 + K];
        if (!have || val > best) {
          best = val;
          best_d = d;
          have = true;
        }
      }
      v_cur[idx] = best;
      choice[t][idx] = best_d;
    }
    std::swap(v_cur, v_next);
  }
  PerBatteryPlan out;
  out.value = v_next[K];
  int k = 0;
  for (int t = 0; t < T; ++t) {
    const int d = choice[t][k + K];
    out.d.push_back(d);
    k -= d;
  }
  return out;
}

PerBatteryPlan solve_battery_brute(const HorizonProblem& p,
                                   const HorizonBattery& bat) {
  const int T = p.horizon;
  if (T > 12) throw EmsError("horizon too large for brute force (T > 12)");
  const double step = lattice_step_wh(bat.spec, p.dt_h);
  std::vector<double> r(T);
  for (int t = 0; t < T; ++t) r[t] = stage_reward(p, t, bat.spec);

  PerBatteryPlan best;
  best.d.assign(T, 0);
  best.value = 0.0;  // all-idle is always feasible
  bool have = false;

  // odometer over preference digits; digit order 0, -1, +1, t=0 most significant
  std::vector<int> digits(T, 0);
  std::vector<int> seq(T, 0);
  while (true) {
    for (int t = 0; t < T; ++t) seq[t] = kActionsPref[digits[t]];
    // feasibility along the lattice
    bool ok = true;
    int k = 0;
    for (int t = 0; t < T && ok; ++t) {
      k -= seq[t];
      if (std::abs(k) > T || !in_bounds(lattice_e(bat.e0_wh, k, step), bat.spec))
        ok = false;
    }
    if (ok) {
      double val = 0.0;
      for (int t = T - 1; t >= 0; --t) val = seq[t] * r[t] + val;
      if (!have || val > best.value) {
        best.value = val;
        best.d = seq;
        have = true;
      }
    }
    // increment, least significant digit = t = T-1
    int pos = T - 1;
    while (pos >= 0 && ++digits[pos] == 3) digits[pos--] = 0;
    if (pos < 0) break;
  }
  return best;
}

DispatchPlan assemble_plan(const HorizonProblem& p,
                           const std::vector<PerBatteryPlan>& per_bat) {
  const int T = p.horizon;
  const int n = static_cast<int>(p.batteries.size());
  DispatchPlan plan;
  plan.d.assign(T, std::vector<int>(n, 0));
  plan.p_b.assign(T, std::vector<double>(n, 0.0));
  plan.e.assign(T + 1, std::vector<double>(n, 0.0));
  plan.p_g.assign(T, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto& bat = p.batteries[i];
    const double step = lattice_step_wh(bat.spec, p.dt_h);
    int k = 0;
    plan.e[0][i] = bat.e0_wh;
    for (int t = 0; t < T; ++t) {
      const int d = per_bat[i].d[t];
      plan.d[t][i] = d;
      plan.p_b[t][i] = d * bat.spec.p_dispatch_w;
      k -= d;
      plan.e[t + 1][i] = lattice_e(bat.e0_wh, k, step);
    }
  }
  for (int t = 0; t < T; ++t) plan.p_g[t] = grid_power(p, t, plan.d[t]);
  plan.cost = horizon_cost(p, plan);
  return plan;
}

void check_problem(const HorizonProblem& p) {
  const std::size_t T = static_cast<std::size_t>(p.horizon);
  if (p.horizon <= 0) throw EmsError("horizon must be positive");
  if (p.price_grid.size() != T || p.price_bess.size() != T)
    throw EmsError("price series length mismatch");
  for (const auto& s : p.load_w)
    if (s.size() != T) throw EmsError("load series length mismatch");
  for (const auto& s : p.pv_w)
    if (s.size() != T) throw EmsError("pv series length mismatch");
  for (const auto& b : p.batteries)
    if (!in_bounds(b.e0_wh, b.spec))
      throw EmsError("initial stored energy outside SoC bounds");
}

}  // namespace

double soc_step(double e_wh, int d, const BatterySpec& spec, double dt_h) {
  return e_wh - d * lattice_step_wh(spec, dt_h);
}

std::vector<int> feasible_actions(double e_wh, const BatterySpec& spec,
                                  double dt_h) {
  std::vector<int> out;
  for (int d : kActionsPref) {
    if (d == 0 || in_bounds(soc_step(e_wh, d, spec, dt_h), spec))
      out.push_back(d);
  }
  return out;
}

double grid_power(const HorizonProblem& p, int t, std::span<const int> d_row) {
  double g = 0.0;
  for (const auto& s : p.load_w) g += s[t];
  for (const auto& s : p.pv_w) g -= s[t];
  for (std::size_t i = 0; i < p.batteries.size(); ++i)
    g -= d_row[i] * p.batteries[i].spec.p_dispatch_w;
  return g;
}

double horizon_cost(const HorizonProblem& p, const DispatchPlan& plan) {
  const int T = p.horizon;
  if (static_cast<int>(plan.p_g.size()) != T ||
      static_cast<int>(plan.p_b.size()) != T)
    throw EmsError("plan dimensions do not match problem");
  for (int t = 0; t <= T; ++t)
    for (std::size_t i = 0; i < p.batteries.size(); ++i)
      if (!in_bounds(plan.e[t][i], p.batteries[i].spec))
        throw EmsError("infeasible plan: stored energy outside bounds");
  double cost = 0.0;
  for (int t = 0; t < T; ++t) {
    double revenue = 0.0;
    for (std::size_t i = 0; i < plan.p_b[t].size(); ++i)
      revenue += p.price_bess[t] * plan.p_b[t][i] / 1000.0;
    cost += (p.price_grid[t] * plan.p_g[t] / 1000.0 - revenue) * p.dt_h;
  }
  return cost;
}

DispatchPlan dp_dispatch(const HorizonProblem& p) {
  check_problem(p);
  std::vector<PerBatteryPlan> per_bat;
  per_bat.reserve(p.batteries.size());
  for (const auto& bat : p.batteries) per_bat.push_back(solve_battery_dp(p, bat));
  return assemble_plan(p, per_bat);
}

DispatchPlan brute_force_dispatch(const HorizonProblem& p) {
  check_problem(p);
  std::vector<PerBatteryPlan> per_bat;
  per_bat.reserve(p.batteries.size());
  for (const auto& bat : p.batteries)
    per_bat.push_back(solve_battery_brute(p, bat));
  return assemble_plan(p, per_bat);
}

// ---------------------------------------------------------------------------

double default_staleness_limit_s(const ScenarioConfig& cfg) {
  TrafficClassModel model;
  model.cls = cfg.traffic_class;
  model.link_bps = traffic_class_link_bps(cfg.traffic_class);
  model.rho = cfg.congestion;
  const double one_way_ms = mean_delay_md1_ms(model.background_bytes, model);
  return (2.0 * cfg.poll_period_ms + 2.0 * one_way_ms) / 1000.0;
}

EmsController::EmsController(const ScenarioConfig& cfg, double staleness_limit_s)
    : cfg_(cfg), staleness_limit_s_(staleness_limit_s) {
  for (const auto& bus : cfg_.spec.buses)
    if (bus.bess) prev_commands_[bus.bus_id] = 0;
}

HorizonProblem EmsController::build_problem(
    double now_s, const std::map<int, EmsMeasurement>& meas) const {
  HorizonProblem p;
  p.horizon = cfg_.horizon_hours;
  p.dt_h = cfg_.dt_dispatch_h;
  const double h0 = std::floor(now_s / 3600.0);
  const auto* grid_price = cfg_.find_profile(ProfileKind::PriceGrid);
  const auto* bess_price = cfg_.find_profile(ProfileKind::PriceBess);
  if (!grid_price) throw EmsError("scenario has no grid price profile");
  for (int t = 0; t < p.horizon; ++t) {
    const double mid_s = (h0 + t + 0.5) * 3600.0;  // value_at wraps the day
    p.price_grid.push_back(grid_price->value_at(mid_s));
    p.price_bess.push_back(bess_price ? bess_price->value_at(mid_s) : 0.0);
  }
  for (const auto& bus : cfg_.spec.buses) {
    const auto* load = cfg_.find_profile(ProfileKind::Load, bus.bus_id);
    std::vector<double> row(p.horizon, 0.0);
    if (load)
      for (int t = 0; t < p.horizon; ++t)
        row[t] = load->value_at((h0 + t + 0.5) * 3600.0);
    p.load_w.push_back(std::move(row));
    if (bus.pv_rating_w > 0) {
      const auto* pv = cfg_.find_profile(ProfileKind::Pv, bus.bus_id);
      std::vector<double> pv_row(p.horizon, 0.0);
      if (pv)
        for (int t = 0; t < p.horizon; ++t)
          pv_row[t] = pv->value_at((h0 + t + 0.5) * 3600.0);
      p.pv_w.push_back(std::move(pv_row));
    }
    if (bus.bess) {
      const auto it = meas.find(bus.bus_id);
      if (it == meas.end() || !it->second.valid)
        throw EmsError("no measurement for battery bus " +
                       std::to_string(bus.bus_id));
      double e0 = it->second.soc * bus.bess->capacity_wh;
      e0 = std::clamp(e0, bus.bess->soc_min * bus.bess->capacity_wh,
                      bus.bess->soc_max * bus.bess->capacity_wh);
      p.batteries.push_back({bus.bus_id, *bus.bess, e0});
    }
  }
  return p;
}

EmsTickResult EmsController::tick(double now_s,
                                  const std::map<int, EmsMeasurement>& meas) {
  EmsTickResult out;
  for (const auto& bus : cfg_.spec.buses) {
    if (!bus.bess) continue;
    const auto it = meas.find(bus.bus_id);
    const bool fresh = it != meas.end() && it->second.valid &&
                       now_s - it->second.t_recv_s <= staleness_limit_s_;
    if (!fresh) out.stale = true;
  }
  if (out.stale) {
    out.commands = prev_commands_;
    return out;
  }
  const auto problem = build_problem(now_s, meas);
  out.plan = dp_dispatch(problem);
  for (std::size_t i = 0; i < problem.batteries.size(); ++i)
    out.commands[problem.batteries[i].bus_id] = out.plan.d.empty() ? 0 : out.plan.d[0][i];
  out.p_g_forecast = out.plan.p_g.empty() ? 0.0 : out.plan.p_g[0];
  out.cost_forecast = out.plan.cost;
  prev_commands_ = out.commands;
  return out;
}

}  // namespace mgcs
