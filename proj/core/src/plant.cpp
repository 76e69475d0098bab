#include "mgcs/plant.hpp"

#include <algorithm>
#include <cmath>

namespace mgcs {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

Plant::Plant(const ScenarioConfig& cfg) : cfg_(cfg) {
  auto violations = validate_scenario(cfg);
  if (!violations.empty())
    throw PlantError("invalid scenario: " + violations.front());

  for (const auto& bus : cfg_.spec.buses) {
    if (bus.pv_rating_w > 0) pv_bus_ids_.push_back(bus.bus_id);
    if (bus.bess) bess_bus_ids_.push_back(bus.bus_id);
  }
  state_.v_dc = cfg_.spec.v_nominal;
  state_.i_p.assign(pv_bus_ids_.size(), 0.0);
  state_.pv_int.assign(pv_bus_ids_.size(), 0.0);
  state_.i_b.assign(bess_bus_ids_.size(), 0.0);
  state_.bess_int.assign(bess_bus_ids_.size(), 0.0);
  saturated_.assign(bess_bus_ids_.size(), false);
  for (int bus_id : bess_bus_ids_) {
    const auto* bus = cfg_.spec.find_bus(bus_id);
    state_.e_wh.push_back(cfg_.initial_soc_for(bus_id) * bus->bess->capacity_wh);
  }
  state_.breaker_closed.assign(cfg_.spec.feeders.size(), true);
  for (std::size_t i = 0; i < cfg_.spec.feeders.size(); ++i)
    cmd_.breaker_closed[static_cast<int>(i)] = true;
  for (int id : pv_bus_ids_) cmd_.pv_curtail[id] = 1.0;
  for (int id : bess_bus_ids_) cmd_.bess_setpoint_w[id] = 0.0;
  refresh_inputs(0.0);
}

void Plant::apply_commands(const std::vector<std::pair<int, int>>& raw,
                           double lookahead_h) {
  lookahead_h_ = lookahead_h;
  for (const auto& [bus_id, ci] : raw) {
    if (ci < -1 || ci > 1)
      throw PlantError("command out of {-1,0,+1} for bus " +
                       std::to_string(bus_id));
    auto it = std::find(bess_bus_ids_.begin(), bess_bus_ids_.end(), bus_id);
    if (it == bess_bus_ids_.end())
      throw PlantError("no battery at bus " + std::to_string(bus_id));
    const std::size_t j = it - bess_bus_ids_.begin();
    const auto& bat = *cfg_.spec.find_bus(bus_id)->bess;
    const double proj =
        state_.e_wh[j] - ci * bat.eta * bat.p_dispatch_w * lookahead_h;
    const double lo = bat.soc_min * bat.capacity_wh;
    const double hi = bat.soc_max * bat.capacity_wh;
    if (ci != 0 && (proj < lo || proj > hi)) {
      cmd_.bess_setpoint_w[bus_id] = 0.0;
      saturated_[j] = true;
    } else {
      cmd_.bess_setpoint_w[bus_id] = ci * bat.p_dispatch_w;
      saturated_[j] = false;
    }
  }
  refresh_inputs(state_.t_s);
}

void Plant::set_command(const ConverterCommand& cmd) {
  for (const auto& [k, v] : cmd.bess_setpoint_w) {
    const auto* bus = cfg_.spec.find_bus(k);
    if (!bus || !bus->bess) throw PlantError("no battery at bus " + std::to_string(k));
    if (std::fabs(v) > bus->bess->p_conv_max_w)
      throw PlantError("setpoint beyond converter limit at bus " + std::to_string(k));
    cmd_.bess_setpoint_w[k] = v;
  }
  for (const auto& [k, v] : cmd.pv_curtail) cmd_.pv_curtail[k] = clamp01(v);
  for (const auto& [k, v] : cmd.breaker_closed) {
    if (k < 0 || k >= static_cast<int>(state_.breaker_closed.size()))
      throw PlantError("unknown feeder index " + std::to_string(k));
    cmd_.breaker_closed[k] = v;
    state_.breaker_closed[k] = v;
  }
  refresh_inputs(state_.t_s);
}

void Plant::refresh_inputs(double t_s) {
  inputs_.pv_ref_w.assign(pv_bus_ids_.size(), 0.0);
  inputs_.load_w.assign(cfg_.spec.buses.size(), 0.0);
  inputs_.bess_ref_w.assign(bess_bus_ids_.size(), 0.0);

  for (std::size_t j = 0; j < pv_bus_ids_.size(); ++j) {
    const auto* bus = cfg_.spec.find_bus(pv_bus_ids_[j]);
    if (!state_.breaker_closed[bus->feeder_index]) continue;
    const auto* prof = cfg_.find_profile(ProfileKind::Pv, pv_bus_ids_[j]);
    const double curtail = cmd_.pv_curtail.at(pv_bus_ids_[j]);
    inputs_.pv_ref_w[j] = prof ? curtail * prof->value_at(t_s) : 0.0;
  }
  for (std::size_t i = 0; i < cfg_.spec.buses.size(); ++i) {
    const auto& bus = cfg_.spec.buses[i];
    if (!state_.breaker_closed[bus.feeder_index]) continue;
    const auto* prof = cfg_.find_profile(ProfileKind::Load, bus.bus_id);
    inputs_.load_w[i] = prof ? prof->value_at(t_s) : 0.0;
  }
  for (std::size_t j = 0; j < bess_bus_ids_.size(); ++j) {
    const auto* bus = cfg_.spec.find_bus(bess_bus_ids_[j]);
    if (!state_.breaker_closed[bus->feeder_index]) continue;
    const auto& bat = *bus->bess;
    double ref = cmd_.bess_setpoint_w.at(bess_bus_ids_[j]);
    // hard SoC guard: stop transfers that have reached a bound
    const double margin = 1e-6 * bat.capacity_wh;
    if (ref > 0 && state_.e_wh[j] <= bat.soc_min * bat.capacity_wh + margin)
      ref = 0.0;
    if (ref < 0 && state_.e_wh[j] >= bat.soc_max * bat.capacity_wh - margin)
      ref = 0.0;
    inputs_.bess_ref_w[j] = ref;
  }
}

void Plant::derivatives(const PlantState& s, const Inputs& in,
                        PlantState& dst) const {
  const double v_nom = cfg_.spec.v_nominal;
  const double v_dc = s.v_dc;
  double bus_current = 0.0;

  dst.i_p.assign(s.i_p.size(), 0.0);
  dst.pv_int.assign(s.pv_int.size(), 0.0);
  dst.i_b.assign(s.i_b.size(), 0.0);
  dst.bess_int.assign(s.bess_int.size(), 0.0);
  dst.e_wh.assign(s.e_wh.size(), 0.0);

  for (std::size_t j = 0; j < s.i_p.size(); ++j) {
    const auto* bus = cfg_.spec.find_bus(pv_bus_ids_[j]);
    if (!s.breaker_closed[bus->feeder_index]) {
      dst.i_p[j] = -s.i_p[j] / 1e-3;
      continue;
    }
    const double l_p = 0.002;
    const double i_ref = in.pv_ref_w[j] / kPanelVoltage;
    const double err = i_ref - s.i_p[j];
    const double duty = clamp01(kPanelVoltage / v_dc -
                                (loop_kp_ * err + loop_ki_ * s.pv_int[j]));
    dst.i_p[j] = (kPanelVoltage - duty * v_dc) / l_p;
    dst.pv_int[j] = err;
    bus_current += duty * s.i_p[j];
  }
  for (std::size_t j = 0; j < s.i_b.size(); ++j) {
    const auto* bus = cfg_.spec.find_bus(bess_bus_ids_[j]);
    const auto& bat = *bus->bess;
    if (!s.breaker_closed[bus->feeder_index]) {
      dst.i_b[j] = -s.i_b[j] / 1e-3;
      continue;
    }
    const double i_ref = in.bess_ref_w[j] / kBatteryVoltage;
    const double err = i_ref - s.i_b[j];
    const double duty =
        std::clamp(kBatteryVoltage / v_dc +
                       (loop_kp_ * err + loop_ki_ * s.bess_int[j]),
                   -1.0, 1.0);
    dst.i_b[j] = (duty * v_dc - kBatteryVoltage) / bat.l_conv_h;
    dst.bess_int[j] = err;
    dst.e_wh[j] = -bat.eta * kBatteryVoltage * s.i_b[j] / 3600.0;
    bus_current += duty * s.i_b[j];
  }
  double g_total = 0.0;
  for (std::size_t i = 0; i < cfg_.spec.buses.size(); ++i)
    g_total += in.load_w[i] / (v_nom * v_nom);
  bus_current -= g_total * v_dc;

  const double v_err = v_nom - v_dc;
  const double i_g = std::clamp(slack_kp_ * v_err + slack_ki_ * s.slack_int,
                                -kSlackCurrentMax, kSlackCurrentMax);
  dst.slack_int = v_err;
  dst.v_dc = (bus_current + i_g) / cfg_.spec.c_dc_f;
}

void Plant::step(double dt_s) {
  if (dt_s > 1e-3 + 1e-12)
    throw PlantError("dt_sim above the 1 ms stability bound");
  // classic RK4 over the flattened state; scratch states are members so the
  // hot loop performs no allocations
  PlantState& k1 = k1_;
  PlantState& k2 = k2_;
  PlantState& k3 = k3_;
  PlantState& k4 = k4_;
  auto blend = [&](const PlantState& base, const PlantState& k,
                   double h) -> const PlantState& {
    tmp_ = base;  // vector assignment reuses capacity
    PlantState& s = tmp_;
    s.v_dc += h * k.v_dc;
    for (std::size_t i = 0; i < s.i_p.size(); ++i) {
      s.i_p[i] += h * k.i_p[i];
      s.pv_int[i] += h * k.pv_int[i];
    }
    for (std::size_t i = 0; i < s.i_b.size(); ++i) {
      s.i_b[i] += h * k.i_b[i];
      s.bess_int[i] += h * k.bess_int[i];
      s.e_wh[i] += h * k.e_wh[i];
    }
    s.slack_int += h * k.slack_int;
    return s;
  };
  derivatives(state_, inputs_, k1);
  derivatives(blend(state_, k1, dt_s / 2), inputs_, k2);
  derivatives(blend(state_, k2, dt_s / 2), inputs_, k3);
  derivatives(blend(state_, k3, dt_s), inputs_, k4);

  auto combine = [&](double& x, double a, double b, double c, double d) {
    x += dt_s / 6.0 * (a + 2 * b + 2 * c + d);
  };
  combine(state_.v_dc, k1.v_dc, k2.v_dc, k3.v_dc, k4.v_dc);
  for (std::size_t i = 0; i < state_.i_p.size(); ++i) {
    combine(state_.i_p[i], k1.i_p[i], k2.i_p[i], k3.i_p[i], k4.i_p[i]);
    combine(state_.pv_int[i], k1.pv_int[i], k2.pv_int[i], k3.pv_int[i], k4.pv_int[i]);
  }
  for (std::size_t i = 0; i < state_.i_b.size(); ++i) {
    combine(state_.i_b[i], k1.i_b[i], k2.i_b[i], k3.i_b[i], k4.i_b[i]);
    combine(state_.bess_int[i], k1.bess_int[i], k2.bess_int[i], k3.bess_int[i],
            k4.bess_int[i]);
    combine(state_.e_wh[i], k1.e_wh[i], k2.e_wh[i], k3.e_wh[i], k4.e_wh[i]);
  }
  combine(state_.slack_int, k1.slack_int, k2.slack_int, k3.slack_int, k4.slack_int);

  // bound enforcement and anti-windup
  for (std::size_t j = 0; j < bess_bus_ids_.size(); ++j) {
    const auto& bat = *cfg_.spec.find_bus(bess_bus_ids_[j])->bess;
    state_.e_wh[j] = std::clamp(state_.e_wh[j], bat.soc_min * bat.capacity_wh,
                                bat.soc_max * bat.capacity_wh);
    state_.bess_int[j] =
        std::clamp(state_.bess_int[j], -2.0 / loop_ki_, 2.0 / loop_ki_);
  }
  for (auto& x : state_.pv_int)
    x = std::clamp(x, -2.0 / loop_ki_, 2.0 / loop_ki_);
  state_.slack_int = std::clamp(state_.slack_int, -2.0 * kSlackCurrentMax / slack_ki_,
                                2.0 * kSlackCurrentMax / slack_ki_);
  state_.t_s += dt_s;
  state_.step_count++;
  check_finite();
}

void Plant::check_finite() const {
  auto bad = [](double v) { return !std::isfinite(v); };
  if (bad(state_.v_dc)) throw PlantError("integration blow-up in v_dc");
  for (double v : state_.i_p)
    if (bad(v)) throw PlantError("integration blow-up in i_p");
  for (double v : state_.i_b)
    if (bad(v)) throw PlantError("integration blow-up in i_b");
  for (double v : state_.e_wh)
    if (bad(v)) throw PlantError("integration blow-up in e");
}

void Plant::advance_to(double t_target_s) {
  const double dt = cfg_.dt_sim_s;
  while (state_.t_s < t_target_s - 1e-9) {
    const double chunk_end = std::min(t_target_s, state_.t_s + 0.1);
    refresh_inputs(state_.t_s);
    while (state_.t_s < chunk_end - 1e-9) {
      step(std::min(dt, chunk_end - state_.t_s));
    }
  }
}

MeasurementSnapshot Plant::snapshot() const {
  MeasurementSnapshot snap;
  snap.t_s = state_.t_s;
  snap.v_dc = state_.v_dc;
  snap.step_count = state_.step_count;
  const double v_dc = state_.v_dc;
  const double v_nom = cfg_.spec.v_nominal;

  std::map<int, double> p_pv_by_bus, p_bess_by_bus;
  for (std::size_t j = 0; j < pv_bus_ids_.size(); ++j) {
    const double i_ref = inputs_.pv_ref_w[j] / kPanelVoltage;
    const double err = i_ref - state_.i_p[j];
    const double duty = clamp01(kPanelVoltage / v_dc -
                                (loop_kp_ * err + loop_ki_ * state_.pv_int[j]));
    const double p = duty * state_.i_p[j] * v_dc;
    snap.p_pv.push_back(p);
    p_pv_by_bus[pv_bus_ids_[j]] = p;
  }
  for (std::size_t j = 0; j < bess_bus_ids_.size(); ++j) {
    const auto& bat = *cfg_.spec.find_bus(bess_bus_ids_[j])->bess;
    const double i_ref = inputs_.bess_ref_w[j] / kBatteryVoltage;
    const double err = i_ref - state_.i_b[j];
    const double duty =
        std::clamp(kBatteryVoltage / v_dc +
                       (loop_kp_ * err + loop_ki_ * state_.bess_int[j]),
                   -1.0, 1.0);
    const double p = duty * state_.i_b[j] * v_dc;
    snap.p_bess.push_back(p);
    p_bess_by_bus[bess_bus_ids_[j]] = p;
    snap.soc.push_back(state_.e_wh[j] / bat.capacity_wh);
    snap.e_wh.push_back(state_.e_wh[j]);
    snap.saturated.push_back(saturated_[j]);
  }
  double load_total_w = 0.0;
  for (std::size_t i = 0; i < cfg_.spec.buses.size(); ++i) {
    const auto& bus = cfg_.spec.buses[i];
    const double p_load = inputs_.load_w[i] * (v_dc / v_nom) * (v_dc / v_nom);
    snap.p_load.push_back(p_load);
    load_total_w += p_load;
    const double p_net = p_load - (p_pv_by_bus.count(bus.bus_id) ? p_pv_by_bus[bus.bus_id] : 0.0) -
                         (p_bess_by_bus.count(bus.bus_id) ? p_bess_by_bus[bus.bus_id] : 0.0);
    const double i_branch = p_net / v_dc;
    snap.v_bus.push_back(v_dc - cfg_.spec.feeders[bus.feeder_index].r_ohm * i_branch);
  }
  const double v_err = v_nom - v_dc;
  const double i_g = std::clamp(slack_kp_ * v_err + slack_ki_ * state_.slack_int,
                                -kSlackCurrentMax, kSlackCurrentMax);
  snap.p_pcc = v_dc * i_g;
  return snap;
}

MeasurementSnapshot Plant::solve_equilibrium(
    const MicrogridSpec& spec, const std::map<int, double>& pv_w,
    const std::map<int, double>& load_w,
    const std::map<int, double>& bess_setpoint_w) {
  auto get = [](const std::map<int, double>& m, int k) {
    auto it = m.find(k);
    return it == m.end() ? 0.0 : it->second;
  };
  MeasurementSnapshot snap;
  snap.v_dc = spec.v_nominal;
  double total = 0.0;
  for (const auto& bus : spec.buses) {
    const double pl = get(load_w, bus.bus_id);
    const double pp = get(pv_w, bus.bus_id);
    const double pb = get(bess_setpoint_w, bus.bus_id);
    snap.p_load.push_back(pl);
    if (bus.pv_rating_w > 0) snap.p_pv.push_back(pp);
    if (bus.bess) snap.p_bess.push_back(pb);
    total += pl - pp - pb;
    const double i_branch = (pl - pp - pb) / spec.v_nominal;
    snap.v_bus.push_back(spec.v_nominal -
                         spec.feeders.at(bus.feeder_index).r_ohm * i_branch);
  }
  if (std::fabs(total) > spec.v_nominal * kSlackCurrentMax)
    throw PlantError("no equilibrium: exchange beyond slack capability");
  snap.p_pcc = total;
  return snap;
}

}  // namespace mgcs
