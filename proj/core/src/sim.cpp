#include "mgcs/sim.hpp"

#include <algorithm>
#include <cmath>

#include "mgcs/modbus.hpp"

namespace mgcs {

TrafficClassModel run_traffic_model(const ScenarioConfig& cfg) {
  auto m = TrafficClassModel::for_class(cfg.traffic_class, cfg.congestion,
                                        cfg.rng_seed);
  m.service_noise_frac = kRunServiceNoiseFrac;
  return m;
}

RunResult run_virtual(const ScenarioConfig& cfg) {
  auto violations = validate_scenario(cfg);
  if (!violations.empty())
    throw ConfigError("invalid scenario: " + violations.front());

  RunResult out;
  Plant plant(cfg);
  const auto model = run_traffic_model(cfg);
  DelaySampler up_sampler(model, true);
  auto down_model = model;
  down_model.seed = model.seed + 0x9e3779b9;
  DelaySampler down_sampler(down_model, true);

  const double end_s = cfg.duration_hours * 3600.0;
  const double poll_s = cfg.poll_period_ms / 1000.0;
  const double lookahead_h = cfg.reopt_period_min / 60.0;

  // bus id -> applied command, updated when a register write lands
  std::map<int, int> applied_cmds;
  for (int id : plant.bess_buses()) applied_cmds[id] = 0;

  double slave_now = 0.0;  // virtual time at which the slave serves a request
  ModbusSlaveModel slave(
      cfg.spec,
      [&] {
        plant.advance_to(std::max(plant.state().t_s, slave_now));
        return plant.snapshot();
      },
      [&](int unit, int reg, std::uint16_t value) {
        if (reg == kRegCommand) {
          const int d = static_cast<int>(reg_decode(value, RegKind::Command));
          plant.advance_to(std::max(plant.state().t_s, slave_now));
          plant.apply_commands({{unit, d}}, lookahead_h);
          applied_cmds[unit] = d;
        }
        // breaker writes are accepted but no scenario trips one mid-run
      });

  EmsController ems(cfg, default_staleness_limit_s(cfg));
  std::map<int, EmsMeasurement> meas;

  const auto* grid_price = cfg.find_profile(ProfileKind::PriceGrid);
  const auto* bess_price = cfg.find_profile(ProfileKind::PriceBess);

  double clock = 0.0;
  // first logged sample at t = 1 s, after the slack loop start-up transient
  double next_trace = 1.0;
  double next_tick = 300.0;
  double cost_acc = 0.0;
  bool last_stale = false;

  auto emit_trace_until = [&](double t) {
    while (next_trace <= t + 1e-9 && next_trace <= end_s + 1e-9) {
      plant.advance_to(std::max(plant.state().t_s, next_trace));
      const auto snap = plant.snapshot();
      TraceRow row;
      row.t_s = next_trace;
      row.v_dc = snap.v_dc;
      row.v_bus = snap.v_bus;
      row.p_pv = snap.p_pv;
      row.p_load = snap.p_load;
      row.p_bess = snap.p_bess;
      row.soc = snap.soc;
      row.p_pcc = snap.p_pcc;
      for (int id : plant.bess_buses()) row.commands.push_back(applied_cmds[id]);
      row.ems_stale = last_stale;
      // realized cost, 1 s rectangle, kW * currency/kWh
      const double cg = grid_price ? grid_price->value_at(next_trace) : 0.0;
      const double cb = bess_price ? bess_price->value_at(next_trace) : 0.0;
      double bess_rev = 0.0;
      for (double p : snap.p_bess) bess_rev += cb * p / 1000.0;
      cost_acc += (cg * snap.p_pcc / 1000.0 - bess_rev) / 3600.0;
      row.cost_acc = cost_acc;
      out.trace.push_back(std::move(row));
      next_trace += 1.0;
    }
  };

  std::uint16_t next_txn = 1;
  DelayAccumulator up_acc, down_acc;
  // One Modbus transaction over the emulated link. Advances the master clock
  // to the response time, or the timeout deadline when the reply is late.
  auto transact = [&](ModbusFrame req) -> std::optional<ModbusFrame> {
    for (int attempt = 0; attempt <= kMasterRetries; ++attempt) {
      req.transaction_id = next_txn++;
      const auto adu = encode_frame(req);
      const double t_send = clock;
      const double up_ms =
          up_sampler.sample_at(static_cast<int>(adu.size()), t_send * 1000.0);
      const double t_slave = t_send + up_ms / 1000.0;
      slave_now = t_slave;
      const auto resp_adu = slave.handle_bytes(adu);
      const double down_ms = down_sampler.sample_at(
          static_cast<int>(resp_adu.size()), t_slave * 1000.0);
      const double t_resp = t_slave + down_ms / 1000.0;
      up_acc.add(up_ms);
      down_acc.add(down_ms);
      if (out.delays_up_ms.size() < kMaxStoredDelaySamples)
        out.delays_up_ms.push_back(up_ms);
      if (out.delays_down_ms.size() < kMaxStoredDelaySamples)
        out.delays_down_ms.push_back(down_ms);
      if (t_resp - t_send <= kMasterTimeoutS) {
        clock = t_resp;
        emit_trace_until(clock);
        return decode_frame(resp_adu);
      }
      // late reply: the master gives up at the deadline and the response is
      // dropped on arrival by transaction-id matching
      out.timeouts++;
      clock = t_send + kMasterTimeoutS;
      emit_trace_until(clock);
    }
    return std::nullopt;
  };

  auto run_tick_if_due = [&] {
    while (next_tick <= clock + 1e-9 && next_tick <= end_s) {
      auto res = ems.tick(next_tick, meas);
      TickRecord rec;
      rec.t_s = next_tick;
      rec.commands = res.commands;
      rec.stale = res.stale;
      rec.cost_forecast = res.cost_forecast;
      rec.p_g_forecast = res.p_g_forecast;
      out.ticks.push_back(rec);
      if (res.stale) {
        out.stale_ticks++;
      } else {
        for (const auto& [bus, d] : res.commands) {
          const std::uint16_t raw = reg_encode(d, RegKind::Command);
          ModbusFrame wreq;
          wreq.unit_id = static_cast<std::uint8_t>(bus);
          wreq.function = kFnWriteMultiple;
          wreq.payload = write_multiple_payload(
              kRegCommand, std::span<const std::uint16_t>(&raw, 1));
          transact(wreq);  // a lost confirmation is not retried further
        }
      }
      last_stale = res.stale;
      next_tick += cfg.reopt_period_min * 60.0;
    }
  };

  std::vector<int> poll_units{kUnitPcc};
  for (const auto& bus : cfg.spec.buses) poll_units.push_back(bus.bus_id);

  while (clock < end_s) {
    const double cycle_start = clock;
    for (int unit : poll_units) {
      if (clock >= end_s) break;
      run_tick_if_due();
      ModbusFrame req;
      req.unit_id = static_cast<std::uint8_t>(unit);
      req.function = kFnReadHolding;
      req.payload = read_holding_payload(0, kRegCount);
      auto resp = transact(req);
      if (resp && !is_exception(*resp)) {
        const auto regs = parse_read_response(*resp);
        const auto* bus = cfg.spec.find_bus(unit);
        if (bus && bus->bess) {
          meas[unit] = {reg_decode(regs[4], RegKind::Soc001), clock, true};
        }
      }
    }
    run_tick_if_due();
    const double next_cycle = cycle_start + poll_s;
    if (next_cycle > clock) {
      clock = next_cycle;
      emit_trace_until(clock);
      run_tick_if_due();
    }
  }
  emit_trace_until(end_s);
  out.delay_up = up_acc.summary();
  out.delay_down = down_acc.summary();
  out.total_cost = cost_acc;
  return out;
}

}  // namespace mgcs
