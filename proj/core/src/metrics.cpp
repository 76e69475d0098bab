#include "mgcs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mgcs {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

RunMetrics compute_metrics(const ScenarioConfig& cfg, const RunResult& r) {
  if (r.trace.empty()) throw MetricsError("empty trace");
  RunMetrics m;
  m.total_cost = r.trace.back().cost_acc;
  m.v_dc_min = m.v_bus_min = 1e300;
  m.v_dc_max = m.v_bus_max = -1e300;

  std::vector<const BatterySpec*> bats;
  for (const auto& bus : cfg.spec.buses)
    if (bus.bess) bats.push_back(&*bus.bess);

  for (const auto& row : r.trace) {
    m.v_dc_min = std::min(m.v_dc_min, row.v_dc);
    m.v_dc_max = std::max(m.v_dc_max, row.v_dc);
    for (double v : row.v_bus) {
      m.v_bus_min = std::min(m.v_bus_min, v);
      m.v_bus_max = std::max(m.v_bus_max, v);
    }
    for (std::size_t j = 0; j < row.soc.size() && j < bats.size(); ++j) {
      const double eps = 1e-6;
      if (row.soc[j] < bats[j]->soc_min - eps ||
          row.soc[j] > bats[j]->soc_max + eps)
        m.soc_violations++;
    }
    double load = 0.0, pv = 0.0, bess = 0.0;
    for (double p : row.p_load) load += p;
    for (double p : row.p_pv) pv += p;
    for (double p : row.p_bess) bess += p;
    const double residual = std::fabs(row.p_pcc - (load - pv - bess));
    const double frac = residual / std::max(load, 1.0);
    m.balance_max_frac = std::max(m.balance_max_frac, frac);
    if (frac >= kBalanceTolFrac) m.balance_violations++;
    if (row.p_pcc > 0)
      m.pcc_import_kwh += row.p_pcc / 1000.0 / 3600.0;
    else
      m.pcc_export_kwh += -row.p_pcc / 1000.0 / 3600.0;
  }
  m.ems_ticks = r.ticks.size();
  for (const auto& t : r.ticks)
    if (t.stale) m.stale_ticks++;
  m.timeouts = r.timeouts;
  m.delay_up = r.delay_up.count ? r.delay_up : summarize_delays(r.delays_up_ms);
  m.delay_down =
      r.delay_down.count ? r.delay_down : summarize_delays(r.delays_down_ms);
  return m;
}

void write_trace_csv(const std::string& path, const ScenarioConfig& cfg,
                     const std::vector<TraceRow>& trace) {
  std::ofstream f(path);
  if (!f) throw MetricsError("cannot open " + path);
  f << "t_s,v_dc,p_pcc,cost_acc,ems_stale";
  for (const auto& bus : cfg.spec.buses)
    f << ",v_bus_" << bus.bus_id << ",p_load_" << bus.bus_id;
  for (const auto& bus : cfg.spec.buses)
    if (bus.pv_rating_w > 0) f << ",p_pv_" << bus.bus_id;
  for (const auto& bus : cfg.spec.buses)
    if (bus.bess)
      f << ",p_bess_" << bus.bus_id << ",soc_" << bus.bus_id << ",cmd_"
        << bus.bus_id;
  f << "\n";
  for (const auto& row : trace) {
    f << fmt(row.t_s) << ',' << fmt(row.v_dc) << ',' << fmt(row.p_pcc) << ','
      << fmt(row.cost_acc) << ',' << (row.ems_stale ? 1 : 0);
    for (std::size_t i = 0; i < row.v_bus.size(); ++i)
      f << ',' << fmt(row.v_bus[i]) << ',' << fmt(row.p_load[i]);
    for (double p : row.p_pv) f << ',' << fmt(p);
    for (std::size_t j = 0; j < row.p_bess.size(); ++j)
      f << ',' << fmt(row.p_bess[j]) << ',' << fmt(row.soc[j]) << ','
        << row.commands[j];
    f << "\n";
  }
}

std::vector<TraceRow> load_trace_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MetricsError("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw MetricsError("empty trace file " + path);
  const auto header = split_csv(line);
  for (const char* col : {"t_s", "v_dc", "p_pcc", "cost_acc", "ems_stale"})
    if (std::find(header.begin(), header.end(), col) == header.end())
      throw MetricsError(std::string("trace missing column ") + col);

  std::vector<TraceRow> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != header.size())
      throw MetricsError("trace row width mismatch in " + path);
    TraceRow row;
    for (std::size_t i = 0; i < header.size(); ++i) {
      const auto& h = header[i];
      const double v = std::stod(fields[i]);
      if (h == "t_s") row.t_s = v;
      else if (h == "v_dc") row.v_dc = v;
      else if (h == "p_pcc") row.p_pcc = v;
      else if (h == "cost_acc") row.cost_acc = v;
      else if (h == "ems_stale") row.ems_stale = v != 0;
      else if (h.starts_with("v_bus_")) row.v_bus.push_back(v);
      else if (h.starts_with("p_load_")) row.p_load.push_back(v);
      else if (h.starts_with("p_pv_")) row.p_pv.push_back(v);
      else if (h.starts_with("p_bess_")) row.p_bess.push_back(v);
      else if (h.starts_with("soc_")) row.soc.push_back(v);
      else if (h.starts_with("cmd_")) row.commands.push_back(static_cast<int>(v));
      else throw MetricsError("unknown trace column " + h);
    }
    out.push_back(std::move(row));
  }
  return out;
}

void write_plan_log_csv(const std::string& path,
                        const std::vector<TickRecord>& ticks) {
  std::ofstream f(path);
  if (!f) throw MetricsError("cannot open " + path);
  f << "t_s,stale,cost_forecast,p_g_forecast,commands\n";
  for (const auto& t : ticks) {
    f << fmt(t.t_s) << ',' << (t.stale ? 1 : 0) << ',' << fmt(t.cost_forecast)
      << ',' << fmt(t.p_g_forecast) << ',';
    bool first = true;
    for (const auto& [bus, d] : t.commands) {
      if (!first) f << ';';
      f << bus << ':' << d;
      first = false;
    }
    f << "\n";
  }
}

std::vector<TickRecord> load_plan_log_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MetricsError("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw MetricsError("empty plan log " + path);
  std::vector<TickRecord> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() < 4) throw MetricsError("plan log row too short");
    TickRecord t;
    t.t_s = std::stod(fields[0]);
    t.stale = std::stod(fields[1]) != 0;
    t.cost_forecast = std::stod(fields[2]);
    t.p_g_forecast = std::stod(fields[3]);
    if (fields.size() >= 5 && !fields[4].empty()) {
      std::stringstream ss(fields[4]);
      std::string pair;
      while (std::getline(ss, pair, ';')) {
        const auto colon = pair.find(':');
        if (colon == std::string::npos)
          throw MetricsError("bad command pair " + pair);
        t.commands[std::stoi(pair.substr(0, colon))] =
            std::stoi(pair.substr(colon + 1));
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

void write_delay_samples_csv(const std::string& path,
                             const std::vector<double>& up_ms,
                             const std::vector<double>& down_ms) {
  std::ofstream f(path);
  if (!f) throw MetricsError("cannot open " + path);
  f << "direction,delay_ms\n";
  for (double d : up_ms) f << "0," << fmt(d) << "\n";
  for (double d : down_ms) f << "1," << fmt(d) << "\n";
}

void load_delay_samples_csv(const std::string& path, std::vector<double>& up_ms,
                            std::vector<double>& down_ms) {
  std::ifstream f(path);
  if (!f) throw MetricsError("cannot open " + path);
  std::string line;
  std::getline(f, line);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 2) throw MetricsError("bad delay sample row");
    (fields[0] == "0" ? up_ms : down_ms).push_back(std::stod(fields[1]));
  }
}

RunMetrics compute_metrics_from_dir(const ScenarioConfig& cfg,
                                    const std::string& dir) {
  RunResult r;
  r.trace = load_trace_csv(dir + "/plant_trace.csv");
  r.ticks = load_plan_log_csv(dir + "/plan_log.csv");
  load_delay_samples_csv(dir + "/delay_samples.csv", r.delays_up_ms,
                         r.delays_down_ms);
  return compute_metrics(cfg, r);
}

void write_metrics_file(const std::string& path, const RunMetrics& m) {
  std::ofstream f(path);
  if (!f) throw MetricsError("cannot open " + path);
  auto d = [&](const char* k, double v) { f << k << " = " << fmt(v) << "\n"; };
  auto z = [&](const char* k, std::size_t v) { f << k << " = " << v << "\n"; };
  d("total_cost", m.total_cost);
  z("soc_violations", m.soc_violations);
  d("v_dc_min", m.v_dc_min);
  d("v_dc_max", m.v_dc_max);
  d("v_bus_min", m.v_bus_min);
  d("v_bus_max", m.v_bus_max);
  d("pcc_import_kwh", m.pcc_import_kwh);
  d("pcc_export_kwh", m.pcc_export_kwh);
  z("stale_ticks", m.stale_ticks);
  z("ems_ticks", m.ems_ticks);
  z("timeouts", m.timeouts);
  d("balance_max_frac", m.balance_max_frac);
  z("balance_violations", m.balance_violations);
  z("delay_up_count", m.delay_up.count);
  d("delay_up_mean_ms", m.delay_up.mean_ms);
  d("delay_up_jitter_us", m.delay_up.jitter_us);
  d("delay_up_min_ms", m.delay_up.min_ms);
  d("delay_up_max_ms", m.delay_up.max_ms);
  z("delay_down_count", m.delay_down.count);
  d("delay_down_mean_ms", m.delay_down.mean_ms);
  d("delay_down_jitter_us", m.delay_down.jitter_us);
  d("delay_down_min_ms", m.delay_down.min_ms);
  d("delay_down_max_ms", m.delay_down.max_ms);
}

RunMetrics load_metrics_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MetricsError("cannot open " + path);
  RunMetrics m;
  std::string line;
  while (std::getline(f, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 3);
    auto d = std::stod(val);
    if (key == "total_cost") m.total_cost = d;
    else if (key == "soc_violations") m.soc_violations = static_cast<std::size_t>(d);
    else if (key == "v_dc_min") m.v_dc_min = d;
    else if (key == "v_dc_max") m.v_dc_max = d;
    else if (key == "v_bus_min") m.v_bus_min = d;
    else if (key == "v_bus_max") m.v_bus_max = d;
    else if (key == "pcc_import_kwh") m.pcc_import_kwh = d;
    else if (key == "pcc_export_kwh") m.pcc_export_kwh = d;
    else if (key == "stale_ticks") m.stale_ticks = static_cast<std::size_t>(d);
    else if (key == "ems_ticks") m.ems_ticks = static_cast<std::size_t>(d);
    else if (key == "timeouts") m.timeouts = static_cast<std::size_t>(d);
    else if (key == "balance_max_frac") m.balance_max_frac = d;
    else if (key == "balance_violations") m.balance_violations = static_cast<std::size_t>(d);
    else if (key == "delay_up_count") m.delay_up.count = static_cast<std::size_t>(d);
    else if (key == "delay_up_mean_ms") m.delay_up.mean_ms = d;
    else if (key == "delay_up_jitter_us") m.delay_up.jitter_us = d;
    else if (key == "delay_up_min_ms") m.delay_up.min_ms = d;
    else if (key == "delay_up_max_ms") m.delay_up.max_ms = d;
    else if (key == "delay_down_count") m.delay_down.count = static_cast<std::size_t>(d);
    else if (key == "delay_down_mean_ms") m.delay_down.mean_ms = d;
    else if (key == "delay_down_jitter_us") m.delay_down.jitter_us = d;
    else if (key == "delay_down_min_ms") m.delay_down.min_ms = d;
    else if (key == "delay_down_max_ms") m.delay_down.max_ms = d;
  }
  return m;
}

}  // namespace mgcs
