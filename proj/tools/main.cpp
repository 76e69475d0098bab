#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mgcs/metrics.hpp"
#include "mgcs/orchestrator.hpp"
#include "mgcs/profile.hpp"
#include "mgcs/scenario.hpp"

namespace {

using namespace mgcs;

std::string own_exe_path() {
  char buf[4096];
  const ssize_t n = readlink("/proc/self/exe", buf, sizeof buf - 1);
  if (n <= 0) return "";
  buf[n] = '\0';
  return buf;
}

ScenarioConfig load_or_default(const std::string& path) {
  return path.empty() ? default_scenario() : load_scenario_file(path);
}

void apply_overrides(ScenarioConfig& cfg, const std::string& cls,
                     double congestion, long long seed, double duration) {
  if (!cls.empty()) {
    auto tc = traffic_class_from_string(cls);
    if (!tc) throw ConfigError("unknown traffic class: " + cls);
    cfg.traffic_class = *tc;
  }
  if (congestion >= 0) cfg.congestion = congestion;
  if (seed >= 0) cfg.rng_seed = static_cast<std::uint64_t>(seed);
  if (duration > 0) cfg.duration_hours = duration;
}

void print_metrics(const RunMetrics& m) {
  std::printf("total_cost          %.6f\n", m.total_cost);
  std::printf("soc_violations      %zu\n", m.soc_violations);
  std::printf("v_dc                [%.3f, %.3f] V\n", m.v_dc_min, m.v_dc_max);
  std::printf("v_bus               [%.3f, %.3f] V\n", m.v_bus_min, m.v_bus_max);
  std::printf("pcc_import          %.4f kWh\n", m.pcc_import_kwh);
  std::printf("pcc_export          %.4f kWh\n", m.pcc_export_kwh);
  std::printf("stale_ticks         %zu / %zu\n", m.stale_ticks, m.ems_ticks);
  std::printf("timeouts            %zu\n", m.timeouts);
  std::printf("balance_max         %.5f of load\n", m.balance_max_frac);
  std::printf("delay up            mean %.3f ms, jitter %.2f us (%zu msgs)\n",
              m.delay_up.mean_ms, m.delay_up.jitter_us, m.delay_up.count);
  std::printf("delay down          mean %.3f ms, jitter %.2f us (%zu msgs)\n",
              m.delay_down.mean_ms, m.delay_down.jitter_us, m.delay_down.count);
  std::printf("wall_time           %.2f s\n", m.wall_time_s);
}

bool within_limits(const ScenarioConfig& cfg, const RunMetrics& m) {
  const double lo = cfg.spec.v_nominal * (1.0 - kVoltageTolFrac);
  const double hi = cfg.spec.v_nominal * (1.0 + kVoltageTolFrac);
  return m.soc_violations == 0 && m.balance_violations == 0 &&
         m.v_dc_min >= lo && m.v_dc_max <= hi && m.v_bus_min >= lo &&
         m.v_bus_max <= hi;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DC microgrid co-simulation testbed"};
  app.require_subcommand(1);

  // run
  std::string scenario_path, mode = "virtual", cls, out_dir;
  double congestion = -1, duration = -1;
  long long seed = -1;
  auto* run = app.add_subcommand("run", "run a scenario end to end");
  run->add_option("scenario", scenario_path, "scenario file (default: bundled)");
  run->add_option("--mode", mode, "virtual | realtime")
      ->check(CLI::IsMember({"virtual", "realtime"}));
  run->add_option("--class", cls, "traffic class DS0|DS1|DS3|E1|E3");
  run->add_option("--congestion", congestion, "rho in [0,1)");
  run->add_option("--seed", seed, "rng seed");
  run->add_option("--duration-hours", duration, "simulated hours");
  run->add_option("--out", out_dir, "output directory");

  // calibrate
  std::string cal_out = "netem_calibration.csv";
  std::size_t cal_samples = 20000;
  long long cal_seed = 1;
  auto* cal = app.add_subcommand("calibrate", "delay model sweep");
  cal->add_option("--out", cal_out, "calibration CSV path");
  cal->add_option("--samples", cal_samples, "messages per cell");
  cal->add_option("--seed", cal_seed, "rng seed");

  // compare
  std::string dir_a, dir_b;
  auto* cmp = app.add_subcommand("compare", "compare two run directories");
  cmp->add_option("a", dir_a)->required();
  cmp->add_option("b", dir_b)->required();

  // scenario: materialize the bundled defaults
  std::string scn_cfg_out = "default_scenario.cfg";
  std::string scn_price_out;
  auto* scn = app.add_subcommand("scenario", "write the bundled scenario");
  scn->add_option("--out", scn_cfg_out, "config file to write");
  scn->add_option("--price-out", scn_price_out, "also write the price CSV");

  // realtime components
  std::string c_cfg, c_out = ".", c_host = "127.0.0.1";
  int c_port = 0, c_listen = 0, c_upstream = 0;
  auto* plant = app.add_subcommand("plant-serve", "plant + Modbus slave");
  plant->add_option("--config", c_cfg)->required();
  plant->add_option("--port", c_port);
  plant->add_option("--out", c_out);
  auto* proxy = app.add_subcommand("proxy", "delaying TCP proxy");
  proxy->add_option("--config", c_cfg)->required();
  proxy->add_option("--listen-port", c_listen);
  proxy->add_option("--upstream-port", c_upstream)->required();
  proxy->add_option("--out", c_out);
  auto* ems = app.add_subcommand("ems-run", "EMS Modbus master");
  ems->add_option("--config", c_cfg)->required();
  ems->add_option("--host", c_host);
  ems->add_option("--port", c_port)->required();
  ems->add_option("--out", c_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      auto cfg = load_or_default(scenario_path);
      apply_overrides(cfg, cls, congestion, seed, duration);
      RunOptions opt;
      opt.mode = mode == "virtual" ? ClockMode::Virtual : ClockMode::Realtime;
      opt.out_dir = out_dir;
      opt.exe_path = own_exe_path();
      const auto m = run_scenario(cfg, opt);
      print_metrics(m);
      return within_limits(cfg, m) ? 0 : 1;
    }
    if (cal->parsed()) {
      const auto table = calibrate_netem(
          cal_samples, static_cast<std::uint64_t>(cal_seed));
      write_calibration_csv(cal_out, table);
      std::printf("class  rho   mean_ms    jitter_us  ref_ms    rel_err\n");
      for (const auto& c : table)
        std::printf("%-5s  %.2f  %9.4f  %9.2f  %8.3f  %+.3f%%\n",
                    to_string(c.cls), c.rho, c.mean_ms, c.jitter_us,
                    c.ref_mean_ms, 100.0 * c.rel_err);
      return 0;
    }
    if (cmp->parsed()) {
      const auto rep = compare_runs(dir_a, dir_b);
      std::fputs(rep.text.c_str(), stdout);
      return 0;
    }
    if (scn->parsed()) {
      const auto cfg = default_scenario();
      write_scenario_file(cfg, scn_cfg_out);
      if (!scn_price_out.empty())
        write_profile_csv(default_grid_price_profile(), scn_price_out);
      return 0;
    }
    if (plant->parsed())
      return run_plant_server(load_scenario_file(c_cfg), c_port, c_out);
    if (proxy->parsed())
      return run_proxy_process(load_scenario_file(c_cfg), c_listen, c_upstream,
                               c_out);
    if (ems->parsed())
      return run_ems_master(load_scenario_file(c_cfg), c_host, c_port, c_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
