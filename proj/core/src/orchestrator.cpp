#include "mgcs/orchestrator.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "mgcs/modbus.hpp"
#include "mgcs/modbus_link.hpp"
#include "mgcs/netem_proxy.hpp"
#include "mgcs/plant.hpp"

namespace mgcs {

namespace {

namespace fs = std::filesystem;

constexpr TrafficClass kAllClasses[] = {TrafficClass::DS0, TrafficClass::DS1,
                                        TrafficClass::DS3, TrafficClass::E1,
                                        TrafficClass::E3};
constexpr double kCalibrationRhos[] = {0.0, 0.25, 0.5, 0.75};

// Published mean one-way delays in ms for 178-byte messages, row order DS0,
// DS1, DS3, E1, E3, column order rho = 0, 25, 50, 75 %.
constexpr double kReferenceMeanMs[5][4] = {
    {24.25, 27.91, 35.13, 56.56},
    {2.92, 3.077, 3.385, 4.307},
    {2.03, 2.037, 2.048, 2.081},
    {2.69, 2.81, 3.04, 3.73},
    {2.04, 2.048, 2.059, 2.103},
};

int class_index(TrafficClass c) { return static_cast<int>(c); }

double wall_seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void write_run_log(const std::string& path, double wall_s,
                   const RunMetrics& m) {
  std::ofstream f(path);
  f << "wall_time_s = " << wall_s << "\n";
  f << "timeouts = " << m.timeouts << "\n";
  f << "stale_ticks = " << m.stale_ticks << "\n";
}

}  // namespace

double reference_mean_delay_ms(TrafficClass cls, double rho) {
  for (int j = 0; j < 4; ++j)
    if (std::fabs(kCalibrationRhos[j] - rho) < 1e-9)
      return kReferenceMeanMs[class_index(cls)][j];
  throw OrchestratorError("no reference value for this congestion level");
}

std::vector<CalibrationCell> calibrate_netem(std::size_t samples_per_cell,
                                             std::uint64_t seed) {
  std::vector<CalibrationCell> table;
  for (TrafficClass cls : kAllClasses) {
    for (double rho : kCalibrationRhos) {
      auto model = TrafficClassModel::for_class(cls, rho, seed);
      model.service_noise_frac = kRunServiceNoiseFrac;
      DelaySampler sampler(model, false);  // probe does not load the queue
      std::vector<double> delays;
      delays.reserve(samples_per_cell);
      for (std::size_t i = 0; i < samples_per_cell; ++i)
        delays.push_back(sampler.sample(model.background_bytes));
      const auto s = summarize_delays(delays);
      CalibrationCell cell;
      cell.cls = cls;
      cell.rho = rho;
      cell.count = s.count;
      cell.mean_ms = s.mean_ms;
      cell.jitter_us = s.jitter_us;
      cell.ref_mean_ms = reference_mean_delay_ms(cls, rho);
      cell.rel_err = (cell.mean_ms - cell.ref_mean_ms) / cell.ref_mean_ms;
      table.push_back(cell);
    }
  }
  return table;
}

void write_calibration_csv(const std::string& path,
                           const std::vector<CalibrationCell>& table) {
  std::ofstream f(path);
  if (!f) throw OrchestratorError("cannot open " + path);
  f << "class,rho,count,mean_ms,jitter_us,ref_mean_ms,rel_err\n";
  char buf[160];
  for (const auto& c : table) {
    std::snprintf(buf, sizeof buf, "%s,%.2f,%zu,%.6f,%.4f,%.6f,%.5f\n",
                  to_string(c.cls), c.rho, c.count, c.mean_ms, c.jitter_us,
                  c.ref_mean_ms, c.rel_err);
    f << buf;
  }
}

// ---------------------------------------------------------------------------
// virtual-time mode

static RunMetrics run_scenario_virtual(const ScenarioConfig& cfg,
                                       const RunOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunResult r = run_virtual(cfg);
  RunMetrics m = compute_metrics(cfg, r);
  m.wall_time_s = wall_seconds_since(t0);
  if (!opt.out_dir.empty()) {
    fs::create_directories(opt.out_dir);
    write_scenario_file(cfg, opt.out_dir + "/scenario.cfg");
    write_trace_csv(opt.out_dir + "/plant_trace.csv", cfg, r.trace);
    write_plan_log_csv(opt.out_dir + "/plan_log.csv", r.ticks);
    write_delay_samples_csv(opt.out_dir + "/delay_samples.csv", r.delays_up_ms,
                            r.delays_down_ms);
    write_metrics_file(opt.out_dir + "/metrics.txt", m);
    write_run_log(opt.out_dir + "/run.log", m.wall_time_s, m);
  }
  return m;
}

// ---------------------------------------------------------------------------
// realtime mode: child process plumbing

namespace {

struct ChildProc {
  pid_t pid = -1;
  int stdin_fd = -1;   // write end; closing it asks the child to shut down
  int stdout_fd = -1;  // read end, carries READY/heartbeat lines
  std::string name;
  std::string log_path;
};

ChildProc spawn_child(const std::string& exe,
                      const std::vector<std::string>& args,
                      const std::string& name, const std::string& log_path) {
  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
    throw OrchestratorError("pipe: " + std::string(strerror(errno)));
  const pid_t pid = fork();
  if (pid < 0) throw OrchestratorError("fork: " + std::string(strerror(errno)));
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    const int log_fd =
        open(log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (log_fd >= 0) dup2(log_fd, STDERR_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    std::vector<char*> argv;
    argv.push_back(const_cast<char*>(exe.c_str()));
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    execv(exe.c_str(), argv.data());
    perror("execv");
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  ChildProc c;
  c.pid = pid;
  c.stdin_fd = in_pipe[1];
  c.stdout_fd = out_pipe[0];
  c.name = name;
  c.log_path = log_path;
  return c;
}

std::string log_excerpt(const std::string& path) {
  std::ifstream f(path);
  if (!f) return "(no log)";
  std::string all((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  if (all.size() > 2048) all = all.substr(all.size() - 2048);
  return all;
}

// Reads lines from the child's stdout until one starts with "READY";
// returns the value of its "port=" field.
int await_ready(ChildProc& c, int timeout_ms) {
  std::string line;
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::milliseconds(timeout_ms);
  while (std::chrono::steady_clock::now() < deadline) {
    pollfd pfd{c.stdout_fd, POLLIN, 0};
    if (::poll(&pfd, 1, 50) <= 0) continue;
    char ch;
    const ssize_t n = read(c.stdout_fd, &ch, 1);
    if (n <= 0) break;
    if (ch != '\n') {
      line.push_back(ch);
      continue;
    }
    if (line.rfind("READY", 0) == 0) {
      const auto pos = line.find("port=");
      if (pos == std::string::npos)
        throw OrchestratorError(c.name + ": READY without port");
      return std::stoi(line.substr(pos + 5));
    }
    line.clear();
  }
  throw OrchestratorError(c.name + " did not become ready: " +
                          log_excerpt(c.log_path));
}

bool child_exited(const ChildProc& c, int* status) {
  return waitpid(c.pid, status, WNOHANG) == c.pid;
}

void shutdown_child(ChildProc& c, int grace_ms) {
  if (c.pid < 0) return;
  if (c.stdin_fd >= 0) {
    close(c.stdin_fd);  // EOF on stdin is the shutdown request
    c.stdin_fd = -1;
  }
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::milliseconds(grace_ms);
  int status = 0;
  while (std::chrono::steady_clock::now() < deadline) {
    if (waitpid(c.pid, &status, WNOHANG) == c.pid) {
      c.pid = -1;
      return;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  kill(c.pid, SIGKILL);
  waitpid(c.pid, &status, 0);
  c.pid = -1;
}

bool stdin_closed() {
  pollfd pfd{STDIN_FILENO, POLLIN, 0};
  if (::poll(&pfd, 1, 0) <= 0) return false;
  char buf[64];
  return read(STDIN_FILENO, buf, sizeof buf) == 0;
}

}  // namespace

static RunMetrics run_scenario_realtime(const ScenarioConfig& cfg,
                                        const RunOptions& opt) {
  if (opt.exe_path.empty())
    throw OrchestratorError("realtime mode needs the orchestrator binary path");
  if (opt.out_dir.empty())
    throw OrchestratorError("realtime mode needs an output directory");
  fs::create_directories(opt.out_dir);
  const std::string cfg_path = opt.out_dir + "/scenario.cfg";
  write_scenario_file(cfg, cfg_path);

  const auto t0 = std::chrono::steady_clock::now();
  ChildProc plant, proxy, ems;
  auto teardown = [&] {
    shutdown_child(ems, 2000);
    shutdown_child(proxy, 2000);
    shutdown_child(plant, 2000);
  };
  try {
    plant = spawn_child(opt.exe_path,
                        {"plant-serve", "--config", cfg_path, "--port", "0",
                         "--out", opt.out_dir},
                        "plant-serve", opt.out_dir + "/plant.log");
    const int plant_port = await_ready(plant, 10000);

    proxy = spawn_child(opt.exe_path,
                        {"proxy", "--config", cfg_path, "--listen-port", "0",
                         "--upstream-port", std::to_string(plant_port), "--out",
                         opt.out_dir},
                        "proxy", opt.out_dir + "/proxy.log");
    const int proxy_port = await_ready(proxy, 10000);

    ems = spawn_child(opt.exe_path,
                      {"ems-run", "--config", cfg_path, "--port",
                       std::to_string(proxy_port), "--out", opt.out_dir},
                      "ems-run", opt.out_dir + "/ems.log");

    // supervise: the run ends when the EMS master finishes its horizon
    int status = 0;
    while (true) {
      if (child_exited(ems, &status)) {
        if (status != 0)
          throw OrchestratorError("ems-run failed: " +
                                  log_excerpt(ems.log_path));
        ems.pid = -1;
        break;
      }
      int s2 = 0;
      if (child_exited(plant, &s2))
        throw OrchestratorError("plant-serve died mid-run: " +
                                log_excerpt(plant.log_path));
      if (child_exited(proxy, &s2))
        throw OrchestratorError("proxy died mid-run: " +
                                log_excerpt(proxy.log_path));
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    // orderly shutdown flushes the plant trace and the proxy delay samples
    shutdown_child(proxy, 5000);
    shutdown_child(plant, 5000);
  } catch (...) {
    teardown();
    throw;
  }
  RunMetrics m = compute_metrics_from_dir(cfg, opt.out_dir);
  m.wall_time_s = wall_seconds_since(t0);
  write_metrics_file(opt.out_dir + "/metrics.txt", m);
  write_run_log(opt.out_dir + "/run.log", m.wall_time_s, m);
  return m;
}

RunMetrics run_scenario(const ScenarioConfig& cfg, const RunOptions& opt) {
  auto violations = validate_scenario(cfg);
  if (!violations.empty())
    throw OrchestratorError("invalid scenario: " + violations.front());
  return opt.mode == ClockMode::Virtual ? run_scenario_virtual(cfg, opt)
                                        : run_scenario_realtime(cfg, opt);
}

// ---------------------------------------------------------------------------
// realtime child entry points

int run_plant_server(const ScenarioConfig& cfg, int port,
                     const std::string& out_dir) {
  Plant plant(cfg);
  std::mutex mu;
  const double lookahead_h = cfg.reopt_period_min / 60.0;
  std::map<int, int> applied;
  for (int id : plant.bess_buses()) applied[id] = 0;

  ModbusSlaveModel model(
      cfg.spec,
      [&] {
        std::lock_guard lk(mu);
        return plant.snapshot();
      },
      [&](int unit, int reg, std::uint16_t value) {
        if (reg != kRegCommand) return;
        std::lock_guard lk(mu);
        plant.apply_commands(
            {{unit, static_cast<int>(reg_decode(value, RegKind::Command))}},
            lookahead_h);
        applied[unit] = static_cast<int>(reg_decode(value, RegKind::Command));
      });
  ModbusTcpServer server(std::move(model), port);
  std::printf("READY port=%d\n", server.port());
  std::fflush(stdout);

  const auto* grid_price = cfg.find_profile(ProfileKind::PriceGrid);
  const auto* bess_price = cfg.find_profile(ProfileKind::PriceBess);
  std::vector<TraceRow> trace;
  double next_trace = 1.0;
  double cost_acc = 0.0;
  const double end_s = cfg.duration_hours * 3600.0;
  const auto t0 = std::chrono::steady_clock::now();

  while (true) {
    const double target =
        std::min(wall_seconds_since(t0) * cfg.time_scale, end_s);
    {
      std::lock_guard lk(mu);
      while (plant.state().t_s < target - 1e-9) {
        const double stop = std::min(target, next_trace);
        plant.advance_to(stop);
        if (next_trace <= plant.state().t_s + 1e-9 && next_trace <= end_s) {
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
          for (int id : plant.bess_buses()) row.commands.push_back(applied[id]);
          const double cg = grid_price ? grid_price->value_at(next_trace) : 0.0;
          const double cb = bess_price ? bess_price->value_at(next_trace) : 0.0;
          double rev = 0.0;
          for (double p : snap.p_bess) rev += cb * p / 1000.0;
          cost_acc += (cg * snap.p_pcc / 1000.0 - rev) / 3600.0;
          row.cost_acc = cost_acc;
          trace.push_back(std::move(row));
          next_trace += 1.0;
        }
      }
    }
    if (stdin_closed()) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  server.stop();
  write_trace_csv(out_dir + "/plant_trace.csv", cfg, trace);
  return 0;
}

int run_proxy_process(const ScenarioConfig& cfg, int listen_port,
                      int upstream_port, const std::string& out_dir) {
  DelayProxy::Options opt;
  opt.listen_port = listen_port;
  opt.upstream_port = upstream_port;
  opt.model = run_traffic_model(cfg);
  DelayProxy proxy(std::move(opt));
  std::printf("READY port=%d\n", proxy.port());
  std::fflush(stdout);
  while (!stdin_closed())
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  proxy.stop();
  std::vector<double> up, down;
  for (const auto& r : proxy.records())
    (r.direction == 0 ? up : down).push_back(r.delay_us / 1000.0);
  write_delay_samples_csv(out_dir + "/delay_samples.csv", up, down);
  return 0;
}

int run_ems_master(const ScenarioConfig& cfg, const std::string& host, int port,
                   const std::string& out_dir) {
  ModbusTcpMaster::Options mopt;
  mopt.host = host;
  mopt.port = port;
  mopt.timeout_ms = static_cast<int>(kMasterTimeoutS * 1000);
  mopt.retries = kMasterRetries;
  ModbusTcpMaster master(mopt);

  // staleness budget is wall-clock; the controller thinks in sim seconds
  EmsController ems(cfg, default_staleness_limit_s(cfg) * cfg.time_scale);
  std::map<int, EmsMeasurement> meas;
  std::vector<TickRecord> ticks;
  const double end_s = cfg.duration_hours * 3600.0;
  double next_tick = 300.0;
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<int> units{kUnitPcc};
  for (const auto& bus : cfg.spec.buses) units.push_back(bus.bus_id);

  while (true) {
    const auto cycle_start = std::chrono::steady_clock::now();
    for (int unit : units) {
      std::optional<std::vector<std::uint16_t>> regs;
      try {
        regs = master.read_holding(unit, 0, kRegCount);
      } catch (const TcpError&) {
        regs.reset();
      }
      const auto* bus = cfg.spec.find_bus(unit);
      if (regs && bus && bus->bess)
        meas[unit] = {reg_decode((*regs)[4], RegKind::Soc001),
                      wall_seconds_since(t0) * cfg.time_scale, true};
    }
    double sim_now = wall_seconds_since(t0) * cfg.time_scale;
    while (next_tick <= sim_now && next_tick <= end_s) {
      auto res = ems.tick(next_tick, meas);
      TickRecord rec;
      rec.t_s = next_tick;
      rec.commands = res.commands;
      rec.stale = res.stale;
      rec.cost_forecast = res.cost_forecast;
      rec.p_g_forecast = res.p_g_forecast;
      ticks.push_back(rec);
      if (!res.stale) {
        for (const auto& [bus_id, d] : res.commands) {
          const std::uint16_t raw = reg_encode(d, RegKind::Command);
          try {
            master.write_registers(bus_id, kRegCommand,
                                   std::span<const std::uint16_t>(&raw, 1));
          } catch (const TcpError&) {
          }
        }
      }
      next_tick += cfg.reopt_period_min * 60.0;
    }
    if (sim_now >= end_s || stdin_closed()) break;
    std::this_thread::sleep_until(
        cycle_start + std::chrono::milliseconds(
                          static_cast<int>(cfg.poll_period_ms)));
  }
  write_plan_log_csv(out_dir + "/plan_log.csv", ticks);
  return 0;
}

// ---------------------------------------------------------------------------

CompareReport compare_runs(const std::string& dir_a, const std::string& dir_b) {
  auto cfg_a = load_scenario_file(dir_a + "/scenario.cfg");
  auto cfg_b = load_scenario_file(dir_b + "/scenario.cfg");
  // only the network settings may differ between the two runs
  cfg_b.traffic_class = cfg_a.traffic_class;
  cfg_b.congestion = cfg_a.congestion;
  if (!(cfg_a == cfg_b))
    throw OrchestratorError("mismatched scenarios: " + dir_a + " vs " + dir_b);

  CompareReport rep;
  rep.a = load_metrics_file(dir_a + "/metrics.txt");
  rep.b = load_metrics_file(dir_b + "/metrics.txt");
  std::ostringstream os;
  auto row = [&](const char* name, double a, double b) {
    os << name << ": " << a << " vs " << b << " (delta " << b - a << ")\n";
  };
  row("total_cost", rep.a.total_cost, rep.b.total_cost);
  row("soc_violations", static_cast<double>(rep.a.soc_violations),
      static_cast<double>(rep.b.soc_violations));
  row("stale_ticks", static_cast<double>(rep.a.stale_ticks),
      static_cast<double>(rep.b.stale_ticks));
  row("timeouts", static_cast<double>(rep.a.timeouts),
      static_cast<double>(rep.b.timeouts));
  row("delay_up_mean_ms", rep.a.delay_up.mean_ms, rep.b.delay_up.mean_ms);
  row("delay_up_jitter_us", rep.a.delay_up.jitter_us, rep.b.delay_up.jitter_us);
  row("v_dc_min", rep.a.v_dc_min, rep.b.v_dc_min);
  row("v_dc_max", rep.a.v_dc_max, rep.b.v_dc_max);
  rep.text = os.str();
  return rep;
}

}  // namespace mgcs
