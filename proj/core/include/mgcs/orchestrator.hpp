#pragma once

#include <string>
#include <vector>

#include "mgcs/metrics.hpp"
#include "mgcs/scenario.hpp"
#include "mgcs/sim.hpp"

namespace mgcs {

struct OrchestratorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunOptions {
  ClockMode mode = ClockMode::Virtual;
  std::string out_dir;
  std::string exe_path;  // own binary, used to spawn realtime components
};

// Runs one scenario end to end and writes scenario.cfg, plant_trace.csv,
// plan_log.csv, delay_samples.csv, metrics.txt and run.log into out_dir.
// Virtual mode is single-process and bit-deterministic; realtime mode spawns
// plant-serve / proxy / ems-run children talking real Modbus-TCP.
RunMetrics run_scenario(const ScenarioConfig& cfg, const RunOptions& opt);

struct CalibrationCell {
  TrafficClass cls = TrafficClass::DS0;
  double rho = 0.0;
  std::size_t count = 0;
  double mean_ms = 0.0;
  double jitter_us = 0.0;
  double ref_mean_ms = 0.0;  // embedded reference value
  double rel_err = 0.0;      // (mean - ref) / ref
};

// Delay sweep: 5 classes x rho in {0, .25, .5, .75}, 178-byte messages.
std::vector<CalibrationCell> calibrate_netem(std::size_t samples_per_cell = 20000,
                                             std::uint64_t seed = 1);
void write_calibration_csv(const std::string& path,
                           const std::vector<CalibrationCell>& table);

// Reference one-way mean delays (ms) the calibration is checked against.
double reference_mean_delay_ms(TrafficClass cls, double rho);

struct CompareReport {
  RunMetrics a, b;
  std::string text;  // side-by-side deltas, one metric per line
};

// Both directories must hold runs of the same scenario (seed and profiles);
// only the network settings may differ. Throws on mismatch.
CompareReport compare_runs(const std::string& dir_a, const std::string& dir_b);

// Realtime child entry points, exposed for the CLI subcommands. Each prints
// "READY port=<n>" once serving and exits 0 on clean shutdown.
int run_plant_server(const ScenarioConfig& cfg, int port,
                     const std::string& out_dir);
int run_proxy_process(const ScenarioConfig& cfg, int listen_port,
                      int upstream_port, const std::string& out_dir);
int run_ems_master(const ScenarioConfig& cfg, const std::string& host, int port,
                   const std::string& out_dir);

}  // namespace mgcs
