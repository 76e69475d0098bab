#pragma once

#include <string>

#include "mgcs/netem.hpp"
#include "mgcs/scenario.hpp"
#include "mgcs/sim.hpp"

namespace mgcs {

struct RunMetrics {
  double total_cost = 0.0;          // realized cost, currency
  std::size_t soc_violations = 0;   // samples outside the SoC band
  double v_dc_min = 0.0, v_dc_max = 0.0;
  double v_bus_min = 0.0, v_bus_max = 0.0;
  double pcc_import_kwh = 0.0;      // import positive, export negative values
  double pcc_export_kwh = 0.0;
  std::size_t stale_ticks = 0;
  std::size_t ems_ticks = 0;
  std::size_t timeouts = 0;
  double balance_max_frac = 0.0;    // worst residual / total load
  std::size_t balance_violations = 0;  // samples with residual >= 0.5 %
  DelaySummary delay_up, delay_down;
  double wall_time_s = 0.0;  // reported in run.log only, never in metrics.txt
};

struct MetricsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunMetrics compute_metrics(const ScenarioConfig& cfg, const RunResult& r);

// CSV writers for the run output directory.
void write_trace_csv(const std::string& path, const ScenarioConfig& cfg,
                     const std::vector<TraceRow>& trace);
void write_plan_log_csv(const std::string& path,
                        const std::vector<TickRecord>& ticks);
void write_delay_samples_csv(const std::string& path,
                             const std::vector<double>& up_ms,
                             const std::vector<double>& down_ms);

std::vector<TraceRow> load_trace_csv(const std::string& path);
std::vector<TickRecord> load_plan_log_csv(const std::string& path);
void load_delay_samples_csv(const std::string& path, std::vector<double>& up_ms,
                            std::vector<double>& down_ms);

// Rebuilds metrics from the CSVs in a run directory (plant_trace.csv,
// plan_log.csv, delay_samples.csv). Used for realtime runs and `compare`.
RunMetrics compute_metrics_from_dir(const ScenarioConfig& cfg,
                                    const std::string& dir);

// metrics.txt round-trip. wall_time is deliberately excluded so the file is
// identical across reruns of the same virtual-time scenario.
void write_metrics_file(const std::string& path, const RunMetrics& m);
RunMetrics load_metrics_file(const std::string& path);

// Voltage band and balance thresholds (design decisions).
inline constexpr double kVoltageTolFrac = 0.05;
inline constexpr double kBalanceTolFrac = 0.005;

}  // namespace mgcs
