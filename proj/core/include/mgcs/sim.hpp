#pragma once

#include <map>
#include <vector>

#include "mgcs/ems.hpp"
#include "mgcs/netem.hpp"
#include "mgcs/plant.hpp"
#include "mgcs/scenario.hpp"

namespace mgcs {

// One row of the per-second run trace.
struct TraceRow {
  double t_s = 0.0;
  double v_dc = 0.0;
  std::vector<double> v_bus;
  std::vector<double> p_pv;
  std::vector<double> p_load;
  std::vector<double> p_bess;
  std::vector<double> soc;
  double p_pcc = 0.0;
  std::vector<int> commands;  // per battery bus, spec order
  bool ems_stale = false;     // stale flag of the most recent EMS tick
  double cost_acc = 0.0;      // realized cost so far, currency
};

struct TickRecord {
  double t_s = 0.0;
  std::map<int, int> commands;
  bool stale = false;
  double cost_forecast = 0.0;
  double p_g_forecast = 0.0;
};

// Raw delay samples kept per direction; the full stream feeds delay_up/down.
inline constexpr std::size_t kMaxStoredDelaySamples = 200000;

struct RunResult {
  std::vector<TraceRow> trace;
  std::vector<TickRecord> ticks;
  std::vector<double> delays_up_ms;    // master -> plant, capped raw samples
  std::vector<double> delays_down_ms;  // plant -> master, capped raw samples
  DelaySummary delay_up, delay_down;   // over every message
  std::size_t timeouts = 0;
  std::size_t stale_ticks = 0;
  double total_cost = 0.0;
};

// Closed-loop run in virtual time: plant, Modbus slave, delay model and the
// polling master advance a shared simulated clock as fast as the host allows.
// Deterministic: identical config => identical result, bit for bit.
RunResult run_virtual(const ScenarioConfig& cfg);

// Service-time variation applied to the delay model during runs and
// calibration (fraction of the serialization time).
inline constexpr double kRunServiceNoiseFrac = 0.01;

// Master-side timeout and retry budget shared by both clock modes.
inline constexpr double kMasterTimeoutS = 0.250;
inline constexpr int kMasterRetries = 1;

TrafficClassModel run_traffic_model(const ScenarioConfig& cfg);

}  // namespace mgcs
