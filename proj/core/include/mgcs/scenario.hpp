#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mgcs/profile.hpp"
#include "mgcs/types.hpp"

namespace mgcs {

enum class ClockMode { Virtual, Realtime };

// Single input to a reproducible run. Immutable after validation.
struct ScenarioConfig {
  MicrogridSpec spec;
  std::vector<TimeSeriesProfile> profiles;
  int horizon_hours = 24;
  double dt_dispatch_h = 1.0;
  double reopt_period_min = 5.0;   // sim minutes between EMS re-optimizations
  double poll_period_ms = 100.0;   // wall ms between Modbus poll cycles
  TrafficClass traffic_class = TrafficClass::DS3;
  double congestion = 0.0;         // rho in [0, 1)
  std::uint64_t rng_seed = 1;
  double time_scale = 600.0;       // sim seconds per wall second (realtime mode)
  double initial_soc = 0.5;
  std::map<int, double> initial_soc_by_bus;  // optional per-bus override
  double dt_sim_s = 1e-3;          // plant integrator step
  double duration_hours = 24.0;

  const TimeSeriesProfile* find_profile(ProfileKind kind, int bus_id = 0) const;
  double initial_soc_for(int bus_id) const;

  bool operator==(const ScenarioConfig&) const = default;
};

// Empty list iff every invariant holds. Violations are data, not exceptions.
std::vector<std::string> validate_scenario(const ScenarioConfig& cfg);

// Bundled four-bus, 400 V scenario with generated PV/load profiles and the
// default daily price curve.
ScenarioConfig default_scenario();

// The 24-entry default grid price curve, currency/kWh.
TimeSeriesProfile default_grid_price_profile();
TimeSeriesProfile default_bess_price_profile();

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key/value + [section] text format, documented in docs/formats.md.
ScenarioConfig load_scenario_file(const std::string& path);
void write_scenario_file(const ScenarioConfig& cfg, const std::string& path);

}  // namespace mgcs
