#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mgcs {

// Hourly battery dispatch quantum and physical converter limit are kept
// separate: the converter can move 1.5C but a full 1.5C-hour action can never
// fit inside the SoC window, so the dispatcher works with p_dispatch_w.
struct BatterySpec {
  double capacity_wh = 0.0;
  double soc_min = 0.15;
  double soc_max = 0.95;
  double eta = 0.95;           // round-trip efficiency
  double p_conv_max_w = 0.0;   // physical converter limit (1.5C)
  double p_dispatch_w = 0.0;   // hourly dispatch quantum
  double l_conv_h = 0.002;     // converter inductance

  bool operator==(const BatterySpec&) const = default;
};

struct FeederSpec {
  double r_ohm = 0.0;
  double l_h = 0.0;

  bool operator==(const FeederSpec&) const = default;
};

struct BusSpec {
  int bus_id = 0;
  double pv_rating_w = 0.0;
  std::optional<BatterySpec> bess;
  double load_max_w = 0.0;
  double load_min_w = 0.0;
  int feeder_index = 0;

  bool operator==(const BusSpec&) const = default;
};

struct MicrogridSpec {
  std::vector<BusSpec> buses;   // prosumer buses, ids 2..5
  double v_nominal = 400.0;
  double c_dc_f = 0.005;        // DC bus capacitance
  std::vector<FeederSpec> feeders;

  const BusSpec* find_bus(int bus_id) const {
    for (const auto& b : buses)
      if (b.bus_id == bus_id) return &b;
    return nullptr;
  }

  bool operator==(const MicrogridSpec&) const = default;
};

enum class TrafficClass { DS0, DS1, DS3, E1, E3 };

const char* to_string(TrafficClass c);
std::optional<TrafficClass> traffic_class_from_string(const std::string& s);
double traffic_class_link_bps(TrafficClass c);

}  // namespace mgcs
