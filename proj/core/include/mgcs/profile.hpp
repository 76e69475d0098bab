#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mgcs/types.hpp"

namespace mgcs {

inline constexpr double kSecondsPerDay = 86400.0;

enum class ProfileKind { Pv, Load, PriceGrid, PriceBess };

const char* to_string(ProfileKind k);
std::optional<ProfileKind> profile_kind_from_string(const std::string& s);

struct ProfileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Daily time series, periodic over [0, 86400). Sample times are strictly
// increasing seconds-of-day; lookups interpolate linearly and wrap.
struct TimeSeriesProfile {
  ProfileKind kind = ProfileKind::Load;
  int bus_id = 0;  // 0 when not bus-specific (prices)
  std::vector<std::pair<double, double>> samples;
  // How this profile was produced; preserved so a scenario file round-trips.
  std::string source;

  double value_at(double t_s) const;
  double max_value() const;
  double min_value() const;
  // Trapezoidal integral over one day, in value*hours.
  double integral_value_hours() const;
  void validate() const;  // throws ProfileError

  bool operator==(const TimeSeriesProfile& o) const {
    return kind == o.kind && bus_id == o.bus_id && samples == o.samples;
  }
};

// Half-sine between sunrise and sunset, zero at night, peak = rating at the
// midpoint. Sample spacing = resolution_s.
TimeSeriesProfile generate_pv_profile(double rating_w, double sunrise_h,
                                      double sunset_h, double resolution_s = 300.0,
                                      int bus_id = 0);

// Double-peaked daily load in [load_min, load_max] with seeded jitter.
// The samples at the two peak hours are exactly load_max.
TimeSeriesProfile generate_load_profile(const BusSpec& bus, double morning_peak_h,
                                        double evening_peak_h, std::uint64_t seed,
                                        double resolution_s = 300.0);

// Two-column CSV "time_s,value" with optional header line.
TimeSeriesProfile load_profile_csv(const std::string& path, ProfileKind kind,
                                   int bus_id = 0);

void write_profile_csv(const TimeSeriesProfile& p, const std::string& path);

}  // namespace mgcs
