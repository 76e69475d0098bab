#include "mgcs/profile.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace mgcs {

const char* to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::Pv: return "pv";
    case ProfileKind::Load: return "load";
    case ProfileKind::PriceGrid: return "price_grid";
    case ProfileKind::PriceBess: return "price_bess";
  }
  return "?";
}

std::optional<ProfileKind> profile_kind_from_string(const std::string& s) {
  if (s == "pv") return ProfileKind::Pv;
  if (s == "load") return ProfileKind::Load;
  if (s == "price_grid") return ProfileKind::PriceGrid;
  if (s == "price_bess") return ProfileKind::PriceBess;
  return std::nullopt;
}

double TimeSeriesProfile::value_at(double t_s) const {
  if (samples.empty()) throw ProfileError("empty profile");
  if (samples.size() == 1) return samples.front().second;
  double t = std::fmod(t_s, kSecondsPerDay);
  if (t < 0) t += kSecondsPerDay;
  // First sample at or after t.
  auto it = std::lower_bound(samples.begin(), samples.end(), t,
                             [](const auto& s, double v) { return s.first < v; });
  double t0, v0, t1, v1;
  if (it == samples.begin()) {
    // wrap from the last sample of the previous day
    t0 = samples.back().first - kSecondsPerDay;
    v0 = samples.back().second;
    t1 = it->first;
    v1 = it->second;
  } else if (it == samples.end()) {
    t0 = samples.back().first;
    v0 = samples.back().second;
    t1 = samples.front().first + kSecondsPerDay;
    v1 = samples.front().second;
  } else {
    t0 = std::prev(it)->first;
    v0 = std::prev(it)->second;
    t1 = it->first;
    v1 = it->second;
  }
  if (t1 == t0) return v0;
  double a = (t - t0) / (t1 - t0);
  return v0 + a * (v1 - v0);
}

double TimeSeriesProfile::max_value() const {
  double m = samples.at(0).second;
  for (const auto& [t, v] : samples) m = std::max(m, v);
  return m;
}

double TimeSeriesProfile::min_value() const {
  double m = samples.at(0).second;
  for (const auto& [t, v] : samples) m = std::min(m, v);
  return m;
}

double TimeSeriesProfile::integral_value_hours() const {
  if (samples.size() < 2) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    acc += 0.5 * (samples[i].second + samples[i - 1].second) *
           (samples[i].first - samples[i - 1].first);
  }
  // close the day periodically
  acc += 0.5 * (samples.front().second + samples.back().second) *
         (kSecondsPerDay - samples.back().first + samples.front().first);
  return acc / 3600.0;
}

void TimeSeriesProfile::validate() const {
  if (samples.empty()) throw ProfileError("profile has no samples");
  double prev = -1.0;
  for (const auto& [t, v] : samples) {
    if (t < 0 || t >= kSecondsPerDay)
      throw ProfileError("sample time outside [0, 86400): " + std::to_string(t));
    if (t <= prev) throw ProfileError("sample times not strictly increasing");
    prev = t;
    if ((kind == ProfileKind::Pv || kind == ProfileKind::Load) && v < 0)
      throw ProfileError(std::string(to_string(kind)) + " value negative");
    if (!std::isfinite(v)) throw ProfileError("non-finite sample value");
  }
}

TimeSeriesProfile generate_pv_profile(double rating_w, double sunrise_h,
                                      double sunset_h, double resolution_s,
                                      int bus_id) {
  if (!(sunrise_h < sunset_h) || sunrise_h < 0 || sunset_h > 24)
    throw ProfileError("invalid sunrise/sunset hours");
  if (rating_w < 0) throw ProfileError("pv rating must be >= 0");
  TimeSeriesProfile p;
  p.kind = ProfileKind::Pv;
  p.bus_id = bus_id;
  const double rise_s = sunrise_h * 3600.0;
  const double set_s = sunset_h * 3600.0;
  for (double t = 0; t < kSecondsPerDay; t += resolution_s) {
    double v = 0.0;
    if (t >= rise_s && t <= set_s) {
      // rounding can push the argument a hair past pi at sunset
      v = std::max(0.0, rating_w * std::sin(std::numbers::pi * (t - rise_s) /
                                            (set_s - rise_s)));
    }
    p.samples.emplace_back(t, v);
  }
  p.validate();
  return p;
}

namespace {

double peak_shape(double t_h, double morning_h, double evening_h) {
  auto bump = [](double t, double c) {
    double d = std::fabs(t - c);
    d = std::min(d, 24.0 - d);  // wrapped distance
    const double sigma = 2.5;
    return std::exp(-0.5 * d * d / (sigma * sigma));
  };
  return std::max(bump(t_h, morning_h), bump(t_h, evening_h));
}

}  // namespace

TimeSeriesProfile generate_load_profile(const BusSpec& bus, double morning_peak_h,
                                        double evening_peak_h, std::uint64_t seed,
                                        double resolution_s) {
  if (bus.load_min_w > bus.load_max_w)
    throw ProfileError("load_min > load_max");
  TimeSeriesProfile p;
  p.kind = ProfileKind::Load;
  p.bus_id = bus.bus_id;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  const double span = bus.load_max_w - bus.load_min_w;
  for (double t = 0; t < kSecondsPerDay; t += resolution_s) {
    const double t_h = t / 3600.0;
    double shape = peak_shape(t_h, morning_peak_h, evening_peak_h);
    double v = bus.load_min_w + span * shape * (1.0 + 0.05 * jitter(rng));
    v = std::clamp(v, bus.load_min_w, bus.load_max_w);
    p.samples.emplace_back(t, v);
  }
  // pin the peak samples to the rated maximum
  for (auto& [t, v] : p.samples) {
    double t_h = t / 3600.0;
    if (t_h == morning_peak_h || t_h == evening_peak_h) v = bus.load_max_w;
  }
  p.validate();
  return p;
}

TimeSeriesProfile load_profile_csv(const std::string& path, ProfileKind kind,
                                   int bus_id) {
  std::ifstream in(path);
  if (!in) throw ProfileError("cannot open profile file: " + path);
  TimeSeriesProfile p;
  p.kind = kind;
  p.bus_id = bus_id;
  p.source = "file";
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // strip trailing CR and whitespace-only lines
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double t, v;
    char comma;
    if (!(ls >> t >> comma >> v) || comma != ',') {
      // allow a single header line
      if (lineno == 1 && p.samples.empty()) continue;
      throw ProfileError(path + ":" + std::to_string(lineno) + ": parse error");
    }
    p.samples.emplace_back(t, v);
  }
  try {
    p.validate();
  } catch (const ProfileError& e) {
    throw ProfileError(path + ": " + e.what());
  }
  return p;
}

void write_profile_csv(const TimeSeriesProfile& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ProfileError("cannot write profile file: " + path);
  out << "time_s,value\n";
  out.precision(17);
  for (const auto& [t, v] : p.samples) out << t << "," << v << "\n";
}

}  // namespace mgcs
