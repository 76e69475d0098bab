#include "mgcs/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mgcs {

const char* to_string(TrafficClass c) {
  switch (c) {
    case TrafficClass::DS0: return "DS0";
    case TrafficClass::DS1: return "DS1";
    case TrafficClass::DS3: return "DS3";
    case TrafficClass::E1: return "E1";
    case TrafficClass::E3: return "E3";
  }
  return "?";
}

std::optional<TrafficClass> traffic_class_from_string(const std::string& s) {
  if (s == "DS0") return TrafficClass::DS0;
  if (s == "DS1") return TrafficClass::DS1;
  if (s == "DS3") return TrafficClass::DS3;
  if (s == "E1") return TrafficClass::E1;
  if (s == "E3") return TrafficClass::E3;
  return std::nullopt;
}

double traffic_class_link_bps(TrafficClass c) {
  switch (c) {
    case TrafficClass::DS0: return 64e3;
    case TrafficClass::DS1: return 1.544e6;
    case TrafficClass::DS3: return 44.736e6;
    case TrafficClass::E1: return 2.048e6;
    case TrafficClass::E3: return 34.368e6;
  }
  return 0.0;
}

const TimeSeriesProfile* ScenarioConfig::find_profile(ProfileKind kind,
                                                      int bus_id) const {
  for (const auto& p : profiles)
    if (p.kind == kind && (bus_id == 0 || p.bus_id == bus_id)) return &p;
  return nullptr;
}

double ScenarioConfig::initial_soc_for(int bus_id) const {
  auto it = initial_soc_by_bus.find(bus_id);
  return it == initial_soc_by_bus.end() ? initial_soc : it->second;
}

std::vector<std::string> validate_scenario(const ScenarioConfig& cfg) {
  std::vector<std::string> v;
  auto fail = [&](std::string msg) { v.push_back(std::move(msg)); };

  if (cfg.spec.buses.size() != 4)
    fail("expected exactly 4 prosumer buses, got " +
         std::to_string(cfg.spec.buses.size()));
  if (!(cfg.spec.v_nominal > 0)) fail("v_nominal must be > 0");
  if (!(cfg.spec.c_dc_f > 0)) fail("c_dc must be > 0");
  for (const auto& f : cfg.spec.feeders) {
    if (!(f.r_ohm > 0)) fail("feeder r must be > 0");
    if (!(f.l_h > 0)) fail("feeder l must be > 0");
  }
  std::vector<int> seen_ids;
  for (const auto& b : cfg.spec.buses) {
    const std::string tag = "bus " + std::to_string(b.bus_id) + ": ";
    if (b.bus_id < 2 || b.bus_id > 5) fail(tag + "bus_id must be in 2..5");
    if (std::count(seen_ids.begin(), seen_ids.end(), b.bus_id))
      fail(tag + "duplicate bus_id");
    seen_ids.push_back(b.bus_id);
    if (b.pv_rating_w < 0) fail(tag + "pv_rating must be >= 0");
    if (b.load_min_w > b.load_max_w) fail(tag + "load_min > load_max");
    if (b.load_min_w < 0) fail(tag + "load_min must be >= 0");
    if (b.feeder_index < 0 ||
        b.feeder_index >= static_cast<int>(cfg.spec.feeders.size()))
      fail(tag + "feeder_index out of range");
    if (b.bess) {
      const auto& bat = *b.bess;
      if (!(bat.capacity_wh > 0)) fail(tag + "battery capacity must be > 0");
      if (!(0 <= bat.soc_min && bat.soc_min < bat.soc_max && bat.soc_max <= 1))
        fail(tag + "require 0 <= soc_min < soc_max <= 1");
      if (!(0 < bat.eta && bat.eta <= 1)) fail(tag + "require 0 < eta <= 1");
      if (!(0 < bat.p_dispatch_w && bat.p_dispatch_w <= bat.p_conv_max_w))
        fail(tag + "require 0 < p_dispatch <= p_conv_max");
      if (!(bat.l_conv_h > 0)) fail(tag + "converter inductance must be > 0");
      double soc0 = cfg.initial_soc_for(b.bus_id);
      if (soc0 < bat.soc_min || soc0 > bat.soc_max)
        fail(tag + "initial_soc " + std::to_string(soc0) +
             " outside [soc_min, soc_max]");
    }
  }
  for (const auto& p : cfg.profiles) {
    try {
      p.validate();
    } catch (const ProfileError& e) {
      fail(std::string("profile ") + to_string(p.kind) + ": " + e.what());
    }
    if (p.bus_id != 0 && !cfg.spec.find_bus(p.bus_id))
      fail(std::string("profile ") + to_string(p.kind) +
           " references unknown bus " + std::to_string(p.bus_id));
  }
  if (!(cfg.congestion >= 0 && cfg.congestion < 1))
    fail("congestion must be < 1 (and >= 0)");
  if (!(cfg.time_scale >= 1)) fail("time_scale must be >= 1");
  if (!(cfg.reopt_period_min > 0)) fail("reopt_period must be > 0");
  if (!(cfg.poll_period_ms > 0)) fail("poll_period must be > 0");
  if (!(cfg.horizon_hours > 0)) fail("horizon_hours must be > 0");
  if (!(cfg.dt_dispatch_h > 0)) fail("dt_dispatch must be > 0");
  if (!(cfg.dt_sim_s > 0 && cfg.dt_sim_s <= 1e-3))
    fail("dt_sim must be in (0, 1 ms]");
  if (!(cfg.duration_hours > 0)) fail("duration_hours must be > 0");
  return v;
}

TimeSeriesProfile default_grid_price_profile() {
  static const double hourly[24] = {
      0.06,  0.055, 0.05, 0.05,  0.05, 0.055, 0.07, 0.10,
      0.14,  0.12,  0.10, 0.09,  0.085, 0.08, 0.085, 0.09,
      0.11,  0.15,  0.19, 0.21,  0.17, 0.12,  0.09, 0.07};
  TimeSeriesProfile p;
  p.kind = ProfileKind::PriceGrid;
  p.source = "builtin price_grid";
  for (int h = 0; h < 24; ++h) p.samples.emplace_back(h * 3600.0, hourly[h]);
  return p;
}

TimeSeriesProfile default_bess_price_profile() {
  auto grid = default_grid_price_profile();
  double mean = 0.0;
  for (auto& [t, v] : grid.samples) mean += v;
  mean /= grid.samples.size();
  TimeSeriesProfile p;
  p.kind = ProfileKind::PriceBess;
  p.source = "builtin price_bess";
  // flat discharge remuneration at 20 % of the mean grid price
  for (int h = 0; h < 24; ++h) p.samples.emplace_back(h * 3600.0, 0.2 * mean);
  return p;
}

namespace {

BatterySpec make_battery(double capacity_wh) {
  BatterySpec b;
  b.capacity_wh = capacity_wh;
  b.p_conv_max_w = 1.5 * capacity_wh;   // 1.5C
  b.p_dispatch_w = 0.4 * capacity_wh;   // hourly quantum
  return b;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ScenarioConfig default_scenario() {
  ScenarioConfig cfg;
  cfg.rng_seed = 42;
  cfg.spec.v_nominal = 400.0;
  cfg.spec.c_dc_f = 0.005;
  cfg.spec.feeders = {{1.257, 0.031}, {1.150, 0.030}, {0.868, 0.028},
                      {0.469, 0.035}};

  BusSpec b2{2, 1450.0, make_battery(1000.0), 160.0, 130.0, 0};
  BusSpec b3{3, 0.0, make_battery(2000.0), 720.0, 240.0, 1};
  BusSpec b4{4, 450.0, make_battery(1000.0), 700.0, 110.0, 2};
  BusSpec b5{5, 0.0, make_battery(2000.0), 1100.0, 210.0, 3};
  cfg.spec.buses = {b2, b3, b4, b5};

  for (const auto& bus : cfg.spec.buses) {
    if (bus.pv_rating_w > 0) {
      auto p = generate_pv_profile(bus.pv_rating_w, 6, 18, 300, bus.bus_id);
      p.source = "generate pv " + fmt_double(bus.pv_rating_w) + " 6 18 300";
      cfg.profiles.push_back(std::move(p));
    }
    std::uint64_t seed = cfg.rng_seed * 1000 + bus.bus_id;
    auto l = generate_load_profile(bus, 8, 19, seed, 300);
    l.source = "generate load 8 19 " + std::to_string(seed) + " 300";
    cfg.profiles.push_back(std::move(l));
  }
  cfg.profiles.push_back(default_grid_price_profile());
  cfg.profiles.push_back(default_bess_price_profile());
  return cfg;
}

// ---------------------------------------------------------------------------
// scenario file I/O

namespace {

struct Section {
  std::string header;  // e.g. "bus 2", "feeder 0", "profile", "" for top level
  std::vector<std::pair<std::string, std::string>> kv;
  int lineno = 0;
};

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (...) {
    throw ConfigError("bad numeric value for '" + key + "': " + s);
  }
}

TimeSeriesProfile build_profile_from_source(const std::string& source,
                                            ProfileKind kind, int bus_id,
                                            const ScenarioConfig& cfg,
                                            const std::filesystem::path& base_dir) {
  std::istringstream ss(source);
  std::string op;
  ss >> op;
  if (op == "file") {
    std::string rel;
    ss >> rel;
    auto path = std::filesystem::path(rel).is_absolute()
                    ? std::filesystem::path(rel)
                    : base_dir / rel;
    auto p = load_profile_csv(path.string(), kind, bus_id);
    p.source = source;
    return p;
  }
  if (op == "generate") {
    std::string what;
    ss >> what;
    if (what == "pv") {
      double rating, rise, set, res;
      if (!(ss >> rating >> rise >> set >> res))
        throw ConfigError("bad pv generate directive: " + source);
      auto p = generate_pv_profile(rating, rise, set, res, bus_id);
      p.source = source;
      return p;
    }
    if (what == "load") {
      double morning, evening, res;
      std::uint64_t seed;
      if (!(ss >> morning >> evening >> seed >> res))
        throw ConfigError("bad load generate directive: " + source);
      const BusSpec* bus = cfg.spec.find_bus(bus_id);
      if (!bus) throw ConfigError("load profile for unknown bus " +
                                  std::to_string(bus_id));
      auto p = generate_load_profile(*bus, morning, evening, seed, res);
      p.source = source;
      return p;
    }
    throw ConfigError("unknown generate kind: " + what);
  }
  throw ConfigError("unknown profile source: " + source);
}

}  // namespace

ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path);
  const auto base_dir = std::filesystem::path(path).parent_path();

  std::vector<Section> sections;
  sections.push_back({});
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(path + ":" + std::to_string(lineno) + ": bad section");
      sections.push_back({trim(line.substr(1, line.size() - 2)), {}, lineno});
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    sections.back().kv.emplace_back(trim(line.substr(0, eq)),
                                    trim(line.substr(eq + 1)));
  }

  ScenarioConfig cfg;
  cfg.profiles.clear();
  // pass 1: top-level keys, buses, feeders
  std::map<int, FeederSpec> feeders;
  for (const auto& sec : sections) {
    std::istringstream hs(sec.header);
    std::string stype;
    hs >> stype;
    if (sec.header.empty()) {
      for (const auto& [k, val] : sec.kv) {
        if (k == "v_nominal") cfg.spec.v_nominal = parse_double(val, k);
        else if (k == "c_dc") cfg.spec.c_dc_f = parse_double(val, k);
        else if (k == "horizon_hours") cfg.horizon_hours = (int)parse_double(val, k);
        else if (k == "dt_dispatch_h") cfg.dt_dispatch_h = parse_double(val, k);
        else if (k == "reopt_period_min") cfg.reopt_period_min = parse_double(val, k);
        else if (k == "poll_period_ms") cfg.poll_period_ms = parse_double(val, k);
        else if (k == "traffic_class") {
          auto tc = traffic_class_from_string(val);
          if (!tc) throw ConfigError("unknown traffic_class: " + val);
          cfg.traffic_class = *tc;
        } else if (k == "congestion") cfg.congestion = parse_double(val, k);
        else if (k == "rng_seed") cfg.rng_seed = std::stoull(val);
        else if (k == "time_scale") cfg.time_scale = parse_double(val, k);
        else if (k == "initial_soc") cfg.initial_soc = parse_double(val, k);
        else if (k == "dt_sim_s") cfg.dt_sim_s = parse_double(val, k);
        else if (k == "duration_hours") cfg.duration_hours = parse_double(val, k);
        else throw ConfigError("unknown key: " + k);
      }
    } else if (stype == "bus") {
      int id;
      if (!(hs >> id)) throw ConfigError("bad bus section: " + sec.header);
      BusSpec bus;
      bus.bus_id = id;
      BatterySpec bat;
      bool has_bat = false;
      for (const auto& [k, val] : sec.kv) {
        if (k == "pv_rating") bus.pv_rating_w = parse_double(val, k);
        else if (k == "load_max") bus.load_max_w = parse_double(val, k);
        else if (k == "load_min") bus.load_min_w = parse_double(val, k);
        else if (k == "feeder_index") bus.feeder_index = (int)parse_double(val, k);
        else if (k == "initial_soc") cfg.initial_soc_by_bus[id] = parse_double(val, k);
        else if (k == "bess_capacity_wh") { bat.capacity_wh = parse_double(val, k); has_bat = true; }
        else if (k == "bess_soc_min") { bat.soc_min = parse_double(val, k); has_bat = true; }
        else if (k == "bess_soc_max") { bat.soc_max = parse_double(val, k); has_bat = true; }
        else if (k == "bess_eta") { bat.eta = parse_double(val, k); has_bat = true; }
        else if (k == "bess_p_conv_max") { bat.p_conv_max_w = parse_double(val, k); has_bat = true; }
        else if (k == "bess_p_dispatch") { bat.p_dispatch_w = parse_double(val, k); has_bat = true; }
        else if (k == "bess_l_conv") { bat.l_conv_h = parse_double(val, k); has_bat = true; }
        else throw ConfigError("unknown bus key: " + k);
      }
      if (has_bat) {
        if (bat.p_conv_max_w == 0) bat.p_conv_max_w = 1.5 * bat.capacity_wh;
        if (bat.p_dispatch_w == 0) bat.p_dispatch_w = 0.4 * bat.capacity_wh;
        bus.bess = bat;
      }
      cfg.spec.buses.push_back(bus);
    } else if (stype == "feeder") {
      int idx;
      if (!(hs >> idx)) throw ConfigError("bad feeder section: " + sec.header);
      FeederSpec f;
      for (const auto& [k, val] : sec.kv) {
        if (k == "r") f.r_ohm = parse_double(val, k);
        else if (k == "l") f.l_h = parse_double(val, k);
        else throw ConfigError("unknown feeder key: " + k);
      }
      feeders[idx] = f;
    } else if (stype != "profile") {
      throw ConfigError("unknown section: " + sec.header);
    }
  }
  for (const auto& [idx, f] : feeders) {
    if (idx != static_cast<int>(cfg.spec.feeders.size()))
      throw ConfigError("feeder indices must be contiguous from 0");
    cfg.spec.feeders.push_back(f);
  }
  // pass 2: profiles (need bus specs for load generation)
  for (const auto& sec : sections) {
    if (sec.header != "profile") {
      std::istringstream hs(sec.header);
      std::string stype;
      hs >> stype;
      if (stype != "profile") continue;
    }
    ProfileKind kind = ProfileKind::Load;
    int bus_id = 0;
    std::string source;
    std::vector<std::pair<double, double>> inline_samples;
    for (const auto& [k, val] : sec.kv) {
      if (k == "kind") {
        auto pk = profile_kind_from_string(val);
        if (!pk) throw ConfigError("unknown profile kind: " + val);
        kind = *pk;
      } else if (k == "bus") {
        bus_id = (int)parse_double(val, k);
      } else if (k == "file" || k == "generate") {
        source = k + " " + val;
      } else if (k == "samples") {
        std::istringstream ss(val);
        std::string tok;
        while (ss >> tok) {
          auto colon = tok.find(':');
          if (colon == std::string::npos)
            throw ConfigError("bad inline sample: " + tok);
          inline_samples.emplace_back(parse_double(tok.substr(0, colon), k),
                                      parse_double(tok.substr(colon + 1), k));
        }
      } else {
        throw ConfigError("unknown profile key: " + k);
      }
    }
    if (!inline_samples.empty()) {
      TimeSeriesProfile p;
      p.kind = kind;
      p.bus_id = bus_id;
      p.samples = std::move(inline_samples);
      p.source = "inline";
      p.validate();
      cfg.profiles.push_back(std::move(p));
    } else if (!source.empty()) {
      cfg.profiles.push_back(
          build_profile_from_source(source, kind, bus_id, cfg, base_dir));
    } else {
      throw ConfigError("profile section with no source");
    }
  }
  return cfg;
}

void write_scenario_file(const ScenarioConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write scenario file: " + path);
  auto d = fmt_double;
  out << "v_nominal = " << d(cfg.spec.v_nominal) << "\n"
      << "c_dc = " << d(cfg.spec.c_dc_f) << "\n"
      << "horizon_hours = " << cfg.horizon_hours << "\n"
      << "dt_dispatch_h = " << d(cfg.dt_dispatch_h) << "\n"
      << "reopt_period_min = " << d(cfg.reopt_period_min) << "\n"
      << "poll_period_ms = " << d(cfg.poll_period_ms) << "\n"
      << "traffic_class = " << to_string(cfg.traffic_class) << "\n"
      << "congestion = " << d(cfg.congestion) << "\n"
      << "rng_seed = " << cfg.rng_seed << "\n"
      << "time_scale = " << d(cfg.time_scale) << "\n"
      << "initial_soc = " << d(cfg.initial_soc) << "\n"
      << "dt_sim_s = " << d(cfg.dt_sim_s) << "\n"
      << "duration_hours = " << d(cfg.duration_hours) << "\n";
  for (std::size_t i = 0; i < cfg.spec.feeders.size(); ++i) {
    out << "\n[feeder " << i << "]\n"
        << "r = " << d(cfg.spec.feeders[i].r_ohm) << "\n"
        << "l = " << d(cfg.spec.feeders[i].l_h) << "\n";
  }
  for (const auto& bus : cfg.spec.buses) {
    out << "\n[bus " << bus.bus_id << "]\n"
        << "pv_rating = " << d(bus.pv_rating_w) << "\n"
        << "load_max = " << d(bus.load_max_w) << "\n"
        << "load_min = " << d(bus.load_min_w) << "\n"
        << "feeder_index = " << bus.feeder_index << "\n";
    if (auto it = cfg.initial_soc_by_bus.find(bus.bus_id);
        it != cfg.initial_soc_by_bus.end())
      out << "initial_soc = " << d(it->second) << "\n";
    if (bus.bess) {
      out << "bess_capacity_wh = " << d(bus.bess->capacity_wh) << "\n"
          << "bess_soc_min = " << d(bus.bess->soc_min) << "\n"
          << "bess_soc_max = " << d(bus.bess->soc_max) << "\n"
          << "bess_eta = " << d(bus.bess->eta) << "\n"
          << "bess_p_conv_max = " << d(bus.bess->p_conv_max_w) << "\n"
          << "bess_p_dispatch = " << d(bus.bess->p_dispatch_w) << "\n"
          << "bess_l_conv = " << d(bus.bess->l_conv_h) << "\n";
    }
  }
  for (const auto& p : cfg.profiles) {
    out << "\n[profile]\n"
        << "kind = " << to_string(p.kind) << "\n";
    if (p.bus_id != 0) out << "bus = " << p.bus_id << "\n";
    if (p.source.rfind("generate ", 0) == 0 || p.source.rfind("file ", 0) == 0) {
      auto sp = p.source.find(' ');
      out << p.source.substr(0, sp) << " = " << p.source.substr(sp + 1) << "\n";
    } else {
      out << "samples =";
      for (const auto& [t, v] : p.samples) out << " " << d(t) << ":" << d(v);
      out << "\n";
    }
  }
}

}  // namespace mgcs
