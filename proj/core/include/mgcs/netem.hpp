#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <vector>

#include "mgcs/types.hpp"

namespace mgcs {

// Per-class link model: serialization + M/D/1 queueing behind Poisson
// background traffic + fixed propagation.
struct TrafficClassModel {
  TrafficClass cls = TrafficClass::DS3;
  double link_bps = 44.736e6;
  double propagation_ms = 2.0;
  double rho = 0.0;                 // congestion, fraction of link capacity
  int background_bytes = 178;      // background packet size
  std::uint64_t seed = 1;
  // Uniform per-message service-time variation as a fraction of the
  // serialization time. Zero by default; runs and calibration enable a small
  // value so jitter is class-ordered even at zero congestion.
  double service_noise_frac = 0.0;

  static TrafficClassModel for_class(TrafficClass c, double rho,
                                     std::uint64_t seed = 1);
};

struct NetemError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double serialization_delay_ms(int bytes, const TrafficClassModel& m);

// Analytic mean one-way delay: propagation + S * (1 + rho / (2 (1 - rho))).
double mean_delay_md1_ms(int bytes, const TrafficClassModel& m);

// Stochastic one-way delay sampler. Tracks the unfinished work of a FIFO
// queue fed by Poisson background packets; a message arriving at time t waits
// for the backlog, then serializes. Deterministic for a fixed seed.
class DelaySampler {
 public:
  explicit DelaySampler(const TrafficClassModel& m, bool intrusive = true);

  // Delay in ms for a message of `bytes` arriving at `arrival_ms` (monotone
  // nondecreasing across calls). When intrusive, the message's own service
  // time joins the backlog, so per-direction FIFO ordering is guaranteed.
  double sample_at(int bytes, double arrival_ms);

  // Standalone draw: advances an internal clock by a fixed inter-sample gap.
  double sample(int bytes);

  const TrafficClassModel& model() const { return model_; }

 private:
  void advance_to(double t_ms);

  TrafficClassModel model_;
  bool intrusive_;
  std::mt19937_64 rng_;
  std::exponential_distribution<double> interarrival_ms_;
  std::uniform_real_distribution<double> noise_{-1.0, 1.0};
  double backlog_ms_ = 0.0;
  double clock_ms_ = 0.0;
  double next_bg_ms_;
  double gap_ms_ = 0.0;  // standalone sampling gap
};

struct DelaySummary {
  std::size_t count = 0;
  double mean_ms = 0.0;
  double jitter_us = 0.0;  // mean absolute successive difference
  double min_ms = 0.0;
  double max_ms = 0.0;
};

// Streaming delay statistics; avoids retaining every sample of long runs.
class DelayAccumulator {
 public:
  void add(double delay_ms);
  DelaySummary summary() const;

 private:
  std::size_t count_ = 0;
  double sum_ = 0.0;
  double jitter_sum_ = 0.0;
  double min_ = 0.0;
  double max_ = 0.0;
  double prev_ = 0.0;
};

DelaySummary summarize_delays(const std::vector<double>& delays_ms);

struct DelayStats {
  std::size_t count = 0;
  double mean_ms = 0.0;
  double jitter_us = 0.0;  // mean absolute successive difference
  double min_ms = 0.0;
  double max_ms = 0.0;
  std::map<int, std::size_t> histogram;  // 0.1 ms bins: bin -> count
};

// Jitter needs at least two samples; throws NetemError otherwise.
DelayStats compute_delay_stats(const std::vector<double>& delays_ms);

}  // namespace mgcs
