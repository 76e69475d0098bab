#include "mgcs/netem.hpp"

#include <limits>

#include <algorithm>
#include <cmath>

namespace mgcs {

TrafficClassModel TrafficClassModel::for_class(TrafficClass c, double rho,
                                               std::uint64_t seed) {
  TrafficClassModel m;
  m.cls = c;
  m.link_bps = traffic_class_link_bps(c);
  m.rho = rho;
  m.seed = seed;
  return m;
}

double serialization_delay_ms(int bytes, const TrafficClassModel& m) {
  if (bytes < 0) throw NetemError("negative message size");
  return 8.0 * bytes / m.link_bps * 1000.0;
}

double mean_delay_md1_ms(int bytes, const TrafficClassModel& m) {
  if (!(m.rho >= 0 && m.rho < 1)) throw NetemError("require 0 <= rho < 1");
  const double s = serialization_delay_ms(bytes, m);
  return m.propagation_ms + s * (1.0 + m.rho / (2.0 * (1.0 - m.rho)));
}

DelaySampler::DelaySampler(const TrafficClassModel& m, bool intrusive)
    : model_(m), intrusive_(intrusive), rng_(m.seed) {
  if (!(m.rho >= 0 && m.rho < 1)) throw NetemError("require 0 <= rho < 1");
  const double s_bg = serialization_delay_ms(m.background_bytes, m);
  if (m.rho > 0) {
    // background packet rate: rho of the link capacity
    interarrival_ms_ = std::exponential_distribution<double>(m.rho / s_bg);
    next_bg_ms_ = interarrival_ms_(rng_);
  } else {
    next_bg_ms_ = std::numeric_limits<double>::infinity();
  }
  // standalone sampling gap: long enough that successive draws are nearly
  // independent of each other's own service time
  gap_ms_ = std::max(20.0 * s_bg, 1.0);
}

void DelaySampler::advance_to(double t_ms) {
  const double s_bg = serialization_delay_ms(model_.background_bytes, model_);
  while (next_bg_ms_ <= t_ms) {
    backlog_ms_ = std::max(0.0, backlog_ms_ - (next_bg_ms_ - clock_ms_));
    clock_ms_ = next_bg_ms_;
    backlog_ms_ += s_bg;
    next_bg_ms_ += interarrival_ms_(rng_);
  }
  backlog_ms_ = std::max(0.0, backlog_ms_ - (t_ms - clock_ms_));
  clock_ms_ = t_ms;
}

double DelaySampler::sample_at(int bytes, double arrival_ms) {
  if (arrival_ms < clock_ms_) arrival_ms = clock_ms_;  // clamp clock skew
  advance_to(arrival_ms);
  double service = serialization_delay_ms(bytes, model_);
  if (model_.service_noise_frac > 0)
    service *= 1.0 + model_.service_noise_frac * noise_(rng_);
  const double wait = backlog_ms_;
  if (intrusive_) backlog_ms_ += service;
  return model_.propagation_ms + wait + service;
}

double DelaySampler::sample(int bytes) {
  return sample_at(bytes, clock_ms_ + gap_ms_);
}

void DelayAccumulator::add(double delay_ms) {
  if (count_ == 0) {
    min_ = max_ = delay_ms;
  } else {
    min_ = std::min(min_, delay_ms);
    max_ = std::max(max_, delay_ms);
    jitter_sum_ += std::fabs(delay_ms - prev_);
  }
  sum_ += delay_ms;
  prev_ = delay_ms;
  count_++;
}

DelaySummary DelayAccumulator::summary() const {
  DelaySummary s;
  s.count = count_;
  if (count_ == 0) return s;
  s.mean_ms = sum_ / count_;
  s.min_ms = min_;
  s.max_ms = max_;
  if (count_ > 1) s.jitter_us = jitter_sum_ / (count_ - 1) * 1000.0;
  return s;
}

DelaySummary summarize_delays(const std::vector<double>& delays_ms) {
  DelayAccumulator acc;
  for (double d : delays_ms) acc.add(d);
  return acc.summary();
}

DelayStats compute_delay_stats(const std::vector<double>& delays_ms) {
  if (delays_ms.size() < 2)
    throw NetemError("need at least 2 samples for delay statistics");
  DelayStats st;
  st.count = delays_ms.size();
  st.min_ms = delays_ms[0];
  st.max_ms = delays_ms[0];
  double sum = 0.0, jitter_sum = 0.0;
  for (std::size_t i = 0; i < delays_ms.size(); ++i) {
    const double d = delays_ms[i];
    sum += d;
    st.min_ms = std::min(st.min_ms, d);
    st.max_ms = std::max(st.max_ms, d);
    if (i > 0) jitter_sum += std::fabs(d - delays_ms[i - 1]);
    st.histogram[static_cast<int>(std::floor(d / 0.1))]++;
  }
  st.mean_ms = sum / st.count;
  st.jitter_us = jitter_sum / (st.count - 1) * 1000.0;
  return st;
}

}  // namespace mgcs
