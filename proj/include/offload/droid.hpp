#pragma once

// Droid: derivative-based re-injection baseline. Compares the slope of the
// dissemination ratio over a window W with the slope still needed to reach
// everybody before the panic zone, and injects at a rate clipped by c.

#include <algorithm>
#include <cmath>
#include <vector>

#include "offload/common.hpp"

namespace offload {

struct DroidConfig {
  Seconds W = 10.0;  // slope window
  double c = 0.1;    // clipping value

  void validate(Seconds control_step) const {
    if (!(W > 0.0)) throw ValidationError("droid W must be > 0");
    const double steps = W / control_step;
    if (std::abs(steps - std::round(steps)) > 1e-9) {
      throw ValidationError("droid W must be a multiple of the control step");
    }
    if (c < 0.0 || c > 1.0) throw ValidationError("droid c must lie in [0,1]");
  }
};

/// I(t) samples of the current episode, one per control step.
class DroidHistory {
 public:
  void reset(Seconds episode_start) {
    start_ = episode_start;
    samples_.clear();
  }

  void record(Seconds t, double dissemination) { samples_.push_back({t, dissemination}); }

  Seconds episode_start() const { return start_; }

  /// Sample recorded at time `t` (within half a millisecond), or the latest one before it.
  double at(Seconds t) const {
    double value = 0.0;
    for (const auto& s : samples_) {
      if (s.t > t + 5e-4) break;
      value = s.value;
    }
    return value;
  }

 private:
  struct Sample {
    Seconds t;
    double value;
  };
  Seconds start_ = 0.0;
  std::vector<Sample> samples_;
};

/// Delta_I(t) = (I(t) - I(t - W)) / W. Before a full window of history exists
/// the slope is reported as 0 so the caller lands in the full-rate branch.
inline double slope(const DroidHistory& history, Seconds t, Seconds W) {
  if (t - W < history.episode_start() - 5e-4) return 0.0;
  return (history.at(t) - history.at(t - W)) / W;
}

/// Delta_lim(t) = (1 - I(t)) / T, T being the time left before the panic zone.
inline double delta_lim(double dissemination, Seconds time_remaining) {
  return (1.0 - dissemination) / time_remaining;
}

inline double injection_rate(double delta_i, double delta_limit, double c) {
  if (delta_i <= 0.0) return c;
  if (delta_i <= delta_limit) return c * (1.0 - delta_i / delta_limit);
  return 0.0;
}

/// R(t) = ceil((1 - I) * N * r_inj).
inline std::size_t seed_count(double dissemination, std::size_t n_interested, double rate) {
  const double raw = (1.0 - dissemination) * static_cast<double>(n_interested) * rate;
  // Guard against 18.000000000000004-style products rounding up a whole seed.
  const double r = std::ceil(raw - 1e-9);
  return r <= 0.0 ? 0 : static_cast<std::size_t>(r);
}

/// Uniform sample of `r` waiting nodes, without replacement. Utility is ignored.
inline std::vector<NodeId> droid_select(std::size_t r, const std::vector<NodeId>& waiting, Rng& rng) {
  r = std::min(r, waiting.size());
  std::vector<NodeId> out;
  out.reserve(r);
  std::sample(waiting.begin(), waiting.end(), std::back_inserter(out), r, rng);
  return out;
}

/// Per-run Droid state. W and c never change during a run.
class DroidController {
 public:
  explicit DroidController(DroidConfig config) : config_(config) {}

  const DroidConfig& config() const { return config_; }
  const DroidHistory& history() const { return history_; }

  void begin_episode(Seconds t_create) { history_.reset(t_create); }

  /// Number of new seeds for the control step at time `t`.
  std::size_t decide(Seconds t, double dissemination, std::size_t n_interested, std::size_t waiting,
                     Seconds time_remaining) {
    history_.record(t, dissemination);
    const double d_i = slope(history_, t, config_.W);
    const double d_lim = delta_lim(dissemination, time_remaining);
    last_rate_ = injection_rate(d_i, d_lim, config_.c);
    return std::min(seed_count(dissemination, n_interested, last_rate_), waiting);
  }

  double last_rate() const { return last_rate_; }

 private:
  DroidConfig config_;
  DroidHistory history_;
  double last_rate_ = 0.0;
};

}  // namespace offload
