#pragma once

// Experiment orchestration: configuration, the per-content control loop,
// multi-run experiments, dynamic scenario switching, metrics and CSV reports.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "offload/common.hpp"
#include "offload/controller.hpp"
#include "offload/droid.hpp"
#include "offload/epidemic.hpp"
#include "offload/mobility.hpp"
#include "offload/rl.hpp"

namespace offload {

enum class ControllerKind { AC, Qe, Qs, DR };

inline std::string_view to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::AC: return "AC";
    case ControllerKind::Qe: return "Qe";
    case ControllerKind::Qs: return "Qs";
    case ControllerKind::DR: return "DR";
  }
  return "?";
}

inline ControllerKind parse_controller(std::string_view s) {
  if (s == "AC" || s == "ac") return ControllerKind::AC;
  if (s == "Qe" || s == "qe") return ControllerKind::Qe;
  if (s == "Qs" || s == "qs") return ControllerKind::Qs;
  if (s == "DR" || s == "dr" || s == "droid") return ControllerKind::DR;
  throw ValidationError("unknown controller '" + std::string(s) + "' (expected AC, Qe, Qs or DR)");
}

inline constexpr ControllerKind kAllControllers[] = {ControllerKind::AC, ControllerKind::Qe, ControllerKind::Qs,
                                                     ControllerKind::DR};

struct ExperimentConfig {
  std::string scenario = "sc-mini";  // mobility preset, ignored when trace_path is set
  std::string trace_path;
  Seconds deadline = 500.0;
  Seconds control_step = 5.0;
  Seconds panic_margin = -1.0;  // < 0 means one control step
  double interested_fraction = 1.0;
  bool collaboration = true;
  ControllerKind controller = ControllerKind::AC;
  Hyperparams hyper;
  StateGrid grid;
  DroidConfig droid;
  std::uint32_t n_runs = 1;
  std::uint64_t rng_seed = 1;
  std::string output_dir = "out";
  std::size_t ma_window = 50;
  bool log_steps = false;
  bool log_deliveries = false;
  bool dump_tables = false;

  Seconds effective_panic_margin() const { return panic_margin < 0.0 ? control_step : panic_margin; }

  void validate(std::uint32_t n_nodes) const {
    if (!(control_step > 0.0)) throw ValidationError("control_step must be > 0");
    if (!(deadline > 0.0)) throw ValidationError("deadline must be > 0");
    const double steps = deadline / control_step;
    if (std::abs(steps - std::round(steps)) > 1e-9) throw ValidationError("deadline must be a multiple of control_step");
    if (!(effective_panic_margin() < deadline)) throw ValidationError("panic_margin must be shorter than the deadline");
    if (!(interested_fraction > 0.0 && interested_fraction <= 1.0)) {
      throw ValidationError("interested_fraction must be in (0,1]");
    }
    if (interested_fraction * n_nodes < 1.0) throw ValidationError("interested_fraction selects no node");
    if (n_runs == 0) throw ValidationError("n_runs must be > 0");
    if (ma_window == 0) throw ValidationError("ma_window must be > 0");
    if (grid.b1 == 0 || grid.b2 == 0 || grid.b3 == 0) throw ValidationError("state grid bins must be > 0");
    hyper.validate();
    if (controller == ControllerKind::DR) droid.validate(control_step);
  }
};

// ---------------------------------------------------------------------------
// Config file: flat `key = value` lines, `#` starts a comment.

inline std::string format_double(double v) { return format_seconds(v); }

inline void write_config(const ExperimentConfig& c, std::ostream& out) {
  out << "scenario = " << c.scenario << '\n'
      << "trace = " << c.trace_path << '\n'
      << "deadline = " << format_double(c.deadline) << '\n'
      << "control_step = " << format_double(c.control_step) << '\n'
      << "panic_margin = " << format_double(c.effective_panic_margin()) << '\n'
      << "interested_fraction = " << format_double(c.interested_fraction) << '\n'
      << "collaboration = " << (c.collaboration ? "true" : "false") << '\n'
      << "controller = " << to_string(c.controller) << '\n'
      << "alpha = " << format_double(c.hyper.alpha) << '\n'
      << "beta = " << format_double(c.hyper.beta) << '\n'
      << "gamma = " << format_double(c.hyper.gamma) << '\n'
      << "epsilon = " << format_double(c.hyper.epsilon) << '\n'
      << "omega = " << format_double(c.hyper.omega) << '\n'
      << "bins = " << c.grid.b1 << ',' << c.grid.b2 << ',' << c.grid.b3 << '\n'
      << "droid_w = " << format_double(c.droid.W) << '\n'
      << "droid_c = " << format_double(c.droid.c) << '\n'
      << "n_runs = " << c.n_runs << '\n'
      << "seed = " << c.rng_seed << '\n'
      << "output_dir = " << c.output_dir << '\n'
      << "ma_window = " << c.ma_window << '\n'
      << "log_steps = " << (c.log_steps ? "true" : "false") << '\n'
      << "log_deliveries = " << (c.log_deliveries ? "true" : "false") << '\n'
      << "dump_tables = " << (c.dump_tables ? "true" : "false") << '\n';
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return out = true, true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return out = false, true;
  return false;
}

}  // namespace detail

/// Applies one `key = value` setting. Returns false for unknown keys.
inline bool apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
  auto num = [&](double& dst) {
    if (!detail::parse_number(std::string_view(value), dst)) throw ValidationError("bad number for " + key);
  };
  auto uint = [&](auto& dst) {
    if (!detail::parse_number(std::string_view(value), dst)) throw ValidationError("bad integer for " + key);
  };
  auto flag = [&](bool& dst) {
    if (!detail::parse_bool(value, dst)) throw ValidationError("bad boolean for " + key);
  };
  if (key == "scenario") c.scenario = value;
  else if (key == "trace") c.trace_path = value;
  else if (key == "deadline") num(c.deadline);
  else if (key == "control_step") num(c.control_step);
  else if (key == "panic_margin") num(c.panic_margin);
  else if (key == "interested_fraction") num(c.interested_fraction);
  else if (key == "collaboration") flag(c.collaboration);
  else if (key == "controller") c.controller = parse_controller(value);
  else if (key == "alpha") num(c.hyper.alpha);
  else if (key == "beta") num(c.hyper.beta);
  else if (key == "gamma") num(c.hyper.gamma);
  else if (key == "epsilon") num(c.hyper.epsilon);
  else if (key == "omega") num(c.hyper.omega);
  else if (key == "bins") {
    std::vector<std::size_t> parts;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::size_t v = 0;
      if (!detail::parse_number(std::string_view(detail::trim(item)), v)) throw ValidationError("bad bins value");
      parts.push_back(v);
    }
    if (parts.size() == 1) c.grid = {parts[0], parts[0], parts[0]};
    else if (parts.size() == 3) c.grid = {parts[0], parts[1], parts[2]};
    else throw ValidationError("bins takes one or three values");
  } else if (key == "droid_w") num(c.droid.W);
  else if (key == "droid_c") num(c.droid.c);
  else if (key == "n_runs") uint(c.n_runs);
  else if (key == "seed") uint(c.rng_seed);
  else if (key == "output_dir") c.output_dir = value;
  else if (key == "ma_window") uint(c.ma_window);
  else if (key == "log_steps") flag(c.log_steps);
  else if (key == "log_deliveries") flag(c.log_deliveries);
  else if (key == "dump_tables") flag(c.dump_tables);
  else return false;
  return true;
}

inline ExperimentConfig read_config(std::istream& in, ExperimentConfig base = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected 'key = value'");
    const auto key = detail::trim(std::string_view(text).substr(0, eq));
    const auto value = detail::trim(std::string_view(text).substr(eq + 1));
    try {
      if (!apply_setting(base, key, value)) throw ParseError(line_no, "unknown key '" + key + "'");
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return base;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  return read_config(in, std::move(base));
}

// ---------------------------------------------------------------------------
// Metrics

/// 1 - (S_c + P_c) / I_c: share of interested nodes served by the opportunistic network alone.
inline double offloading_ratio(std::size_t seeds, std::size_t panic, std::size_t interested) {
  if (interested == 0) throw ValidationError("offloading ratio undefined for zero interested nodes");
  if (seeds + panic > interested) throw ValidationError("seeds + panic deliveries exceed interested nodes");
  return 1.0 - static_cast<double>(seeds + panic) / static_cast<double>(interested);
}

struct RunState;

struct StepRecord {
  Seconds t = 0.0;
  SystemState x;
  int action = 0;
  std::size_t new_seeds = 0;
  std::size_t waiting = 0;
};

struct ContentResult {
  int content_id = 0;
  int phase = 0;
  Seconds t_create = 0.0;
  Seconds deadline = 0.0;
  std::size_t seeds = 0;          // S_c
  std::size_t panic = 0;          // P_c
  std::size_t interested = 0;     // I_c
  std::size_t opportunistic = 0;  // interested nodes reached through contacts
  double ratio = 0.0;
  std::vector<int> actions;  // action index per control step
};

struct RunReport {
  ControllerKind controller = ControllerKind::AC;
  std::uint32_t run = 0;
  std::uint64_t seed = 0;
  std::string trace_provenance;
  std::vector<ContentResult> results;
  std::vector<double> moving_average;
  std::size_t phase_split = 0;  // index of the first phase-2 content; 0 when not a switch run
  double wall_clock_s = 0.0;
  std::string config_echo;
  std::string error;  // non-empty when the run failed
  std::shared_ptr<RunState> state;  // kept only when logs or table dumps are requested

  double mean_ratio(std::size_t begin = 0, std::size_t end = std::string::npos) const {
    end = std::min(end, results.size());
    if (begin >= end) return 0.0;
    double sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) sum += results[i].ratio;
    return sum / static_cast<double>(end - begin);
  }

  /// Mean over the last quarter of the contents in [begin, end).
  double last_quarter_mean(std::size_t begin = 0, std::size_t end = std::string::npos) const {
    end = std::min(end, results.size());
    const std::size_t n = end - begin;
    return mean_ratio(end - std::max<std::size_t>(1, n / 4), end);
  }

  double first_quarter_mean(std::size_t begin = 0, std::size_t end = std::string::npos) const {
    end = std::min(end, results.size());
    const std::size_t n = end - begin;
    return mean_ratio(begin, begin + std::max<std::size_t>(1, n / 4));
  }
};

inline std::vector<double> moving_average(const std::vector<ContentResult>& results, std::size_t window) {
  std::vector<double> out(results.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    sum += results[i].ratio;
    if (i >= window) sum -= results[i - window].ratio;
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

/// Sliding-window action frequencies: entry i covers contents (i-window, i].
inline std::vector<std::array<double, ActionSet::kSize>> action_frequencies(const RunReport& report,
                                                                           std::size_t window) {
  if (window == 0) throw ValidationError("window must cover at least one content");
  std::vector<std::array<double, ActionSet::kSize>> out(report.results.size());
  std::array<double, ActionSet::kSize> counts{};
  auto add = [&](const ContentResult& r, double sign) {
    for (int a : r.actions) counts[static_cast<std::size_t>(a)] += sign;
  };
  for (std::size_t i = 0; i < report.results.size(); ++i) {
    add(report.results[i], 1.0);
    if (i >= window) add(report.results[i - window], -1.0);
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    for (std::size_t a = 0; a < ActionSet::kSize; ++a) out[i][a] = total > 0.0 ? counts[a] / total : 0.0;
  }
  return out;
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;
};

/// Mean and population standard deviation.
inline Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

// ---------------------------------------------------------------------------
// Seeding policies

struct Observation {
  Seconds t = 0.0;
  Seconds t_create = 0.0;
  Seconds panic_time = 0.0;
  SystemState x;
  std::size_t interested = 0;
  std::size_t waiting = 0;
};

struct Decision {
  int action = 0;
  std::size_t seeds = 0;
};

/// Decides how many seeds to inject at each control step of a content.
class SeedingPolicy {
 public:
  virtual ~SeedingPolicy() = default;
  /// First decision of a content, taken at t_create.
  virtual Decision begin(const Observation& obs, Rng& rng) = 0;
  virtual Decision next(const Observation& obs, Rng& rng) = 0;
  /// True when new seeds are ranked by the utility ledger, false for uniform selection.
  virtual bool ranks_by_utility() const = 0;
};

class RlPolicy final : public SeedingPolicy {
 public:
  RlPolicy(LearnerKind kind, StateGrid grid, Hyperparams hp)
      : grid_(grid), agent_(kind, grid.cell_count(), ActionSet::kSize, hp) {}

  Decision begin(const Observation& obs, Rng& rng) override {
    return to_decision(agent_.begin(discretize(obs.x, grid_), rng), obs);
  }

  Decision next(const Observation& obs, Rng& rng) override {
    const double r = reward(obs.x, agent_.hyperparams().omega);
    return to_decision(agent_.step(r, discretize(obs.x, grid_), rng), obs);
  }

  bool ranks_by_utility() const override { return true; }

  const RlAgent& agent() const { return agent_; }
  const StateGrid& grid() const { return grid_; }

 private:
  static Decision to_decision(std::size_t action, const Observation& obs) {
    return {static_cast<int>(action), seeds_from_action(ActionSet::fraction(action), obs.waiting)};
  }

  StateGrid grid_;
  RlAgent agent_;
};

class DroidPolicy final : public SeedingPolicy {
 public:
  explicit DroidPolicy(DroidConfig config) : droid_(config) {}

  Decision begin(const Observation& obs, Rng& rng) override {
    droid_.begin_episode(obs.t_create);
    return next(obs, rng);
  }

  Decision next(const Observation& obs, Rng&) override {
    const std::size_t r =
        droid_.decide(obs.t, obs.x.x1, obs.interested, obs.waiting, obs.panic_time - obs.t);
    // Logged as the nearest action of the RL action set, for frequency plots.
    const double share = obs.waiting == 0 ? 0.0 : static_cast<double>(r) / static_cast<double>(obs.waiting);
    return {static_cast<int>(ActionSet::nearest(share)), r};
  }

  bool ranks_by_utility() const override { return false; }

  const DroidController& droid() const { return droid_; }

 private:
  DroidController droid_;
};

inline std::unique_ptr<SeedingPolicy> make_policy(const ExperimentConfig& c) {
  switch (c.controller) {
    case ControllerKind::AC: return std::make_unique<RlPolicy>(LearnerKind::actor_critic, c.grid, c.hyper);
    case ControllerKind::Qe: return std::make_unique<RlPolicy>(LearnerKind::q_eps_greedy, c.grid, c.hyper);
    case ControllerKind::Qs: return std::make_unique<RlPolicy>(LearnerKind::q_softmax, c.grid, c.hyper);
    case ControllerKind::DR: return std::make_unique<DroidPolicy>(c.droid);
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Episode loop

/// Optional per-run logs, appended to by run_episode.
struct EpisodeLogs {
  std::vector<std::pair<int, StepRecord>>* steps = nullptr;
  std::vector<std::pair<int, DeliveryEvent>>* deliveries = nullptr;
};

struct EpisodeParams {
  std::uint32_t n_nodes = 0;
  Seconds control_step = 5.0;
  Seconds panic_margin = 5.0;
  bool collaboration = true;
};

/// One content from creation to panic zone: initial draw at x0 = (0,0,1), then
/// every control step an epidemic round, the panic check, observation,
/// learning update, next draw and injection of the new seeds.
inline ContentResult run_episode(ContactCursor& contacts, const ContentItem& content, const EpisodeParams& params,
                                 SeedingPolicy& policy, UtilityLedger& ledger, Rng& rng, EpisodeLogs logs = {}) {
  const Seconds panic_time = content.deadline - params.panic_margin;
  ControllerEpisode episode(content, params.n_nodes, params.collaboration, panic_time);
  ContentResult result;
  result.content_id = content.content_id;
  result.t_create = content.t_create;
  result.deadline = content.deadline;
  result.interested = content.interested.size();

  auto log_acks = [&](const std::vector<DeliveryEvent>& acks) {
    if (!logs.deliveries) return;
    for (const auto& a : acks) logs.deliveries->emplace_back(content.content_id, a);
  };

  auto act = [&](Seconds t, bool first) {
    Observation obs{t, content.t_create, panic_time, episode.observe(t), result.interested,
                    episode.waiting_count()};
    const Decision d = first ? policy.begin(obs, rng) : policy.next(obs, rng);
    const auto waiting = episode.waiting();
    const auto picked =
        policy.ranks_by_utility() ? get_new_seeds(d.seeds, waiting, ledger, rng) : droid_select(d.seeds, waiting, rng);
    log_acks(episode.offload(picked, t, ledger));
    result.actions.push_back(d.action);
    if (logs.steps) logs.steps->emplace_back(content.content_id, StepRecord{t, obs.x, d.action, picked.size(), obs.waiting});
  };

  act(content.t_create, true);
  for (std::size_t step = 1;; ++step) {
    const Seconds t_prev = content.t_create + static_cast<double>(step - 1) * params.control_step;
    const Seconds t = std::min(content.t_create + static_cast<double>(step) * params.control_step, panic_time);
    auto acks = episode.epidemic().step(contacts.window(t_prev, t), t_prev);
    for (const auto& a : acks) episode.record_ack(a, ledger);
    log_acks(acks);
    if (t >= panic_time) {
      std::vector<DeliveryEvent> panic_log;
      episode.panic(t, ledger, logs.deliveries ? &panic_log : nullptr);
      log_acks(panic_log);
      break;
    }
    act(t, false);
  }

  result.seeds = episode.active_seeds().size();
  result.panic = episode.panic_deliveries();
  result.opportunistic = episode.opportunistic_deliveries();
  if (episode.epidemic().interested_holders() != result.interested ||
      result.seeds + result.panic + result.opportunistic != result.interested) {
    throw std::logic_error("delivery guarantee violated for content " + std::to_string(content.content_id));
  }
  result.ratio = offloading_ratio(result.seeds, result.panic, result.interested);
  return result;
}

// ---------------------------------------------------------------------------
// Runs

/// Uniformly sampled interested set, fixed for a whole run.
inline std::vector<NodeId> sample_interested(std::uint32_t n_nodes, double fraction, Rng& rng) {
  const auto k = static_cast<std::size_t>(std::max(1.0, std::round(fraction * n_nodes)));
  std::vector<NodeId> all(n_nodes);
  std::iota(all.begin(), all.end(), NodeId{0});
  std::vector<NodeId> out;
  std::sample(all.begin(), all.end(), std::back_inserter(out), std::min<std::size_t>(k, n_nodes), rng);
  return out;
}

// Stream ids of derive_seed().
inline constexpr std::uint64_t kTraceStream = 1;
inline constexpr std::uint64_t kInterestStream = 2;
inline constexpr std::uint64_t kControllerStream = 3;
inline constexpr std::uint64_t kSecondTraceStream = 4;

/// Memoizes generated traces so every controller of a comparison replays the
/// same contacts. Safe to share between threads.
class TraceCache {
 public:
  std::shared_ptr<const ContactTrace> get(const std::string& scenario, const std::string& trace_path,
                                          std::uint64_t seed) {
    const std::string key = trace_path.empty() ? scenario + "#" + std::to_string(seed) : "file:" + trace_path;
    std::shared_ptr<Slot> slot;
    {
      std::lock_guard lock(mutex_);
      auto& s = slots_[key];
      if (!s) s = std::make_shared<Slot>();
      slot = s;
    }
    std::call_once(slot->once, [&] {
      slot->trace = std::make_shared<const ContactTrace>(
          trace_path.empty() ? generate_trace(mobility_preset(scenario), seed) : load_trace(trace_path));
    });
    return slot->trace;
  }

 private:
  struct Slot {
    std::once_flag once;
    std::shared_ptr<const ContactTrace> trace;
  };
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
};

inline std::shared_ptr<const ContactTrace> run_trace(const ExperimentConfig& c, std::uint32_t run,
                                                     TraceCache* cache, std::uint64_t stream = kTraceStream) {
  const std::uint64_t seed = derive_seed(c.rng_seed, run, stream);
  if (cache) return cache->get(c.scenario, c.trace_path, seed);
  return std::make_shared<const ContactTrace>(c.trace_path.empty() ? generate_trace(mobility_preset(c.scenario), seed)
                                                                   : load_trace(c.trace_path));
}

/// Mutable state of one run that survives from content to content (and across a scenario switch).
struct RunState {
  std::unique_ptr<SeedingPolicy> policy;
  UtilityLedger ledger;
  Rng rng;
  std::vector<NodeId> interested;
  std::vector<std::pair<int, StepRecord>> steps;
  std::vector<std::pair<int, DeliveryEvent>> deliveries;
};

inline RunState start_run(const ExperimentConfig& c, std::uint32_t run, std::uint32_t n_nodes) {
  RunState s;
  s.policy = make_policy(c);
  s.ledger = UtilityLedger(n_nodes);
  Rng interest_rng(derive_seed(c.rng_seed, run, kInterestStream));
  s.interested = sample_interested(n_nodes, c.interested_fraction, interest_rng);
  s.rng.seed(derive_seed(c.rng_seed, run, kControllerStream));
  return s;
}

/// All sequential contents that fit in `trace`, appended to `report`.
inline void run_contents(const ExperimentConfig& c, const ContactTrace& trace, RunState& state, RunReport& report,
                         int phase, int first_id) {
  c.validate(trace.n_nodes);
  const EpisodeParams params{trace.n_nodes, c.control_step, c.effective_panic_margin(), c.collaboration};
  ContactCursor cursor(trace.events);
  const auto n_contents = static_cast<std::size_t>(std::floor(trace.duration / c.deadline + 1e-9));
  EpisodeLogs logs{c.log_steps ? &state.steps : nullptr, c.log_deliveries ? &state.deliveries : nullptr};
  for (std::size_t k = 0; k < n_contents; ++k) {
    ContentItem item{first_id + static_cast<int>(k), static_cast<double>(k) * c.deadline,
                     static_cast<double>(k + 1) * c.deadline, state.interested};
    auto result = run_episode(cursor, item, params, *state.policy, state.ledger, state.rng, logs);
    result.phase = phase;
    report.results.push_back(std::move(result));
  }
}

inline std::string config_text(const ExperimentConfig& c) {
  std::ostringstream os;
  write_config(c, os);
  return os.str();
}

inline RunReport run_on_trace(const ExperimentConfig& c, std::uint32_t run, const ContactTrace& trace) {
  const auto started = std::chrono::steady_clock::now();
  RunReport report;
  report.controller = c.controller;
  report.run = run;
  report.seed = derive_seed(c.rng_seed, run);
  report.trace_provenance = trace.provenance;
  report.config_echo = config_text(c);
  RunState state = start_run(c, run, trace.n_nodes);
  run_contents(c, trace, state, report, 1, 0);
  report.moving_average = moving_average(report.results, c.ma_window);
  report.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (c.log_steps || c.log_deliveries || c.dump_tables) report.state = std::make_shared<RunState>(std::move(state));
  return report;
}

/// Runs `n` independent jobs, at most hardware_concurrency at a time, results in index order.
template <typename Job>
auto parallel_runs(std::uint32_t n, Job job) -> std::vector<decltype(job(std::uint32_t{}))> {
  using Result = decltype(job(std::uint32_t{}));
  std::vector<Result> out(n);
  const unsigned workers = std::max(1u, std::min<unsigned>(n, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::uint32_t i = 0; i < n; ++i) out[i] = job(i);
    return out;
  }
  std::atomic<std::uint32_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::uint32_t i = next++; i < n; i = next++) out[i] = job(i);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<RunReport> runs;
  Summary ratio;             // over per-run mean ratios
  Summary last_quarter;      // over per-run last-quarter means
};

/// n_runs independent runs; the trace of run i depends only on (seed, i).
inline ExperimentReport run_experiment(const ExperimentConfig& c, TraceCache* cache = nullptr) {
  ExperimentReport report;
  report.config = c;
  report.runs = parallel_runs(c.n_runs, [&](std::uint32_t run) {
    try {
      const auto trace = run_trace(c, run, cache);
      return run_on_trace(c, run, *trace);
    } catch (const std::exception& e) {
      RunReport failed;
      failed.controller = c.controller;
      failed.run = run;
      failed.seed = derive_seed(c.rng_seed, run);
      failed.error = e.what();
      return failed;
    }
  });
  std::vector<double> means, lasts;
  for (const auto& r : report.runs) {
    if (!r.error.empty()) continue;
    means.push_back(r.mean_ratio());
    lasts.push_back(r.last_quarter_mean());
  }
  report.ratio = summarize(means);
  report.last_quarter = summarize(lasts);
  return report;
}

/// Phase 1 under `a`, then phase 2 under `b`, keeping the controller's internal
/// state (learner tables, Droid parameters, utility ledger, RNG). The
/// controller, hyperparameters and Droid settings come from `a`.
inline RunReport dynamic_switch_run(const ExperimentConfig& a, const ExperimentConfig& b, std::uint32_t run,
                                    TraceCache* cache = nullptr) {
  if (a.controller != b.controller) throw ValidationError("switch requires the same controller in both phases");
  const auto started = std::chrono::steady_clock::now();
  const auto trace_a = run_trace(a, run, cache, kTraceStream);
  const auto trace_b = run_trace(b, run, cache, kSecondTraceStream);
  if (trace_a->n_nodes != trace_b->n_nodes) {
    throw ValidationError("switch requires equal node counts (" + std::to_string(trace_a->n_nodes) + " vs " +
                          std::to_string(trace_b->n_nodes) + ")");
  }
  RunReport report;
  report.controller = a.controller;
  report.run = run;
  report.seed = derive_seed(a.rng_seed, run);
  report.trace_provenance = trace_a->provenance + "|" + trace_b->provenance;
  report.config_echo = config_text(a) + "# switch to\n" + config_text(b);

  RunState state = start_run(a, run, trace_a->n_nodes);
  run_contents(a, *trace_a, state, report, 1, 0);
  report.phase_split = report.results.size();
  ExperimentConfig phase2 = b;
  phase2.hyper = a.hyper;
  phase2.grid = a.grid;
  phase2.droid = a.droid;
  run_contents(phase2, *trace_b, state, report, 2, static_cast<int>(report.phase_split));
  report.moving_average = moving_average(report.results, a.ma_window);
  report.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (a.log_steps || a.log_deliveries || a.dump_tables) report.state = std::make_shared<RunState>(std::move(state));
  return report;
}

// ---------------------------------------------------------------------------
// Droid W sweep

struct SweepPoint {
  std::string scenario;
  Seconds deadline = 0.0;
  Seconds W = 0.0;
  double c = 0.0;
  Summary ratio;
};

inline std::vector<SweepPoint> sweep_droid(const ExperimentConfig& base, const std::vector<Seconds>& windows,
                                           const std::vector<double>& clips, TraceCache* cache = nullptr) {
  std::vector<SweepPoint> points;
  for (double c : clips) {
    for (Seconds w : windows) {
      ExperimentConfig cfg = base;
      cfg.controller = ControllerKind::DR;
      cfg.droid = {w, c};
      const auto rep = run_experiment(cfg, cache);
      points.push_back({base.trace_path.empty() ? base.scenario : base.trace_path, base.deadline, w, c, rep.ratio});
    }
  }
  return points;
}

inline const SweepPoint& best_point(const std::vector<SweepPoint>& points) {
  if (points.empty()) throw ValidationError("empty sweep");
  return *std::max_element(points.begin(), points.end(),
                           [](const SweepPoint& l, const SweepPoint& r) { return l.ratio.mean < r.ratio.mean; });
}

// ---------------------------------------------------------------------------
// CSV output

inline void write_results_csv(std::ostream& out, const std::vector<RunReport>& runs) {
  out << "run,phase,content_id,controller,t_create,deadline,S_c,P_c,I_c,opportunistic,offloading_ratio\n";
  for (const auto& r : runs) {
    for (const auto& c : r.results) {
      out << r.run << ',' << c.phase << ',' << c.content_id << ',' << to_string(r.controller) << ','
          << format_double(c.t_create) << ',' << format_double(c.deadline) << ',' << c.seeds << ',' << c.panic << ','
          << c.interested << ',' << c.opportunistic << ',' << format_double(c.ratio) << '\n';
    }
  }
}

inline void write_summary_csv(std::ostream& out, const std::vector<RunReport>& runs) {
  out << "run,seed,controller,n_contents,mean_ratio,last_quarter_mean,wall_clock_s,trace,error\n";
  std::vector<double> means;
  for (const auto& r : runs) {
    out << r.run << ',' << r.seed << ',' << to_string(r.controller) << ',' << r.results.size() << ','
        << format_double(r.mean_ratio()) << ',' << format_double(r.last_quarter_mean()) << ','
        << format_double(r.wall_clock_s) << ',' << r.trace_provenance << ',' << r.error << '\n';
    if (r.error.empty()) means.push_back(r.mean_ratio());
  }
  const auto s = summarize(means);
  out << "mean,,,," << format_double(s.mean) << ",,,,\n";
  out << "std,,,," << format_double(s.std) << ",,,,\n";
}

inline void write_actions_csv(std::ostream& out, const std::vector<RunReport>& runs, std::size_t window) {
  out << "run,position";
  for (std::size_t a = 0; a < ActionSet::kSize; ++a) out << ",a" << a;
  out << '\n';
  for (const auto& r : runs) {
    const auto freq = action_frequencies(r, window);
    for (std::size_t i = 0; i < freq.size(); ++i) {
      out << r.run << ',' << i;
      for (double f : freq[i]) out << ',' << format_double(f);
      out << '\n';
    }
  }
}

inline void write_curve_csv(std::ostream& out, const std::vector<RunReport>& runs) {
  out << "run,position,phase,moving_average\n";
  for (const auto& r : runs) {
    for (std::size_t i = 0; i < r.moving_average.size(); ++i) {
      out << r.run << ',' << i << ',' << r.results[i].phase << ',' << format_double(r.moving_average[i]) << '\n';
    }
  }
}

inline void write_steps_csv(std::ostream& out, const std::vector<std::pair<int, StepRecord>>& steps) {
  out << "content_id,step_t,x1,x2,x3,action,new_seeds,waiting\n";
  for (const auto& [id, s] : steps) {
    out << id << ',' << format_double(s.t) << ',' << format_double(s.x.x1) << ',' << format_double(s.x.x2) << ','
        << format_double(s.x.x3) << ',' << s.action << ',' << s.new_seeds << ',' << s.waiting << '\n';
  }
}

inline void write_deliveries_csv(std::ostream& out, const std::vector<std::pair<int, DeliveryEvent>>& deliveries) {
  out << "content_id,t,node,origin_seed,last_forwarder,channel\n";
  for (const auto& [id, d] : deliveries) {
    out << id << ',' << format_double(d.t) << ',' << d.node_id << ',' << d.origin_seed << ',';
    if (d.last_forwarder != kNoNode) out << d.last_forwarder;
    out << ',' << to_string(d.channel) << '\n';
  }
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points) {
  out << "scenario,deadline,W,c,mean_offloading_ratio,std\n";
  for (const auto& p : points) {
    out << p.scenario << ',' << format_double(p.deadline) << ',' << format_double(p.W) << ',' << format_double(p.c)
        << ',' << format_double(p.ratio.mean) << ',' << format_double(p.ratio.std) << '\n';
  }
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  body(out);
}

}  // namespace detail

/// Per-run extras kept in RunReport::state: steps_run<k>.csv, deliveries_run<k>.csv
/// and learner snapshots under tables/.
inline void write_run_artifacts(const std::filesystem::path& dir, const ExperimentConfig& c,
                                const std::vector<RunReport>& runs) {
  for (const auto& r : runs) {
    if (!r.state) continue;
    const std::string tag = "run" + std::to_string(r.run);
    if (c.log_steps) {
      detail::write_file(dir / ("steps_" + tag + ".csv"), [&](std::ostream& o) { write_steps_csv(o, r.state->steps); });
    }
    if (c.log_deliveries) {
      detail::write_file(dir / ("deliveries_" + tag + ".csv"),
                         [&](std::ostream& o) { write_deliveries_csv(o, r.state->deliveries); });
    }
    const auto* rl = dynamic_cast<const RlPolicy*>(r.state->policy.get());
    if (c.dump_tables && rl) {
      std::filesystem::create_directories(dir / "tables");
      const auto& t = rl->agent().tables();
      const auto& g = rl->grid();
      detail::write_file(dir / "tables" / (tag + "_V.csv"), [&](std::ostream& o) { write_value_table(o, t, g); });
      detail::write_file(dir / "tables" / (tag + "_p.csv"), [&](std::ostream& o) { write_action_table(o, t.p, t, g); });
      detail::write_file(dir / "tables" / (tag + "_Q.csv"), [&](std::ostream& o) { write_action_table(o, t.Q, t, g); });
    }
  }
}

/// Writes results.csv, summary.csv, actions.csv, curve.csv and config.resolved into `dir`.
inline void write_report(const std::filesystem::path& dir, const ExperimentConfig& c,
                         const std::vector<RunReport>& runs) {
  std::filesystem::create_directories(dir);
  detail::write_file(dir / "results.csv", [&](std::ostream& o) { write_results_csv(o, runs); });
  detail::write_file(dir / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, runs); });
  detail::write_file(dir / "actions.csv", [&](std::ostream& o) { write_actions_csv(o, runs, c.ma_window); });
  detail::write_file(dir / "curve.csv", [&](std::ostream& o) { write_curve_csv(o, runs); });
  detail::write_file(dir / "config.resolved", [&](std::ostream& o) {
    if (!runs.empty() && !runs.front().config_echo.empty()) o << runs.front().config_echo;
    else write_config(c, o);
  });
  write_run_artifacts(dir, c, runs);
}

}  // namespace offload
