#pragma once

// Tabular reinforcement learning: state discretization, the offloading reward,
// an Actor-Critic learner (TD critic over V, Gibbs-softmax actor over
// preferences p) and Q-learning with epsilon-greedy or softmax exploration.
//
// V estimates the expected discounted return E[sum_t gamma^t r_t] of the
// current policy; Q the same quantity conditioned on the first action.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "offload/common.hpp"
#include "offload/state.hpp"

namespace offload {

/// Re-injection sizes as fractions of the waiting nodes: 0%, 1%, ..., 10%.
class ActionSet {
 public:
  static constexpr std::size_t kSize = 11;

  static constexpr double fraction(std::size_t index) { return static_cast<double>(index) / 100.0; }

  static std::array<double, kSize> fractions() {
    std::array<double, kSize> out{};
    for (std::size_t i = 0; i < kSize; ++i) out[i] = fraction(i);
    return out;
  }

  /// Index whose fraction is closest to `f` (used to log baseline decisions).
  static std::size_t nearest(double f) {
    const long idx = std::lround(f * 100.0);
    return static_cast<std::size_t>(std::clamp(idx, 0L, static_cast<long>(kSize) - 1));
  }
};

struct StateGrid {
  std::size_t b1 = 5, b2 = 5, b3 = 5;

  std::size_t cell_count() const { return b1 * b2 * b3; }

  std::array<std::size_t, 3> unflatten(std::size_t cell) const {
    return {cell / (b2 * b3), (cell / b3) % b2, cell % b3};
  }
};

inline std::size_t bin_of(double x, std::size_t bins) {
  const double scaled = std::floor(x * static_cast<double>(bins));
  if (scaled <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(scaled), bins - 1);
}

/// Half-open uniform bins [k/b, (k+1)/b); x = 1 lands in the last bin.
inline std::array<std::size_t, 3> discretize_components(const SystemState& x, const StateGrid& grid) {
  return {bin_of(x.x1, grid.b1), bin_of(x.x2, grid.b2), bin_of(x.x3, grid.b3)};
}

inline std::size_t discretize(const SystemState& x, const StateGrid& grid) {
  const auto k = discretize_components(x, grid);
  return (k[0] * grid.b2 + k[1]) * grid.b3 + k[2];
}

struct Hyperparams {
  double alpha = 0.1;    // value learning rate
  double beta = 0.1;     // preference learning rate
  double gamma = 0.99;   // discount
  double epsilon = 0.1;  // exploration probability
  double omega = 0.5;    // reward weight

  void validate() const {
    auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha must be in (0,1]");
    if (!(beta > 0.0 && beta <= 1.0)) throw ValidationError("beta must be in (0,1]");
    if (!in(gamma, 0.0, 1.0)) throw ValidationError("gamma must be in [0,1]");
    if (!in(epsilon, 0.0, 1.0)) throw ValidationError("epsilon must be in [0,1]");
    if (!in(omega, 0.0, 1.0)) throw ValidationError("omega must be in [0,1]");
  }
};

// ---------------------------------------------------------------------------
// Update rules

/// r = -omega (1 - (x1 - x2)) - (1 - omega)(1 - x3), always in [-1, 0].
inline double reward(const SystemState& x, double omega) {
  return -omega * (1.0 - (x.x1 - x.x2)) - (1.0 - omega) * (1.0 - x.x3);
}

inline double td_delta(double r, double v_next, double v_prev, double gamma) { return r + gamma * v_next - v_prev; }

struct LearnerTables {
  std::size_t n_cells = 0;
  std::size_t n_actions = ActionSet::kSize;
  std::vector<double> V;  // per cell
  std::vector<double> p;  // per (cell, action), actor preferences
  std::vector<double> Q;  // per (cell, action)

  LearnerTables() = default;
  LearnerTables(std::size_t cells, std::size_t actions)
      : n_cells(cells), n_actions(actions), V(cells, 0.0), p(cells * actions, 0.0), Q(cells * actions, 0.0) {}

  std::span<double> p_row(std::size_t cell) { return {p.data() + cell * n_actions, n_actions}; }
  std::span<const double> p_row(std::size_t cell) const { return {p.data() + cell * n_actions, n_actions}; }
  std::span<double> q_row(std::size_t cell) { return {Q.data() + cell * n_actions, n_actions}; }
  std::span<const double> q_row(std::size_t cell) const { return {Q.data() + cell * n_actions, n_actions}; }
};

/// Critic and actor step for the transition that left `cell` via `action`.
inline void ac_update(LearnerTables& t, std::size_t cell, std::size_t action, double delta, double alpha,
                      double beta) {
  t.V[cell] += alpha * delta;
  t.p[cell * t.n_actions + action] += beta * delta;
}

inline void q_update(LearnerTables& t, std::size_t cell_prev, std::size_t action_prev, double r,
                     std::size_t cell_next, double alpha, double gamma) {
  const auto next = t.q_row(cell_next);
  const double best_next = *std::max_element(next.begin(), next.end());
  double& q = t.Q[cell_prev * t.n_actions + action_prev];
  q += alpha * (r + gamma * best_next - q);
}

// ---------------------------------------------------------------------------
// Action selection

/// Gibbs distribution e^{w_a} / sum_b e^{w_b}, shifted by max(w) for stability.
inline std::vector<double> softmax_probabilities(std::span<const double> weights) {
  std::vector<double> probs(weights.size());
  const double top = *std::max_element(weights.begin(), weights.end());
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    probs[i] = std::exp(weights[i] - top);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  return probs;
}

inline std::size_t sample_discrete(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // u landed in the rounding slack above the last partial sum.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.size() - 1;
}

/// Actor policy: sample from the softmax over a cell's preferences.
inline std::size_t softmax_select(std::span<const double> preferences, Rng& rng) {
  const auto probs = softmax_probabilities(preferences);
  return sample_discrete(probs, rng);
}

/// Softmax over a Q row.
inline std::size_t softmax_q_select(std::span<const double> q_row, Rng& rng) { return softmax_select(q_row, rng); }

/// Uniform choice among the maximal entries.
inline std::size_t argmax_random_tie(std::span<const double> values, Rng& rng) {
  const double top = *std::max_element(values.begin(), values.end());
  std::vector<std::size_t> tied;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == top) tied.push_back(i);
  }
  if (tied.size() == 1) return tied.front();
  return tied[std::uniform_int_distribution<std::size_t>(0, tied.size() - 1)(rng)];
}

/// With probability 1 - epsilon the greedy action; otherwise a uniform draw
/// among the remaining actions (the greedy one is excluded).
inline std::size_t eps_greedy_select(std::span<const double> q_row, double epsilon, Rng& rng) {
  const bool explore = uniform01(rng) < epsilon;
  const std::size_t greedy = argmax_random_tie(q_row, rng);
  if (!explore || q_row.size() < 2) return greedy;
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, q_row.size() - 2)(rng);
  if (pick >= greedy) ++pick;
  return pick;
}

// ---------------------------------------------------------------------------
// Agents

enum class LearnerKind { actor_critic, q_eps_greedy, q_softmax };

inline std::string_view to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::actor_critic: return "AC";
    case LearnerKind::q_eps_greedy: return "Qe";
    case LearnerKind::q_softmax: return "Qs";
  }
  return "?";
}

/// A tabular learner operating on discrete cells. Tables persist across calls
/// to begin(), so knowledge carries from one content to the next.
class RlAgent {
 public:
  RlAgent(LearnerKind kind, std::size_t n_cells, std::size_t n_actions, Hyperparams hp)
      : kind_(kind), hp_(hp), tables_(n_cells, n_actions) {
    hp_.validate();
  }

  LearnerKind kind() const { return kind_; }
  const Hyperparams& hyperparams() const { return hp_; }
  const LearnerTables& tables() const { return tables_; }
  LearnerTables& tables() { return tables_; }

  std::size_t draw(std::size_t cell, Rng& rng) const {
    switch (kind_) {
      case LearnerKind::actor_critic: return softmax_select(tables_.p_row(cell), rng);
      case LearnerKind::q_eps_greedy: return eps_greedy_select(tables_.q_row(cell), hp_.epsilon, rng);
      case LearnerKind::q_softmax: return softmax_q_select(tables_.q_row(cell), rng);
    }
    return 0;
  }

  /// First decision of an episode: no transition to learn from.
  std::size_t begin(std::size_t cell, Rng& rng) {
    prev_cell_ = cell;
    prev_action_ = draw(cell, rng);
    return prev_action_;
  }

  /// Learn from (prev cell, prev action) -> (r, cell), then draw the next action in `cell`.
  std::size_t step(double r, std::size_t cell, Rng& rng) {
    learn(r, cell);
    prev_cell_ = cell;
    prev_action_ = draw(cell, rng);
    return prev_action_;
  }

  void learn(double r, std::size_t cell) {
    if (kind_ == LearnerKind::actor_critic) {
      const double delta = td_delta(r, tables_.V[cell], tables_.V[prev_cell_], hp_.gamma);
      ac_update(tables_, prev_cell_, prev_action_, delta, hp_.alpha, hp_.beta);
    } else {
      q_update(tables_, prev_cell_, prev_action_, r, cell, hp_.alpha, hp_.gamma);
    }
  }

  /// Deterministic best action: preference argmax for AC, Q argmax otherwise (lowest index on ties).
  std::size_t greedy(std::size_t cell) const {
    const auto row = kind_ == LearnerKind::actor_critic ? tables_.p_row(cell) : tables_.q_row(cell);
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }

 private:
  LearnerKind kind_;
  Hyperparams hp_;
  LearnerTables tables_;
  std::size_t prev_cell_ = 0;
  std::size_t prev_action_ = 0;
};

// Snapshot dumps, one row per non-zero entry (untouched entries are 0).

inline void write_value_table(std::ostream& out, const LearnerTables& t, const StateGrid& grid) {
  out << "cell_i,cell_j,cell_k,value\n";
  out.precision(17);
  for (std::size_t c = 0; c < t.n_cells; ++c) {
    if (t.V[c] == 0.0) continue;
    const auto k = grid.unflatten(c);
    out << k[0] << ',' << k[1] << ',' << k[2] << ',' << t.V[c] << '\n';
  }
}

inline void write_action_table(std::ostream& out, const std::vector<double>& table, const LearnerTables& t,
                               const StateGrid& grid) {
  out << "cell_i,cell_j,cell_k,action,value\n";
  out.precision(17);
  for (std::size_t c = 0; c < t.n_cells; ++c) {
    for (std::size_t a = 0; a < t.n_actions; ++a) {
      const double v = table[c * t.n_actions + a];
      if (v == 0.0) continue;
      const auto k = grid.unflatten(c);
      out << k[0] << ',' << k[1] << ',' << k[2] << ',' << a << ',' << v << '\n';
    }
  }
}

}  // namespace offload
