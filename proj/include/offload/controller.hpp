#pragma once

// The central dissemination controller: state observation, seed selection by
// learned node utility, ACK bookkeeping and the panic-zone fallback.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <span>
#include <vector>

#include "offload/common.hpp"
#include "offload/epidemic.hpp"
#include "offload/state.hpp"

namespace offload {

/// s = round-half-up(fraction * waiting), clamped to [0, waiting].
inline std::size_t seeds_from_action(double action_fraction, std::size_t waiting_count) {
  // 1e-9 absorbs products such as 0.05 * 10 landing a hair under the .5 boundary.
  const double raw = std::floor(action_fraction * static_cast<double>(waiting_count) + 0.5 + 1e-9);
  if (raw <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(raw), waiting_count);
}

/// Per-node infectiveness counters. Lives for a whole run, across contents.
class UtilityLedger {
 public:
  explicit UtilityLedger(std::uint32_t n_nodes = 0) : counts_(n_nodes, 0) {}

  std::uint64_t utility(NodeId id) const { return counts_.at(id); }
  void credit(NodeId id) { ++counts_.at(id); }
  std::size_t size() const { return counts_.size(); }
  std::span<const std::uint64_t> counts() const { return counts_; }

 private:
  std::vector<std::uint64_t> counts_;
};

/// The `s` waiting nodes with the highest utility, ties broken uniformly at random.
inline std::vector<NodeId> get_new_seeds(std::size_t s, std::span<const NodeId> waiting, const UtilityLedger& ledger,
                                         Rng& rng) {
  if (s > waiting.size()) {
    std::clog << "warning: requested " << s << " seeds but only " << waiting.size() << " nodes wait\n";
    s = waiting.size();
  }
  if (s == 0) return {};
  std::vector<NodeId> ranked(waiting.begin(), waiting.end());
  std::shuffle(ranked.begin(), ranked.end(), rng);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](NodeId a, NodeId b) { return ledger.utility(a) > ledger.utility(b); });
  ranked.resize(s);
  return ranked;
}

/// Controller-side view of one content: who has been seeded, who still waits,
/// and when the panic zone starts.
class ControllerEpisode {
 public:
  ControllerEpisode(const ContentItem& content, std::uint32_t n_nodes, bool collaborative, Seconds panic_time)
      : epidemic_(content, n_nodes, collaborative), panic_time_(panic_time), waiting_flag_(n_nodes, 0) {
    if (!(panic_time > content.t_create) || panic_time > content.deadline) {
      throw ValidationError("panic time must fall in (t_create, deadline]");
    }
    for (NodeId id : content.interested) waiting_flag_[id] = 1;
    waiting_count_ = content.interested.size();
  }

  Epidemic& epidemic() { return epidemic_; }
  const Epidemic& epidemic() const { return epidemic_; }
  const ContentItem& content() const { return epidemic_.content(); }
  Seconds panic_time() const { return panic_time_; }
  std::span<const NodeId> active_seeds() const { return seeds_; }
  std::size_t waiting_count() const { return waiting_count_; }
  bool is_waiting(NodeId id) const { return id < waiting_flag_.size() && waiting_flag_[id]; }
  bool closed() const { return closed_; }
  std::size_t opportunistic_deliveries() const { return opportunistic_; }
  std::size_t panic_deliveries() const { return panic_; }

  std::vector<NodeId> waiting() const {
    std::vector<NodeId> out;
    out.reserve(waiting_count_);
    for (NodeId id : content().interested) {
      if (waiting_flag_[id]) out.push_back(id);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  SystemState observe(Seconds t) const {
    const double n = static_cast<double>(content().interested.size());
    const double span = panic_time_ - content().t_create;
    const double left = std::clamp((panic_time_ - t) / span, 0.0, 1.0);
    return {epidemic_.delivered_fraction(), static_cast<double>(seeds_.size()) / n, left};
  }

  /// Cellular transmission to each new seed, with the resulting ACKs applied.
  std::vector<DeliveryEvent> offload(std::span<const NodeId> new_seeds, Seconds t, UtilityLedger& ledger) {
    std::vector<DeliveryEvent> acks;
    acks.reserve(new_seeds.size());
    for (NodeId id : new_seeds) {
      if (!is_waiting(id)) throw ContractViolation("seed " + std::to_string(id) + " is not waiting for the content");
      acks.push_back(epidemic_.inject(id, t));
      seeds_.push_back(id);
      record_ack(acks.back(), ledger);
    }
    return acks;
  }

  /// Removes the acknowledging node from the waiting set and credits the
  /// origin seed and the last forwarder (once each, if distinct).
  void record_ack(const DeliveryEvent& ack, UtilityLedger& ledger) {
    if (!is_waiting(ack.node_id)) {
      throw ContractViolation("ACK from node " + std::to_string(ack.node_id) + " which is not waiting for content " +
                              std::to_string(content().content_id));
    }
    waiting_flag_[ack.node_id] = 0;
    --waiting_count_;
    if (ack.channel == Channel::opportunistic) ++opportunistic_;
    if (ack.last_forwarder == kNoNode) return;
    ledger.credit(ack.origin_seed);
    if (ack.last_forwarder != ack.origin_seed) ledger.credit(ack.last_forwarder);
  }

  /// Pushes the content over cellular to every node still waiting and closes
  /// the episode. Returns the number of panic deliveries.
  std::size_t panic(Seconds t, UtilityLedger& ledger, std::vector<DeliveryEvent>* log = nullptr) {
    const auto remaining = waiting();
    for (NodeId id : remaining) {
      const auto ack = epidemic_.inject(id, t, Channel::panic);
      record_ack(ack, ledger);
      if (log) log->push_back(ack);
    }
    panic_ = remaining.size();
    closed_ = true;
    return panic_;
  }

 private:
  Epidemic epidemic_;
  Seconds panic_time_;
  std::vector<char> waiting_flag_;
  std::size_t waiting_count_ = 0;
  std::vector<NodeId> seeds_;
  std::size_t opportunistic_ = 0;
  std::size_t panic_ = 0;
  bool closed_ = false;
};

}  // namespace offload
