#pragma once

// Epidemic content dissemination over a contact trace, one content at a time.

#include <algorithm>
#include <span>
#include <string_view>
#include <vector>

#include "offload/common.hpp"
#include "offload/mobility.hpp"

namespace offload {

struct ContentItem {
  int content_id = 0;
  Seconds t_create = 0.0;
  Seconds deadline = 0.0;  // absolute
  std::vector<NodeId> interested;
};

struct NodeDiffusionState {
  NodeId node_id = 0;
  bool has_content = false;
  bool is_interested = false;
  bool collaborates = false;
  NodeId origin_seed = kNoNode;
  NodeId received_from = kNoNode;
  Seconds t_received = -1.0;
};

enum class Channel { cellular, opportunistic, panic };

inline std::string_view to_string(Channel c) {
  switch (c) {
    case Channel::cellular: return "cellular";
    case Channel::opportunistic: return "opportunistic";
    case Channel::panic: return "panic";
  }
  return "?";
}

/// The acknowledgement a node sends over the cellular link once it holds the content.
struct DeliveryEvent {
  NodeId node_id = 0;
  Seconds t = 0.0;
  NodeId origin_seed = kNoNode;
  NodeId last_forwarder = kNoNode;  // kNoNode iff delivered over the cellular channel
  Channel channel = Channel::cellular;

  friend bool operator==(const DeliveryEvent&, const DeliveryEvent&) = default;
};

/// Dissemination state of a single content. Owned by one simulation run.
class Epidemic {
 public:
  /// `collaborative` controls whether nodes outside the interested set relay the content.
  Epidemic(const ContentItem& content, std::uint32_t n_nodes, bool collaborative = true)
      : content_(content), nodes_(n_nodes) {
    if (!(content.t_create < content.deadline)) throw ValidationError("content must be created before its deadline");
    if (content.interested.empty()) throw ValidationError("content needs at least one interested node");
    for (NodeId id = 0; id < n_nodes; ++id) {
      nodes_[id].node_id = id;
      nodes_[id].collaborates = collaborative;
    }
    for (NodeId id : content.interested) {
      if (id >= n_nodes) throw ValidationError("interested node id out of range");
      if (nodes_[id].is_interested) throw ValidationError("duplicate interested node id");
      nodes_[id].is_interested = true;
      nodes_[id].collaborates = true;
    }
  }

  const ContentItem& content() const { return content_; }
  const NodeDiffusionState& node(NodeId id) const { return nodes_.at(id); }
  std::span<const NodeDiffusionState> nodes() const { return nodes_; }
  std::size_t interested_count() const { return content_.interested.size(); }
  std::size_t interested_holders() const { return interested_holders_; }

  /// Cellular delivery to `id`. The node becomes its own origin seed.
  DeliveryEvent inject(NodeId id, Seconds t, Channel channel = Channel::cellular) {
    NodeDiffusionState& n = nodes_.at(id);
    if (n.has_content) {
      throw ContractViolation("node " + std::to_string(id) + " already holds content " +
                              std::to_string(content_.content_id));
    }
    receive(n, t, id, kNoNode);
    return {id, t, id, kNoNode, channel};
  }

  /// One synchronous epidemic round over the contacts active during the step
  /// starting at `t`. Only nodes holding the content at the start of the round
  /// forward; ACKs are returned for interested receivers only.
  std::vector<DeliveryEvent> step(std::span<const ContactEvent> active, Seconds t) {
    holding_at_start_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) holding_at_start_[i] = nodes_[i].has_content;

    std::vector<DeliveryEvent> acks;
    for (const ContactEvent& e : active) {
      const bool a_holds = holding_at_start_[e.node_a];
      const bool b_holds = holding_at_start_[e.node_b];
      if (a_holds == b_holds) continue;
      const NodeId sender = a_holds ? e.node_a : e.node_b;
      NodeDiffusionState& receiver = nodes_[a_holds ? e.node_b : e.node_a];
      if (receiver.has_content || !receiver.collaborates) continue;

      const Seconds when = std::max(t, e.t_start);
      receive(receiver, when, nodes_[sender].origin_seed, sender);
      if (receiver.is_interested) {
        acks.push_back({receiver.node_id, when, receiver.origin_seed, sender, Channel::opportunistic});
      }
    }
    return acks;
  }

  /// I(t): fraction of interested nodes holding the content, however they got it.
  double delivered_fraction() const {
    return static_cast<double>(interested_holders_) / static_cast<double>(content_.interested.size());
  }

  /// Interested nodes still without the content, in ascending id order.
  std::vector<NodeId> waiting() const {
    std::vector<NodeId> out;
    for (NodeId id : content_.interested) {
      if (!nodes_[id].has_content) out.push_back(id);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  void receive(NodeDiffusionState& n, Seconds t, NodeId origin, NodeId from) {
    n.has_content = true;
    n.origin_seed = origin;
    n.received_from = from;
    n.t_received = t;
    if (n.is_interested) ++interested_holders_;
  }

  ContentItem content_;
  std::vector<NodeDiffusionState> nodes_;
  std::vector<char> holding_at_start_;
  std::size_t interested_holders_ = 0;
};

/// Walks a time-sorted trace forward and yields the contacts overlapping each
/// successive window [t0, t1). Windows must be queried in non-decreasing order.
class ContactCursor {
 public:
  explicit ContactCursor(std::span<const ContactEvent> events) : events_(events) {}

  std::span<const ContactEvent> window(Seconds t0, Seconds t1) {
    std::erase_if(active_, [&](const ContactEvent& e) { return e.t_end <= t0; });
    while (next_ < events_.size() && events_[next_].t_start < t1) {
      if (events_[next_].t_end > t0) active_.push_back(events_[next_]);
      ++next_;
    }
    return active_;
  }

 private:
  std::span<const ContactEvent> events_;
  std::size_t next_ = 0;
  std::vector<ContactEvent> active_;
};

}  // namespace offload
