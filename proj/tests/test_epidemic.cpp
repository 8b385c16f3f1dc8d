#include <gtest/gtest.h>

#include "offload/epidemic.hpp"
#include "oracles.hpp"

using namespace offload;

namespace {

ContentItem content(std::vector<NodeId> interested, Seconds deadline = 100.0) {
  return {1, 0.0, deadline, std::move(interested)};
}

std::vector<NodeId> all_nodes(NodeId n) {
  std::vector<NodeId> v(n);
  for (NodeId i = 0; i < n; ++i) v[i] = i;
  return v;
}

// Drives the epidemic in unit rounds [k, k+1) over the whole trace.
std::vector<DeliveryEvent> run_rounds(Epidemic& ep, const std::vector<ContactEvent>& events, long rounds) {
  ContactCursor cursor(events);
  std::vector<DeliveryEvent> acks;
  for (long k = 0; k < rounds; ++k) {
    const auto got = ep.step(cursor.window(static_cast<double>(k), static_cast<double>(k + 1)), static_cast<double>(k));
    acks.insert(acks.end(), got.begin(), got.end());
  }
  return acks;
}

}  // namespace

TEST(Epidemic, InjectEmitsCellularAck) {
  Epidemic ep(content(all_nodes(10)), 10);
  const auto ack = ep.inject(7, 0.0);
  EXPECT_EQ(ack, (DeliveryEvent{7, 0.0, 7, kNoNode, Channel::cellular}));
  EXPECT_TRUE(ep.node(7).has_content);
  EXPECT_EQ(ep.node(7).origin_seed, 7u);
  EXPECT_EQ(ep.node(7).received_from, kNoNode);
  EXPECT_THROW(ep.inject(7, 1.0), ContractViolation);
}

TEST(Epidemic, InvalidContentRejected) {
  EXPECT_THROW(Epidemic(ContentItem{1, 5.0, 5.0, {0}}, 3), ValidationError);
  EXPECT_THROW(Epidemic(ContentItem{1, 0.0, 5.0, {}}, 3), ValidationError);
  EXPECT_THROW(Epidemic(ContentItem{1, 0.0, 5.0, {3}}, 3), ValidationError);
}

TEST(Epidemic, HolderForwardsToInterestedPeer) {
  Epidemic ep(content({0, 1}), 2);
  ep.inject(0, 0.0);
  const std::vector<ContactEvent> active{{0, 1, 3.0, 8.0}};
  const auto acks = ep.step(active, 5.0);
  ASSERT_EQ(acks.size(), 1u);
  EXPECT_EQ(acks[0], (DeliveryEvent{1, 5.0, 0, 0, Channel::opportunistic}));
}

TEST(Epidemic, ContactBeforeInfectionCarriesNothing) {
  // A=0, B=1, C=2. B-C meets at 5 s, A-B at 10 s.
  Epidemic ep(content(all_nodes(3)), 3);
  ep.inject(0, 0.0);
  run_rounds(ep, {{1, 2, 5.0, 6.0}, {0, 1, 10.0, 11.0}}, 30);
  EXPECT_TRUE(ep.node(1).has_content);
  EXPECT_FALSE(ep.node(2).has_content);
}

TEST(Epidemic, ChainCarriesOriginAndLastForwarder) {
  Epidemic ep(content(all_nodes(3)), 3);
  ep.inject(0, 0.0);
  const auto acks = run_rounds(ep, {{0, 1, 10.0, 11.0}, {1, 2, 20.0, 21.0}}, 30);
  ASSERT_EQ(acks.size(), 2u);
  EXPECT_EQ(acks[0], (DeliveryEvent{1, 10.0, 0, 0, Channel::opportunistic}));
  EXPECT_EQ(acks[1], (DeliveryEvent{2, 20.0, 0, 1, Channel::opportunistic}));
}

TEST(Epidemic, NewHoldersDoNotForwardInTheSameRound) {
  Epidemic ep(content(all_nodes(3)), 3);
  ep.inject(0, 0.0);
  const std::vector<ContactEvent> active{{0, 1, 0.0, 10.0}, {1, 2, 0.0, 10.0}};
  EXPECT_EQ(ep.step(active, 0.0).size(), 1u);
  EXPECT_FALSE(ep.node(2).has_content);
  EXPECT_EQ(ep.step(active, 5.0).size(), 1u);
  EXPECT_TRUE(ep.node(2).has_content);
}

TEST(Epidemic, DeliveryTimeIsContactStartWithinTheRound) {
  Epidemic ep(content({0, 1}), 2);
  ep.inject(0, 0.0);
  const std::vector<ContactEvent> active{{0, 1, 7.0, 9.0}};
  EXPECT_EQ(ep.step(active, 5.0).at(0).t, 7.0);
}

TEST(Epidemic, NonCollaboratorsNeverHoldTheContent) {
  // 0 interested seed, 1 non-interested relay, 2 interested.
  Epidemic ep(content({0, 2}), 3, false);
  ep.inject(0, 0.0);
  run_rounds(ep, {{0, 1, 1.0, 2.0}, {1, 2, 3.0, 4.0}}, 10);
  EXPECT_FALSE(ep.node(1).has_content);
  EXPECT_FALSE(ep.node(2).has_content);
}

TEST(Epidemic, CollaboratorsRelayWithoutAcking) {
  Epidemic ep(content({0, 2}), 3, true);
  ep.inject(0, 0.0);
  const auto acks = run_rounds(ep, {{0, 1, 1.0, 2.0}, {1, 2, 3.0, 4.0}}, 10);
  EXPECT_TRUE(ep.node(1).has_content);
  ASSERT_EQ(acks.size(), 1u);
  EXPECT_EQ(acks[0], (DeliveryEvent{2, 3.0, 0, 1, Channel::opportunistic}));
}

TEST(Epidemic, DeliveredFraction) {
  Epidemic fresh(content(all_nodes(4)), 4);
  EXPECT_EQ(fresh.delivered_fraction(), 0.0);
  for (NodeId i = 0; i < 4; ++i) fresh.inject(i, 0.0);
  EXPECT_EQ(fresh.delivered_fraction(), 1.0);

  Epidemic big(content(all_nodes(600)), 600);
  for (NodeId i = 0; i < 90; ++i) big.inject(i, 0.0);
  EXPECT_DOUBLE_EQ(big.delivered_fraction(), 0.15);
  EXPECT_EQ(big.waiting().size(), 510u);
}

TEST(ContactCursor, YieldsOverlappingContactsOnly) {
  const std::vector<ContactEvent> ev{{0, 1, 0.0, 5.0}, {1, 2, 4.0, 12.0}, {0, 2, 10.0, 11.0}};
  ContactCursor c(ev);
  EXPECT_EQ(c.window(0.0, 5.0).size(), 2u);
  EXPECT_EQ(c.window(5.0, 10.0).size(), 1u);  // [0,5) has ended
  EXPECT_EQ(c.window(10.0, 15.0).size(), 2u);
  EXPECT_EQ(c.window(15.0, 20.0).size(), 0u);
}

TEST(Epidemic, MatchesTimeRespectingPathOracle) {
  Rng rng(2024);
  for (int rep = 0; rep < 300; ++rep) {
    const NodeId n = 2 + static_cast<NodeId>(rng() % 9);
    const std::size_t m = rng() % 51;
    const long horizon = 40;
    std::vector<ContactEvent> ev;
    for (std::size_t i = 0; i < m; ++i) {
      NodeId a = static_cast<NodeId>(rng() % n), b = static_cast<NodeId>(rng() % n);
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      const long ts = static_cast<long>(rng() % horizon);
      const long te = ts + 1 + static_cast<long>(rng() % 4);
      ev.push_back({a, b, static_cast<double>(ts), static_cast<double>(te)});
    }
    std::sort(ev.begin(), ev.end(), contact_before);

    std::vector<NodeId> interested;
    for (NodeId i = 0; i < n; ++i)
      if (rng() % 3 != 0) interested.push_back(i);
    if (interested.empty()) interested.push_back(0);
    const bool collab = rng() % 2;
    std::vector<NodeId> seeds{interested[rng() % interested.size()]};
    std::vector<bool> eligible(n, collab);
    for (NodeId i : interested) eligible[i] = true;

    Epidemic ep(ContentItem{0, 0.0, 1000.0, interested}, n, collab);
    for (NodeId s : seeds) ep.inject(s, 0.0);
    run_rounds(ep, ev, horizon + 5);
    const auto want = oracle::earliest_rounds(n, ev, seeds, eligible, horizon + 5);
    for (NodeId v = 0; v < n; ++v) {
      ASSERT_EQ(ep.node(v).has_content, want[v] != -2) << "rep " << rep << " node " << v;
      if (want[v] >= 0) {
        ASSERT_EQ(ep.node(v).t_received, static_cast<double>(want[v])) << "rep " << rep;
      }
    }
  }
}
