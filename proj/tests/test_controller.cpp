#include <gtest/gtest.h>

#include <map>

#include "offload/controller.hpp"

using namespace offload;

namespace {

std::vector<NodeId> ids(NodeId n) {
  std::vector<NodeId> v(n);
  for (NodeId i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

TEST(SeedsFromAction, RoundHalfUp) {
  EXPECT_EQ(seeds_from_action(0.03, 600), 18u);
  EXPECT_EQ(seeds_from_action(0.0, 600), 0u);
  EXPECT_EQ(seeds_from_action(0.0, 0), 0u);
  EXPECT_EQ(seeds_from_action(0.01, 30), 0u);
  EXPECT_EQ(seeds_from_action(0.05, 10), 1u);   // 0.5
  EXPECT_EQ(seeds_from_action(0.049, 10), 0u);  // 0.49
  EXPECT_EQ(seeds_from_action(0.01, 150), 2u);  // 1.5
  EXPECT_EQ(seeds_from_action(0.07, 50), 4u);   // 3.5000000000000004
  EXPECT_EQ(seeds_from_action(0.1, 5), 1u);     // 0.5
  EXPECT_EQ(seeds_from_action(1.0, 7), 7u);
}

TEST(Observe, FreshEpisodeStartsAtOrigin) {
  ControllerEpisode ep(ContentItem{0, 100.0, 200.0, ids(10)}, 10, true, 195.0);
  EXPECT_EQ(ep.observe(100.0), (SystemState{0.0, 0.0, 1.0}));
  EXPECT_EQ(ep.observe(195.0).x3, 0.0);
}

TEST(Observe, AllDeliveredHalfway) {
  ControllerEpisode ep(ContentItem{0, 0.0, 1000.0, ids(600)}, 600, true, 990.0);
  UtilityLedger ledger(600);
  std::vector<NodeId> seeds(60);
  for (NodeId i = 0; i < 60; ++i) seeds[i] = i;
  ep.offload(seeds, 0.0, ledger);
  std::vector<ContactEvent> star;
  for (NodeId i = 60; i < 600; ++i) star.push_back({0, i, 10.0, 11.0});
  for (const auto& a : ep.epidemic().step(star, 10.0)) ep.record_ack(a, ledger);
  EXPECT_EQ(ledger.utility(0), 540u);
  const auto x = ep.observe(495.0);
  EXPECT_DOUBLE_EQ(x.x1, 1.0);
  EXPECT_DOUBLE_EQ(x.x2, 0.1);
  EXPECT_DOUBLE_EQ(x.x3, 0.5);
}

TEST(Observe, PanicTimeMustBeInsideLifetime) {
  EXPECT_THROW(ControllerEpisode(ContentItem{0, 0.0, 10.0, {0}}, 1, true, 0.0), ValidationError);
  EXPECT_THROW(ControllerEpisode(ContentItem{0, 0.0, 10.0, {0}}, 1, true, 11.0), ValidationError);
}

TEST(GetNewSeeds, HighestUtilityFirst) {
  UtilityLedger ledger(3);
  for (int i = 0; i < 5; ++i) ledger.credit(0);
  ledger.credit(1);
  ledger.credit(1);
  Rng rng(1);
  const std::vector<NodeId> waiting{0, 1, 2};
  EXPECT_EQ(get_new_seeds(1, waiting, ledger, rng), std::vector<NodeId>{0});
  EXPECT_EQ(get_new_seeds(2, waiting, ledger, rng), (std::vector<NodeId>{0, 1}));
  EXPECT_TRUE(get_new_seeds(0, waiting, ledger, rng).empty());
  EXPECT_EQ(get_new_seeds(9, waiting, ledger, rng).size(), 3u);
}

TEST(GetNewSeeds, TiesBrokenUniformly) {
  UtilityLedger ledger(10);
  Rng rng(77);
  const auto waiting = ids(10);
  std::vector<int> hits(10, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i)
    for (NodeId id : get_new_seeds(2, waiting, ledger, rng)) ++hits[id];
  double chi2 = 0.0;
  const double expected = draws * 0.2;
  for (int h : hits) {
    EXPECT_NEAR(h / static_cast<double>(draws), 0.2, 0.02);
    chi2 += (h - expected) * (h - expected) / expected;
  }
  EXPECT_LT(chi2, 27.88);  // 9 dof, p = 0.001
}

TEST(RecordAck, CreditsOriginAndForwarder) {
  ControllerEpisode ep(ContentItem{0, 0.0, 100.0, ids(3)}, 3, true, 95.0);
  UtilityLedger ledger(3);
  ep.offload(std::vector<NodeId>{0}, 0.0, ledger);
  EXPECT_EQ(ledger.utility(0), 0u);  // cellular ACK earns nothing
  ep.record_ack({1, 10.0, 0, 0, Channel::opportunistic}, ledger);
  EXPECT_EQ(ledger.utility(0), 1u);
  ep.record_ack({2, 20.0, 0, 1, Channel::opportunistic}, ledger);
  EXPECT_EQ(ledger.utility(0), 2u);
  EXPECT_EQ(ledger.utility(1), 1u);
  EXPECT_EQ(ep.waiting_count(), 0u);
  EXPECT_THROW(ep.record_ack({2, 21.0, 0, 1, Channel::opportunistic}, ledger), ContractViolation);
}

TEST(RecordAck, ChainOfThreeSeededByOneNode) {
  // A=0 seeds, then 0->1, 1->2, 2->3.
  ControllerEpisode ep(ContentItem{0, 0.0, 100.0, ids(4)}, 4, true, 95.0);
  UtilityLedger ledger(4);
  ep.offload(std::vector<NodeId>{0}, 0.0, ledger);
  const std::vector<ContactEvent> contacts{{0, 1, 1.0, 2.0}, {1, 2, 2.0, 3.0}, {2, 3, 3.0, 4.0}};
  ContactCursor cursor(contacts);
  for (int k = 0; k < 5; ++k) {
    for (const auto& a : ep.epidemic().step(cursor.window(k, k + 1), k)) ep.record_ack(a, ledger);
  }
  EXPECT_EQ(ledger.utility(0), 3u);
  EXPECT_EQ(ledger.utility(1), 1u);
  EXPECT_EQ(ledger.utility(2), 1u);
  EXPECT_EQ(ledger.utility(3), 0u);
  EXPECT_EQ(ep.opportunistic_deliveries(), 3u);
}

TEST(Offload, RejectsNodesNotWaiting) {
  ControllerEpisode ep(ContentItem{0, 0.0, 100.0, {0, 1}}, 3, true, 95.0);
  UtilityLedger ledger(3);
  EXPECT_THROW(ep.offload(std::vector<NodeId>{2}, 0.0, ledger), ContractViolation);
  ep.offload(std::vector<NodeId>{1}, 0.0, ledger);
  EXPECT_THROW(ep.offload(std::vector<NodeId>{1}, 5.0, ledger), ContractViolation);
}

TEST(Panic, NothingWaiting) {
  ControllerEpisode ep(ContentItem{0, 0.0, 100.0, ids(2)}, 2, true, 95.0);
  UtilityLedger ledger(2);
  ep.offload(ids(2), 0.0, ledger);
  EXPECT_EQ(ep.panic(95.0, ledger), 0u);
}

TEST(Panic, WorstCaseEveryoneOverCellular) {
  ControllerEpisode ep(ContentItem{0, 0.0, 1000.0, ids(600)}, 600, true, 995.0);
  UtilityLedger ledger(600);
  std::vector<DeliveryEvent> log;
  EXPECT_EQ(ep.panic(995.0, ledger, &log), 600u);
  EXPECT_EQ(log.size(), 600u);
  EXPECT_EQ(log.front().channel, Channel::panic);
  EXPECT_EQ(ep.epidemic().delivered_fraction(), 1.0);
  EXPECT_TRUE(ep.closed());
  for (auto u : ledger.counts()) EXPECT_EQ(u, 0u);
}
