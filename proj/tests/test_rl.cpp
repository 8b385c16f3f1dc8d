#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "offload/rl.hpp"
#include "oracles.hpp"

using namespace offload;

namespace {

std::vector<double> frequencies(const std::function<std::size_t(Rng&)>& pick, std::size_t n, int draws,
                                std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> f(n, 0.0);
  for (int i = 0; i < draws; ++i) f[pick(rng)] += 1.0;
  for (double& v : f) v /= draws;
  return f;
}

// Runs `agent` on the toy MDP with a restart from a random state every 20 transitions.
void train_on(const oracle::Mdp& mdp, RlAgent& agent, int transitions, std::uint64_t seed) {
  Rng rng(seed);
  std::size_t s = 0, a = 0;
  for (int i = 0; i < transitions; ++i) {
    if (i % 20 == 0) {
      s = rng() % mdp.n_states;
      a = agent.begin(s, rng);
    }
    const std::size_t s2 = mdp.next[s][a];
    a = agent.step(mdp.reward[s][a], s2, rng);
    s = s2;
  }
}

}  // namespace

TEST(Reward, Substitutions) {
  for (double w : {0.0, 0.3, 0.5, 1.0}) {
    EXPECT_NEAR(reward({0, 0, 1}, w), -w, 1e-12);
    EXPECT_NEAR(reward({1, 0, 0}, w), -(1 - w), 1e-12);
  }
  EXPECT_NEAR(reward({0.6, 0.1, 0.5}, 0.5), -0.5, 1e-12);
  EXPECT_EQ(reward({1, 0, 1}, 0.5), 0.0);
}

TEST(Reward, StaysInUnitBand) {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double x1 = uniform01(rng), x2 = x1 * uniform01(rng), x3 = uniform01(rng), w = uniform01(rng);
    const double r = reward({x1, x2, x3}, w);
    ASSERT_LE(r, 0.0);
    ASSERT_GE(r, -1.0);
  }
}

TEST(TdDelta, Substitutions) {
  EXPECT_NEAR(td_delta(-0.25, -1.0, -2.0, 0.9), 0.85, 1e-12);
  EXPECT_NEAR(td_delta(0.0, 3.7, 3.7, 1.0), 0.0, 1e-12);
  EXPECT_NEAR(td_delta(-1.0, 0.0, 0.0, 0.9), -1.0, 1e-12);
}

TEST(AcUpdate, TouchesOneValueAndOnePreference) {
  LearnerTables t(4, 11);
  t.V[2] = -2.0;
  ac_update(t, 2, 5, 0.85, 0.1, 0.1);
  EXPECT_NEAR(t.V[2], -1.915, 1e-12);
  EXPECT_NEAR(t.p[2 * 11 + 5], 0.085, 1e-12);
  int changed = 0;
  for (std::size_t i = 0; i < t.p.size(); ++i) changed += t.p[i] != 0.0;
  EXPECT_EQ(changed, 1);
  EXPECT_EQ(t.V[0] + t.V[1] + t.V[3], 0.0);
  const auto before = t.p;
  ac_update(t, 2, 5, 0.0, 0.1, 0.1);
  EXPECT_EQ(t.p, before);
  EXPECT_NEAR(t.V[2], -1.915, 1e-12);
}

TEST(QUpdate, Substitutions) {
  LearnerTables t(2, 11);
  t.Q[1 * 11 + 3] = -1.0;
  for (std::size_t a = 0; a < 11; ++a)
    if (a != 3) t.Q[1 * 11 + a] = -1.5;
  q_update(t, 0, 0, -0.5, 1, 0.1, 0.9);
  EXPECT_NEAR(t.Q[0], -0.14, 1e-12);

  LearnerTables u(1, 2);
  u.Q = {0.4, 0.4};
  q_update(u, 0, 1, 0.0, 0, 0.1, 1.0);
  EXPECT_EQ(u.Q[1], 0.4);
}

TEST(Softmax, ClosedFormProbabilities) {
  std::vector<double> p(11, 0.0);
  for (double v : softmax_probabilities(p)) EXPECT_NEAR(v, 1.0 / 11.0, 1e-15);
  p[0] = 1.0;
  const auto probs = softmax_probabilities(p);
  EXPECT_NEAR(probs[0], std::exp(1.0) / (std::exp(1.0) + 10.0), 1e-15);
  EXPECT_NEAR(probs[0], 0.21373, 1e-5);
  double sum = 0.0;
  for (double v : probs) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-15);
}

TEST(Softmax, ShiftInvariantAndStable) {
  std::vector<double> p{0.3, -1.2, 2.0, 0.0};
  auto shifted = p;
  for (double& v : shifted) v += 700.0;
  const auto a = softmax_probabilities(p), b = softmax_probabilities(shifted);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-13);
  EXPECT_TRUE(std::isfinite(b[2]));
}

TEST(Softmax, EmpiricalFrequencies) {
  std::vector<double> zero(11, 0.0);
  const auto f = frequencies([&](Rng& r) { return softmax_select(zero, r); }, 11, 100000, 5);
  for (double v : f) EXPECT_NEAR(v, 1.0 / 11.0, 0.005);
  std::vector<double> q(11, 0.0);
  q[0] = 1.0;
  const auto g = frequencies([&](Rng& r) { return softmax_q_select(q, r); }, 11, 100000, 6);
  EXPECT_NEAR(g[0], 0.21373, 0.005);
}

TEST(EpsGreedy, FrequenciesFollowExcludeGreedyRule) {
  std::vector<double> q(11, 0.0);
  q[4] = 1.0;
  const auto f0 = frequencies([&](Rng& r) { return eps_greedy_select(q, 0.0, r); }, 11, 100000, 1);
  EXPECT_EQ(f0[4], 1.0);
  const auto f1 = frequencies([&](Rng& r) { return eps_greedy_select(q, 1.0, r); }, 11, 100000, 2);
  EXPECT_EQ(f1[4], 0.0);
  for (std::size_t a = 0; a < 11; ++a)
    if (a != 4) EXPECT_NEAR(f1[a], 0.1, 0.005);
  const auto f2 = frequencies([&](Rng& r) { return eps_greedy_select(q, 0.2, r); }, 11, 100000, 3);
  EXPECT_NEAR(f2[4], 0.8, 0.005);
  for (std::size_t a = 0; a < 11; ++a)
    if (a != 4) EXPECT_NEAR(f2[a], 0.02, 0.005);
}

TEST(EpsGreedy, TiedMaximaShareTheGreedyMass) {
  std::vector<double> q(11, 0.0);
  const auto f = frequencies([&](Rng& r) { return eps_greedy_select(q, 0.0, r); }, 11, 100000, 9);
  for (double v : f) EXPECT_NEAR(v, 1.0 / 11.0, 0.005);
}

TEST(Discretize, BinsAreHalfOpenAndClamped) {
  const StateGrid g{10, 10, 10};
  EXPECT_EQ(discretize_components({0.05, 0.0, 1.0}, g), (std::array<std::size_t, 3>{0, 0, 9}));
  EXPECT_EQ(discretize_components({0.9999999, 0, 0}, g)[0], discretize_components({1.0, 0, 0}, g)[0]);
  EXPECT_EQ(discretize_components({0.1, 0, 0}, g)[0], 1u);
  EXPECT_EQ(discretize({1.0, 1.0, 1.0}, g), 999u);
  EXPECT_EQ(discretize({0.0, 0.0, 0.0}, g), 0u);
  for (std::size_t cell : {0u, 17u, 345u, 999u}) {
    const auto k = g.unflatten(cell);
    EXPECT_EQ((k[0] * 10 + k[1]) * 10 + k[2], cell);
  }
}

TEST(Hyperparams, RangesEnforced) {
  Hyperparams h;
  EXPECT_NO_THROW(h.validate());
  h.alpha = 0.0;
  EXPECT_THROW(h.validate(), ValidationError);
  h = {};
  h.omega = 1.5;
  EXPECT_THROW(h.validate(), ValidationError);
  h = {};
  h.epsilon = -0.1;
  EXPECT_THROW(h.validate(), ValidationError);
}

TEST(ToyMdp, ValueIterationOracleIsSane) {
  const auto mdp = oracle::toy_mdp();
  const auto q = mdp.optimal_q(0.9);
  EXPECT_NEAR(q[2][0], 0.0, 1e-9);
  EXPECT_NEAR(q[1][0], -1.0, 1e-9);
  EXPECT_NEAR(q[0][0], -1.9, 1e-9);
  EXPECT_EQ(mdp.greedy(q), (std::vector<std::size_t>{0, 0, 0}));
}

TEST(ToyMdp, QLearningConvergesToFixedPoint) {
  const auto mdp = oracle::toy_mdp();
  Hyperparams hp;
  hp.gamma = 0.9;
  hp.epsilon = 0.3;
  RlAgent agent(LearnerKind::q_eps_greedy, 3, 2, hp);
  train_on(mdp, agent, 100000, 12);
  const auto want = mdp.optimal_q(0.9);
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t a = 0; a < 2; ++a) EXPECT_NEAR(agent.tables().Q[s * 2 + a], want[s][a], 1e-6);
    EXPECT_EQ(agent.greedy(s), mdp.greedy(want)[s]);
  }
}

TEST(ToyMdp, ActorCriticFindsOptimalPolicy) {
  const auto mdp = oracle::toy_mdp();
  Hyperparams hp;
  hp.gamma = 0.9;
  RlAgent agent(LearnerKind::actor_critic, 3, 2, hp);
  train_on(mdp, agent, 100000, 13);
  const auto pi = mdp.greedy(mdp.optimal_q(0.9));
  for (std::size_t s = 0; s < 3; ++s) EXPECT_EQ(agent.greedy(s), pi[s]) << "state " << s;
}

TEST(Agent, TablesStartAtZeroAndFirstDrawLearnsNothing) {
  RlAgent agent(LearnerKind::actor_critic, 8, 11, {});
  Rng rng(1);
  agent.begin(3, rng);
  for (double v : agent.tables().V) EXPECT_EQ(v, 0.0);
  agent.step(-0.5, 4, rng);
  EXPECT_NEAR(agent.tables().V[3], -0.05, 1e-12);
}

TEST(TableDump, WritesNonZeroEntries) {
  LearnerTables t(8, 11);
  const StateGrid g{2, 2, 2};
  t.V[5] = -0.25;
  t.Q[3 * 11 + 7] = 1.5;
  std::ostringstream v, q;
  write_value_table(v, t, g);
  write_action_table(q, t.Q, t, g);
  EXPECT_EQ(v.str(), "cell_i,cell_j,cell_k,value\n1,0,1,-0.25\n");
  EXPECT_EQ(q.str(), "cell_i,cell_j,cell_k,action,value\n0,1,1,7,1.5\n");
}
