#include <gtest/gtest.h>

#include <cmath>

#include "ialp/agent.hpp"

using namespace ialp;

namespace {

AgentBundle toy_agent(std::size_t items, std::size_t d, std::uint64_t seed, Real gamma = 0.9) {
  AgentConfig cfg;
  cfg.encoder = {d, 4, items};
  cfg.gamma = gamma;
  return AgentBundle::create(cfg, seed);
}

void randomize(AgentBundle& b, std::uint64_t seed, Real scale) {
  Rng rng(seed);
  for (auto& [name, p] : b.params) {
    for (auto& v : p.value.data) v += scale * (uniform01(rng) - 0.5);
  }
}

Transition random_transition(Rng& rng, std::size_t items, bool allow_done = true) {
  Transition t;
  t.state_items.resize(1 + uniform_index(rng, 4));
  for (auto& v : t.state_items) v = static_cast<ItemId>(uniform_index(rng, items));
  t.action = static_cast<ItemId>(uniform_index(rng, items));
  t.reward = 2.0 * uniform01(rng) - 0.5;
  t.next_items = t.state_items;
  t.next_items.push_back(t.action);
  t.done = allow_done && uniform01(rng) < 0.3;
  return t;
}

Real prob_of(const AgentBundle& b, const Transition& t) {
  return action_distribution(b.encode(t.state_items), b)[t.action];
}

}  // namespace

TEST(Agent, ZeroActorWeightsGiveUniform) {
  auto b = toy_agent(5, 4, 1);
  b.params.value(agent_names::kActorWeight).fill(0.0);
  const auto p = action_distribution(b.encode(ItemSequence{0, 1}), b);
  for (Real v : p) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(Agent, TwoItemDistribution) {
  auto b = toy_agent(2, 2, 1);
  b.params.value(agent_names::kActorWeight).fill(0.0);
  b.params.value(agent_names::kActorBias)[0] = std::log(3.0);
  const auto p = action_distribution(b.encode(ItemSequence{0}), b);
  EXPECT_NEAR(p[0], 0.75, 1e-15);
  EXPECT_NEAR(p[1], 0.25, 1e-15);
}

TEST(Agent, HeadsMatchExplicitMatvec) {
  auto b = toy_agent(5, 3, 2);
  randomize(b, 3, 0.4);
  const auto s = b.encode(ItemSequence{3, 1, 4});
  const auto q = q_values(s, b);
  const auto p = action_distribution(s, b);
  const auto& wq = b.params.value(agent_names::kCriticWeight);
  const auto& wa = b.params.value(agent_names::kActorWeight);
  std::vector<long double> logits(5);
  long double z = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    long double qi = b.params.value(agent_names::kCriticBias)[i];
    long double li = b.params.value(agent_names::kActorBias)[i];
    for (std::size_t c = 0; c < 3; ++c) {
      qi += wq.at(i, c) * s[c];
      li += wa.at(i, c) * s[c];
    }
    EXPECT_NEAR(q[i], static_cast<Real>(qi), 1e-14);
    logits[i] = li;
    z += std::exp(li);
  }
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(p[i], static_cast<Real>(std::exp(logits[i]) / z), 1e-14);
  }
}

TEST(Agent, IdentityCriticReadsFirstColumn) {
  auto b = toy_agent(2, 2, 1);
  auto& w = b.params.value(agent_names::kCriticWeight);
  w.fill(0.0);
  w.at(0, 0) = 1.0;
  w.at(1, 1) = 1.0;
  EXPECT_EQ(q_values(StateVector{1.0, 0.0}, b), (std::vector<Real>{1.0, 0.0}));
  EXPECT_EQ(q_values(StateVector{0.0, 0.0}, toy_agent(2, 2, 1)).size(), 2u);
}

TEST(Agent, ShiftInvariantDistribution) {
  auto b = toy_agent(6, 3, 4);
  randomize(b, 5, 0.5);
  const auto s = b.encode(ItemSequence{0, 2});
  const auto before = action_distribution(s, b);
  for (auto& v : b.params.value(agent_names::kActorBias).data) v += 7.5;
  const auto after = action_distribution(s, b);
  EXPECT_EQ(argmax(before), argmax(after));
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(before[i], after[i], 1e-12);
}

TEST(Agent, CriticLossExample) {
  // Zero critic weights: Q(s, a) is the bias, whatever the state.
  auto b = toy_agent(3, 2, 1, 0.5);
  b.params.value(agent_names::kCriticWeight).fill(0.0);
  auto& bias = b.params.value(agent_names::kCriticBias);
  bias[0] = 1.5;
  bias[1] = 2.0;
  bias[2] = -1.0;
  Transition t{{0}, 0, 1.0, {0, 0}, false};
  EXPECT_NEAR(critic_loss(t, b), 0.25, 1e-15);
  EXPECT_NEAR(advantage(t, b), 0.5, 1e-15);
  t.done = true;
  EXPECT_NEAR(advantage(t, b), -0.5, 1e-15);
}

TEST(Agent, CriticFixedPoint) {
  auto b = toy_agent(3, 2, 1, 1.0);
  b.params.value(agent_names::kCriticWeight).fill(0.0);
  b.params.value(agent_names::kCriticBias).fill(0.7);
  Transition t{{1}, 2, 0.0, {1, 2}, false};
  EXPECT_EQ(critic_loss(t, b), 0.0);
  EXPECT_EQ(advantage(t, b), 0.0);
}

TEST(Agent, CriticLossIsAdvantageSquared) {
  Rng rng(8);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto b = toy_agent(4, 3, seed);
    randomize(b, seed + 50, 1.0);
    const auto t = random_transition(rng, 4);
    const Real a = advantage(t, b);
    EXPECT_EQ(critic_loss(t, b), a * a);
    // hand-expanded formula
    const auto q = q_values(b.encode(t.state_items), b);
    const auto qn = q_values(b.encode(t.next_items), b);
    const Real boot = t.done ? 0.0 : b.config.gamma * *std::max_element(qn.begin(), qn.end());
    EXPECT_NEAR(a, t.reward + boot - q[t.action], 1e-14);
  }
}

TEST(Agent, ActorLossUniformExample) {
  auto b = toy_agent(4, 2, 1, 0.0);
  b.params.value(agent_names::kActorWeight).fill(0.0);
  b.params.value(agent_names::kCriticWeight).fill(0.0);
  Transition t{{0}, 1, 1.0, {0, 1}, true};  // A = 1 - 0
  EXPECT_NEAR(actor_loss(t, b), 1.3862943611198906, 1e-12);
}

TEST(Agent, ZeroAdvantageGivesZeroActorGradient) {
  auto b = toy_agent(4, 2, 1, 0.0);
  b.params.value(agent_names::kCriticWeight).fill(0.0);
  b.params.value(agent_names::kCriticBias).fill(0.5);
  Transition t{{0, 2}, 3, 0.5, {0, 2, 3}, true};
  EXPECT_EQ(actor_loss(t, b), 0.0);
  b.params.zero_grad();
  LossTerms actor_only;
  actor_only.critic = false;
  accumulate_gradients(t, b, 1.0, actor_only);
  for (const auto& [name, p] : b.params) {
    for (Real g : p.grad.data) EXPECT_EQ(g, 0.0) << name;
  }
}

TEST(Agent, LogClampOnDeterministicPolicy) {
  auto b = toy_agent(2, 2, 1, 0.0);
  b.params.value(agent_names::kActorWeight).fill(0.0);
  b.params.value(agent_names::kActorBias)[0] = 200.0;
  Transition t{{0}, 1, 1.0, {0, 1}, true};
  EXPECT_NEAR(actor_nll(t, b), 30.0, 1e-12);
  EXPECT_TRUE(std::isfinite(actor_loss(t, b)));
}

TEST(Agent, InvalidTransition) {
  auto b = toy_agent(3, 2, 1);
  EXPECT_THROW(critic_loss(Transition{{0}, 5, 1.0, {0}, false}, b), DataError);
  EXPECT_THROW(critic_loss(Transition{{0}, 1, NAN, {0}, false}, b), NumericError);
  Batch empty;
  EXPECT_THROW(update(empty, b, 0.1), NumericError);
  EXPECT_THROW((AgentConfig{{4, 2, 3}, 1.5}.validate()), ConfigError);
}

// Gradient check: the TD target and the actor's advantage are constants,
// so the finite-difference loss is evaluated with them frozen at their
// unperturbed values.
TEST(Agent, GradientsMatchFiniteDifferences) {
  Rng rng(21);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t items = 2 + seed % 4, d = 2 + seed % 3;
    auto b = toy_agent(items, d, seed);
    randomize(b, seed + 1000, 0.6);
    const auto t = random_transition(rng, items);
    const Real target = td_target(t, b);
    const Real adv = advantage(t, b);
    auto loss = [&](const ParamSet& p) {
      AgentBundle probe{b.config, p};
      const auto s = probe.encode(t.state_items);
      const Real a = target - q_values(s, probe)[t.action];
      const Real logp = log_softmax(actor_logits(s, probe))[t.action];
      return a * a - logp * adv;
    };
    b.params.zero_grad();
    accumulate_gradients(t, b, 1.0);
    const auto numeric = finite_diff_grad(loss, b.params);
    const auto check = compare_gradients(b.params, numeric);
    EXPECT_TRUE(check.ok) << "seed " << seed << " " << check.worst_name << " rel "
                          << check.worst_relative;
  }
}

TEST(Agent, MixtureGradientMatchesFiniteDifferences) {
  Rng rng(22);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto frozen = toy_agent(4, 3, seed);
    randomize(frozen, seed + 7, 0.8);
    auto b = frozen;
    randomize(b, seed + 9, 0.8);
    const Real alpha = 0.1 + 0.08 * static_cast<Real>(seed);
    const auto t = random_transition(rng, 4);
    const Real adv = advantage(t, b);
    const Real p_frozen = action_distribution(frozen.encode(t.state_items), frozen)[t.action];
    auto loss = [&](const ParamSet& p) {
      AgentBundle probe{b.config, p};
      const Real pb = action_distribution(probe.encode(t.state_items), probe)[t.action];
      return -std::log((1 - alpha) * p_frozen + alpha * pb) * adv;
    };
    b.params.zero_grad();
    LossTerms terms;
    terms.critic = false;
    terms.frozen = &frozen;
    terms.alpha = alpha;
    accumulate_gradients(t, b, 1.0, terms);
    const auto check = compare_gradients(b.params, finite_diff_grad(loss, b.params));
    EXPECT_TRUE(check.ok) << "seed " << seed << " " << check.worst_name;
  }
}

TEST(Agent, UpdateMeanInvariance) {
  auto a = toy_agent(3, 2, 5);
  auto b = a;
  Rng rng(3);
  const auto t = random_transition(rng, 3);
  const auto r1 = update(Batch{t}, a, 0.05);
  const auto r2 = update(Batch{t, t}, b, 0.05);
  EXPECT_NEAR(r1.actor_loss_mean, r2.actor_loss_mean, 1e-15);
  EXPECT_NEAR(r1.critic_loss_mean, r2.critic_loss_mean, 1e-15);
  for (const auto& name : a.params.names()) {
    for (std::size_t i = 0; i < a.params.value(name).size(); ++i) {
      EXPECT_NEAR(a.params.value(name)[i], b.params.value(name)[i], 1e-15);
    }
  }
}

TEST(Agent, ZeroLearningRateReportsButKeepsParams) {
  auto a = toy_agent(3, 2, 5);
  const auto before = a.params;
  Rng rng(4);
  const auto r = update(Batch{random_transition(rng, 3)}, a, 0.0);
  EXPECT_TRUE(a.params.same_values(before));
  EXPECT_GT(r.critic_loss_mean, 0.0);
}

TEST(Agent, SmallUpdateMovesChosenProbabilityWithAdvantageSign) {
  Rng rng(30);
  int checked_pos = 0, checked_neg = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto b = toy_agent(3, 3, seed);
    randomize(b, seed + 300, 0.5);
    const auto t = random_transition(rng, 3);
    const Real adv = advantage(t, b);
    if (std::abs(adv) < 1e-3) continue;
    const Real before = prob_of(b, t);
    LossTerms actor_only;
    actor_only.critic = false;
    Sgd sgd(1e-3);
    update(Batch{t}, b, sgd, actor_only);
    const Real after = prob_of(b, t);
    if (adv > 0) {
      EXPECT_GT(after, before);
      ++checked_pos;
    } else {
      EXPECT_LT(after, before);
      ++checked_neg;
    }
  }
  EXPECT_GT(checked_pos, 0);
  EXPECT_GT(checked_neg, 0);
}
