#include <gtest/gtest.h>

#include "ialp/environment.hpp"
#include "ialp/metrics.hpp"

using namespace ialp;

namespace {

// One user whose score for item i is scores[i] (1-dim factors, no biases).
std::shared_ptr<RewardModel> scripted_model(const std::vector<Real>& scores, Real r_max = 5.0) {
  Tensor users({1, 1}, 1.0);
  Tensor items({scores.size(), 1});
  for (std::size_t i = 0; i < scores.size(); ++i) items.at(i, 0) = scores[i];
  return std::make_shared<RewardModel>(RewardModel::from_factors(users, items, r_max));
}

InteractionLog one_user_log(ItemSequence items) {
  InteractionLog log;
  UserSequence s;
  s.user_id = 0;
  s.items = std::move(items);
  for (std::size_t i = 0; i < s.items.size(); ++i) s.timestamps.push_back(static_cast<std::int64_t>(i));
  log.sequences.push_back(s);
  return log;
}

bool monotone_within(const std::vector<Real>& loss, Real tol) {
  for (std::size_t e = 1; e < loss.size(); ++e) {
    if (loss[e] > loss[e - 1] * (1.0 + tol)) return false;
  }
  return true;
}

}  // namespace

TEST(RewardModel, ZeroFactorsGiveZero) {
  auto m = RewardModel::from_factors(Tensor({2, 3}), Tensor({4, 3}), 5.0);
  for (ItemId i = 0; i < 4; ++i) EXPECT_EQ(m.score({UserId{1}, {}}, i), 0.0);
}

TEST(RewardModel, OrthogonalFactorsScoreBiasOnly) {
  Tensor u({1, 2}), v({1, 2});
  u.at(0, 0) = 3.0;
  v.at(0, 1) = 2.0;
  auto m = RewardModel::from_factors(u, v, 5.0, 1.25);
  EXPECT_EQ(m.raw_score({UserId{0}, {}}, 0), 1.25);
}

TEST(RewardModel, MatchesExplicitDotAndClips) {
  Rng rng(4);
  Tensor u({3, 4}), v({6, 4});
  fill_uniform(u, rng, -2, 2);
  fill_uniform(v, rng, -2, 2);
  auto m = RewardModel::from_factors(u, v, 2.0, 0.3);
  for (UserId user = 0; user < 3; ++user) {
    for (ItemId i = 0; i < 6; ++i) {
      Real expected = 0.3;
      for (std::size_t c = 0; c < 4; ++c) expected += u.at(user, c) * v.at(i, c);
      EXPECT_NEAR(m.raw_score({user, {}}, i), expected, 1e-14);
      EXPECT_NEAR(m.score({user, {}}, i), std::clamp(expected, 0.0, 2.0), 1e-14);
    }
  }
  EXPECT_THROW(m.score({UserId{9}, {}}, 0), EnvError);
  EXPECT_THROW(m.score({std::nullopt, {}}, 0), EnvError);
}

TEST(FitMf, ObservedItemOutscoresUnobserved) {
  InteractionLog log = one_user_log({3, 3});
  log.sequences.push_back({1, {0, 1}, {0, 1}});
  RewardModelHyperparams hp;
  hp.epochs = 60;
  const auto fr = fit_reward_model(log, 8, RewardModelKind::matrix_factorization, hp, 5);
  const Real observed = fr.model.raw_score({UserId{0}, {}}, 3);
  for (ItemId i = 0; i < 8; ++i) {
    if (i == 3) continue;
    EXPECT_GT(observed, fr.model.raw_score({UserId{0}, {}}, i)) << i;
  }
}

TEST(FitMf, SingleInteractionLog) {
  InteractionLog log;
  log.sequences.push_back({0, {1}, {0}});
  const auto fr = fit_reward_model(log, 4, RewardModelKind::matrix_factorization, {}, 1);
  for (ItemId i = 0; i < 4; ++i) EXPECT_TRUE(std::isfinite(fr.model.raw_score({UserId{0}, {}}, i)));
  EXPECT_THROW(fit_reward_model(InteractionLog{}, 4, RewardModelKind::matrix_factorization, {}, 1),
               EnvError);
}

TEST(FitMf, RecoversGroundTruthTopItem) {
  const std::size_t users = 300, items = 50;
  const auto ds = generate_synthetic(users, items, 5, 2, 3);
  RewardModelHyperparams hp;
  hp.dim = 2;
  hp.epochs = 60;
  hp.lr = 0.01;
  const auto fr = fit_reward_model(ds.log, items, RewardModelKind::matrix_factorization, hp, 3);
  std::size_t hits = 0;
  for (UserId u = 0; u < static_cast<UserId>(users); ++u) {
    ItemId truth_best = 0, model_best = 0;
    for (ItemId i = 1; i < items; ++i) {
      if (ds.truth.affinity(u, i) > ds.truth.affinity(u, truth_best)) truth_best = i;
      if (fr.model.raw_score({u, {}}, i) > fr.model.raw_score({u, {}}, model_best)) model_best = i;
    }
    hits += truth_best == model_best;
  }
  EXPECT_GE(static_cast<Real>(hits) / users, 0.6);
  EXPECT_TRUE(monotone_within(fr.epoch_loss, 0.05));
  EXPECT_LT(fr.epoch_loss.back(), fr.epoch_loss.front());
}

TEST(FitSequential, LearnsNextItemAndLossDecreases) {
  // Deterministic cycles 0->1->2->...->5->0.
  InteractionLog log;
  for (UserId u = 0; u < 12; ++u) {
    UserSequence s;
    s.user_id = u;
    for (std::size_t t = 0; t < 6; ++t) {
      s.items.push_back(static_cast<ItemId>((u + t) % 6));
      s.timestamps.push_back(static_cast<std::int64_t>(t));
    }
    log.sequences.push_back(s);
  }
  RewardModelHyperparams hp;
  hp.dim = 8;
  hp.epochs = 40;
  hp.lr = 0.05;
  hp.max_seq_len = 4;
  const auto fr = fit_reward_model(log, 6, RewardModelKind::sequential, hp, 2);
  EXPECT_TRUE(monotone_within(fr.epoch_loss, 0.05));
  EXPECT_LT(fr.epoch_loss.back(), 0.5 * fr.epoch_loss.front());
  const ItemSequence hist{2, 3};
  Real best = -1e9;
  ItemId arg = 0;
  for (ItemId i = 0; i < 6; ++i) {
    const Real s = fr.model.raw_score({std::nullopt, hist}, i);
    if (s > best) {
      best = s;
      arg = i;
    }
  }
  EXPECT_EQ(arg, 4u);
  // sequential score = dot(encode(history), output embedding)
  const auto state = encode(hist, fr.model.params, fr.model.encoder);
  EXPECT_NEAR(fr.model.raw_score({std::nullopt, hist}, 1),
              dot(state, fr.model.params.value(reward_names::kOutputEmbedding).row(1)), 1e-12);
}

TEST(Environment, ResetDeterministicAndShaped) {
  auto model = scripted_model({1, 1, 1, 1});
  InteractionLog log = one_user_log({2, 1, 0});
  log.sequences.push_back({0, {1, 3}, {0, 1}});
  Environment env(model, log, EnvConfig{});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = env.reset(seed), b = env.reset(seed);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.history.size(), 1u);
    EXPECT_TRUE(a.user_id.has_value());
    EXPECT_EQ(a.steps_taken, 0u);
    EXPECT_FALSE(a.done);
  }
  auto seq_model = std::make_shared<RewardModel>(*model);
  seq_model->kind = RewardModelKind::sequential;
  Environment seq_env(seq_model, log, EnvConfig{});
  EXPECT_FALSE(seq_env.reset(3).user_id.has_value());
  EXPECT_EQ(seq_env.reset(3).history.size(), 1u);
  Environment empty(model, InteractionLog{}, EnvConfig{});
  EXPECT_THROW(empty.reset(0), EnvError);
}

TEST(Environment, QuitRuleAndHorizon) {
  auto model = scripted_model({1.0, 0.1});
  Environment env(model, one_user_log({0, 1}), EnvConfig{30, 0.2, 5.0, 0});
  auto s = env.reset(0);
  const auto quit = env.step(s, 1);
  EXPECT_TRUE(quit.done);
  EXPECT_THROW(env.step(quit.next, 0), EnvError);
  EXPECT_THROW(env.step(s, 2), EnvError);

  Environment one_step(model, one_user_log({0, 1}), EnvConfig{1, 0.2, 5.0, 0});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = one_step.step(one_step.reset(seed), 0);
    EXPECT_TRUE(r.done);
    EXPECT_EQ(r.next.steps_taken, 1u);
  }
}

TEST(Environment, HandSimulatedRollout) {
  // Rewards 1, 1, 1, 0.1 with threshold 0.2: the fourth step quits.
  auto model = scripted_model({1.0, 1.0, 1.0, 0.1, 1.0});
  Environment env(model, one_user_log({0, 1}), EnvConfig{30, 0.2, 5.0, 0});
  const ItemSequence actions{0, 1, 2, 3, 4};
  std::size_t next = 0;
  GreedyPolicy scripted = [&](std::span<const ItemId>) { return actions[next++]; };
  const auto rec = rollout(env, scripted, 0, 0);
  EXPECT_NEAR(rec.return_R, 3.1, 1e-12);
  EXPECT_EQ(rec.length_Len, 4u);
}

TEST(Environment, EpisodeProperties) {
  Rng rng(7);
  Tensor u({5, 3}), v({12, 3});
  fill_uniform(u, rng, -1.5, 1.5);
  fill_uniform(v, rng, -1.5, 1.5);
  auto model = std::make_shared<RewardModel>(RewardModel::from_factors(u, v, 2.0, 0.8));
  InteractionLog log;
  for (UserId id = 0; id < 5; ++id) log.sequences.push_back({id, {ItemId(id), ItemId(id + 1)}, {0, 1}});
  EnvConfig cfg{15, 0.3, 2.0, 0};
  Environment env(model, log, cfg);
  for (std::uint64_t ep = 0; ep < 200; ++ep) {
    Rng actions(ep);
    auto run = [&](Rng act) {
      auto s = env.reset(ep);
      std::vector<Real> rewards;
      while (!s.done) {
        auto r = env.step(s, static_cast<ItemId>(uniform_index(act, 12)));
        rewards.push_back(r.reward);
        s = r.next;
      }
      return std::make_pair(rewards, s);
    };
    const auto [rewards, last] = run(actions);
    const auto [again, last2] = run(Rng(ep));
    EXPECT_EQ(rewards, again);
    EXPECT_EQ(last, last2);
    EXPECT_LE(rewards.size(), cfg.max_steps);
    for (Real r : rewards) {
      EXPECT_GE(r, 0.0);
      EXPECT_LE(r, cfg.r_max);
    }
    if (rewards.size() < cfg.max_steps) {
      EXPECT_LT(rewards.back(), cfg.quit_threshold);
    }
  }
}

TEST(Environment, ConfigValidation) {
  EXPECT_THROW((EnvConfig{0, 0.5, 5.0, 0}.validate()), ConfigError);
  EXPECT_THROW((EnvConfig{5, 5.0, 5.0, 0}.validate()), ConfigError);
  EXPECT_THROW(parse_reward_model_kind("deepfm"), ConfigError);
}

TEST(Metrics, IdentityAndPaperRow) {
  // Six-step episodes with R = 4.92.
  std::vector<EpisodeRecord> eps;
  for (std::size_t i = 0; i < 6; ++i) eps.push_back(EpisodeRecord::make(0.82 * 6, 6, i, 6 * (i + 1)));
  const auto m = compute_metrics(eps);
  EXPECT_NEAR(m.R_avg, 4.92 / 6, 1e-12);
  EXPECT_NEAR(m.R_avg, m.R / m.Len, 1e-12);

  // Equal-length episodes with mean Return 5.11 and Len 6.21 reproduce R_avg 0.82.
  std::vector<EpisodeRecord> row;
  for (std::size_t i = 0; i < 100; ++i) {
    const std::size_t len = i < 21 ? 7 : 6;  // mean 6.21
    row.push_back(EpisodeRecord::make(5.11 * static_cast<Real>(len) / 6.21, len, i, 0));
  }
  const auto r = compute_metrics(row);
  EXPECT_NEAR(compute_metrics(std::vector<EpisodeRecord>{EpisodeRecord::make(2, 4, 0, 4),
                                                          EpisodeRecord::make(2, 4, 1, 8)})
                  .R_avg,
              0.5, 1e-15);
  EXPECT_NEAR(r.Len, 6.21, 1e-12);
  EXPECT_NEAR(r.R, 5.11, 1e-9);
  EXPECT_NEAR(r.R_avg, 0.82, 0.01);
  EXPECT_THROW(compute_metrics({}), EnvError);
  EXPECT_THROW(EpisodeRecord::make(1.0, 0, 0, 0), EnvError);
}

TEST(Metrics, EvaluateIsWorkerCountInvariant) {
  Rng rng(2);
  Tensor u({4, 2}), v({9, 2});
  fill_uniform(u, rng, -1, 1);
  fill_uniform(v, rng, -1, 1);
  auto model = std::make_shared<RewardModel>(RewardModel::from_factors(u, v, 5.0, 1.0));
  InteractionLog log;
  for (UserId id = 0; id < 4; ++id) log.sequences.push_back({id, {ItemId(id), ItemId(id + 2)}, {0, 1}});
  Environment env(model, log, EnvConfig{10, 0.9, 5.0, 0});
  GreedyPolicy policy = [](std::span<const ItemId> h) { return static_cast<ItemId>((h.back() * 5 + h.size()) % 9); };
  const auto a = evaluate(policy, env, 50, 11, 1);
  const auto b = evaluate(policy, env, 50, 11, 4);
  EXPECT_EQ(a.episodes, b.episodes);
  EXPECT_THROW(evaluate(policy, env, 0, 11), EnvError);
}
