#pragma once

// Pre-training against the preference oracle, the two online adaptation
// schemes (fine-tuning and the frozen/learnable policy mixture), exploration
// strategies, and the scratch baselines.

#include <algorithm>
#include <deque>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ialp/agent.hpp"
#include "ialp/environment.hpp"
#include "ialp/metrics.hpp"
#include "ialp/oracle.hpp"

namespace ialp {

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be >= 1");
  }

  void push(Transition t) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(t));
  }

  // Uniform with replacement.
  Batch sample(std::size_t batch_size, Rng& rng) const {
    if (batch_size == 0 || items_.size() < batch_size) {
      throw ConfigError("buffer holds " + std::to_string(items_.size()) +
                        " transitions, cannot sample " + std::to_string(batch_size));
    }
    Batch b;
    b.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) b.push_back(items_[uniform_index(rng, items_.size())]);
    return b;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<Transition>& contents() const { return items_; }

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

enum class StrategyKind { greedy, epsilon_greedy, categorical };

struct ExplorationStrategy {
  StrategyKind kind = StrategyKind::categorical;
  std::optional<Real> epsilon;

  static ExplorationStrategy greedy() { return {StrategyKind::greedy, std::nullopt}; }
  static ExplorationStrategy categorical() { return {StrategyKind::categorical, std::nullopt}; }
  static ExplorationStrategy epsilon_greedy(Real eps) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
    return {StrategyKind::epsilon_greedy, eps};
  }

  static ExplorationStrategy parse(const std::string& name, Real eps = 0.1) {
    if (name == "greedy") return greedy();
    if (name == "categorical") return categorical();
    if (name == "egreedy" || name == "epsilon_greedy") return epsilon_greedy(eps);
    throw ConfigError("unknown strategy '" + name + "'");
  }

  std::string name() const {
    switch (kind) {
      case StrategyKind::greedy: return "greedy";
      case StrategyKind::epsilon_greedy: return "egreedy";
      case StrategyKind::categorical: return "categorical";
    }
    return "?";
  }
};

struct ActionChoice {
  ItemId item = 0;
  bool explored = false;  // epsilon-greedy random branch taken
};

inline ActionChoice choose_action_detailed(std::span<const Real> dist,
                                           const ExplorationStrategy& strategy, Rng& rng) {
  validate_distribution(dist);
  switch (strategy.kind) {
    case StrategyKind::greedy:
      return {static_cast<ItemId>(argmax(dist)), false};
    case StrategyKind::categorical:
      return {static_cast<ItemId>(sample_categorical(dist, rng)), false};
    case StrategyKind::epsilon_greedy: {
      const Real eps = strategy.epsilon.value_or(0.0);
      if (uniform01(rng) < eps) return {static_cast<ItemId>(uniform_index(rng, dist.size())), true};
      return {static_cast<ItemId>(argmax(dist)), false};
    }
  }
  throw ConfigError("unhandled strategy");
}

inline ItemId choose_action(std::span<const Real> dist, const ExplorationStrategy& strategy,
                            Rng& rng) {
  return choose_action_detailed(dist, strategy, rng).item;
}

enum class CandidateSampling { topk, categorical };

struct TrainConfig {
  std::size_t pretrain_epochs = 100;
  std::size_t pretrain_horizon = 20;
  std::size_t online_steps = 50000;
  std::size_t batch_size = 64;
  std::size_t buffer_capacity = 10000;
  Real gamma = 0.9;
  Real lr = 1e-3;
  Real pretrain_lr = 0.0;  // 0: use lr
  Real momentum = 0.0;
  Real grad_clip = 10.0;  // global gradient-norm bound per update, 0 disables
  std::size_t k = 10;
  CandidateSampling candidate_sampling = CandidateSampling::topk;
  Real alpha_init = 0.2;
  std::size_t alpha_anneal_steps = 20000;
  Real dqn_epsilon = 0.1;
  std::size_t target_update_every = 0;  // 0: bootstrap from the live critic
  std::size_t curve_window = 20;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size == 0 || buffer_capacity == 0 || k == 0 || pretrain_horizon == 0) {
      throw ConfigError("batch_size, buffer_capacity, k and pretrain_horizon must be positive");
    }
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    if (!(alpha_init >= 0.0 && alpha_init <= 1.0)) throw ConfigError("alpha_init must lie in [0, 1]");
    if (!(lr >= 0.0 && pretrain_lr >= 0.0)) throw ConfigError("lr must be >= 0");
    if (curve_window == 0) throw ConfigError("curve_window must be >= 1");
    if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be >= 0");
  }
};

// Linear ramp from alpha_init to 1 over alpha_anneal_steps.
inline Real alpha_at(std::size_t step, const TrainConfig& cfg) {
  if (cfg.alpha_anneal_steps == 0 || step >= cfg.alpha_anneal_steps) return 1.0;
  const Real frac = static_cast<Real>(step) / static_cast<Real>(cfg.alpha_anneal_steps);
  return std::min(1.0, cfg.alpha_init + (1.0 - cfg.alpha_init) * frac);
}

// (1 - alpha) * pi_frozen + alpha * pi_learnable for the given history.
inline std::vector<Real> mix_action_distribution(const AgentBundle& frozen,
                                                 const AgentBundle& learnable, Real alpha,
                                                 std::span<const ItemId> history) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  auto p_frozen = action_distribution(frozen.encode(history), frozen);
  if (alpha == 0.0) return p_frozen;
  auto p_learn = action_distribution(learnable.encode(history), learnable);
  if (alpha == 1.0) return p_learn;
  for (std::size_t i = 0; i < p_frozen.size(); ++i) {
    p_frozen[i] = (1.0 - alpha) * p_frozen[i] + alpha * p_learn[i];
  }
  return p_frozen;
}

// k candidates from the actor distribution: the k most probable (ties to
// lowest id) or k distinct categorical draws.
inline std::vector<ItemId> sample_candidates(std::span<const Real> dist, std::size_t k,
                                             CandidateSampling mode, Rng& rng) {
  k = std::min(k, dist.size());
  std::vector<ItemId> out;
  if (mode == CandidateSampling::topk) {
    std::vector<ItemId> ids(dist.size());
    std::iota(ids.begin(), ids.end(), ItemId{0});
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                      [&](ItemId a, ItemId b) { return dist[a] != dist[b] ? dist[a] > dist[b] : a < b; });
    out.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
    return out;
  }
  std::vector<bool> used(dist.size(), false);
  std::vector<Real> p(dist.size());
  for (std::size_t i = 0; i < k; ++i) {
    Real total = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) total += p[j] = used[j] ? 0.0 : dist[j];
    if (total <= 0.0) {
      // only zero-mass items remain: uniform over the unused ones
      for (std::size_t j = 0; j < p.size(); ++j) p[j] = used[j] ? 0.0 : 1.0;
      total = static_cast<Real>(dist.size() - i);
    }
    for (Real& v : p) v /= total;
    const auto pick = static_cast<ItemId>(sample_categorical(p, rng));
    used[pick] = true;
    out.push_back(pick);
  }
  return out;
}

struct PretrainEpochStats {
  std::size_t epoch = 0;
  Real mean_oracle_reward = 0.0;
  Real mean_actor_loss = 0.0;
  Real mean_critic_loss = 0.0;
  std::size_t updates = 0;
};

// Interaction loop against the preference oracle. One epoch is one episode
// of `pretrain_horizon` steps started from an initial item.
class Pretrainer {
 public:
  Pretrainer(AgentBundle& agent, PreferenceOracle& oracle, const TrainConfig& cfg,
             const InteractionLog* start_log = nullptr)
      : agent_(agent),
        oracle_(oracle),
        cfg_(cfg),
        starts_(start_log),
        rng_(derive_seed(cfg.seed, 11)),
        buffer_(cfg.buffer_capacity),
        sgd_(cfg.pretrain_lr > 0.0 ? cfg.pretrain_lr : cfg.lr, cfg.momentum, cfg.grad_clip) {
    cfg_.validate();
  }

  PretrainEpochStats run_epoch() {
    PretrainEpochStats st;
    st.epoch = epoch_;
    const std::size_t n = agent_.config.num_items();
    ItemSequence seq;
    if (starts_ && !starts_->sequences.empty()) {
      seq = {starts_->sequences[uniform_index(rng_, starts_->sequences.size())].items.front()};
    } else {
      seq = {static_cast<ItemId>(uniform_index(rng_, n))};
    }
    Real reward_sum = 0.0;
    for (std::size_t t = 1; t <= cfg_.pretrain_horizon; ++t) {
      const auto dist = action_distribution(agent_.encode(seq), agent_);
      const auto candidates = sample_candidates(dist, cfg_.k, cfg_.candidate_sampling, rng_);
      const OracleOutcome outcome = distill(seq, candidates, oracle_, rng_);
      Transition tr;
      tr.state_items = seq;
      tr.action = outcome.action;
      tr.reward = outcome.reward;
      seq.push_back(outcome.action);
      tr.next_items = seq;
      tr.done = t == cfg_.pretrain_horizon;
      buffer_.push(std::move(tr));
      reward_sum += outcome.reward;
      if (buffer_.size() >= cfg_.batch_size) {
        const auto r = update(buffer_.sample(cfg_.batch_size, rng_), agent_, sgd_);
        st.mean_actor_loss += r.actor_loss_mean;
        st.mean_critic_loss += r.critic_loss_mean;
        ++st.updates;
      }
    }
    st.mean_oracle_reward = reward_sum / static_cast<Real>(cfg_.pretrain_horizon);
    if (st.updates) {
      st.mean_actor_loss /= static_cast<Real>(st.updates);
      st.mean_critic_loss /= static_cast<Real>(st.updates);
    }
    ++epoch_;
    return st;
  }

  std::vector<PretrainEpochStats> run(std::size_t epochs) {
    std::vector<PretrainEpochStats> log;
    for (std::size_t e = 0; e < epochs; ++e) log.push_back(run_epoch());
    return log;
  }

  std::size_t epoch() const { return epoch_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  ReplayBuffer& buffer() { return buffer_; }
  Rng& rng() { return rng_; }
  void restore(std::size_t epoch, const Rng& rng) {
    epoch_ = epoch;
    rng_ = rng;
  }

 private:
  AgentBundle& agent_;
  PreferenceOracle& oracle_;
  TrainConfig cfg_;
  const InteractionLog* starts_;
  Rng rng_;
  ReplayBuffer buffer_;
  Sgd sgd_;
  std::size_t epoch_ = 0;
};

struct PretrainResult {
  AgentBundle agent;
  std::vector<PretrainEpochStats> log;
  std::size_t buffer_size = 0;
};

inline PretrainResult pretrain_ialp(AgentBundle agent, PreferenceOracle& oracle,
                                    const TrainConfig& cfg, const InteractionLog* start_log = nullptr) {
  Pretrainer p(agent, oracle, cfg, start_log);
  PretrainResult out{AgentBundle{}, p.run(cfg.pretrain_epochs), 0};
  out.buffer_size = p.buffer().size();
  out.agent = std::move(agent);
  return out;
}

enum class Method { ialp_ft, ialp_ap, a2c, dqn, pg, llm_online };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::ialp_ft: return "ialp_ft";
    case Method::ialp_ap: return "ialp_ap";
    case Method::a2c: return "a2c";
    case Method::dqn: return "dqn";
    case Method::pg: return "pg";
    case Method::llm_online: return "llm_online";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::ialp_ft, Method::ialp_ap, Method::a2c, Method::dqn, Method::pg,
                   Method::llm_online}) {
    if (to_string(m) == s) return m;
  }
  if (s == "ft") return Method::ialp_ft;
  if (s == "ap") return Method::ialp_ap;
  throw ConfigError("unknown method '" + s + "'");
}

struct CurvePoint {
  std::size_t global_step = 0;
  std::size_t episode_index = 0;
  Real mean_return = 0.0;
  Real mean_length = 0.0;
  Real mean_avg_reward = 0.0;
};

struct LearningCurve {
  std::vector<EpisodeRecord> episodes;
  std::vector<CurvePoint> smoothed;  // mean over the most recent `curve_window` episodes
};

// One online learner (Algorithm-2 schemes and baselines) stepping through an
// environment. Randomness is split into independent streams for actions,
// minibatch sampling and episode resets.
class OnlineRunner {
 public:
  OnlineRunner(Method method, AgentBundle agent, const Environment& env, const TrainConfig& cfg,
               ExplorationStrategy strategy, PreferenceOracle* oracle = nullptr)
      : method_(method),
        learner_(std::move(agent)),
        env_(env),
        cfg_(cfg),
        strategy_(strategy),
        oracle_(oracle),
        action_rng_(derive_seed(cfg.seed, 21)),
        sample_rng_(derive_seed(cfg.seed, 22)),
        reset_stream_(derive_seed(cfg.seed, 23)),
        buffer_(cfg.buffer_capacity),
        sgd_(cfg.lr, cfg.momentum, cfg.grad_clip) {
    cfg_.validate();
    if (learner_.config.num_items() != env_.num_items()) {
      throw ConfigError("agent and environment disagree on the number of items");
    }
    if (method_ == Method::ialp_ap) frozen_ = std::make_shared<const AgentBundle>(learner_);
    if (method_ == Method::llm_online && oracle_ == nullptr) {
      throw ConfigError("llm_online needs an oracle");
    }
    if (cfg_.target_update_every > 0) target_ = std::make_shared<AgentBundle>(learner_);
  }

  Method method() const { return method_; }
  std::size_t steps() const { return step_; }
  const AgentBundle& learner() const { return learner_; }
  const AgentBundle* frozen() const { return frozen_.get(); }
  const LearningCurve& curve() const { return curve_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  Real current_alpha() const { return method_ == Method::ialp_ap ? alpha_at(step_, cfg_) : 1.0; }

  // Distribution the behaviour policy draws from at `history`.
  std::vector<Real> behaviour_distribution(std::span<const ItemId> history) const {
    if (method_ == Method::ialp_ap) {
      return mix_action_distribution(*frozen_, learner_, current_alpha(), history);
    }
    return action_distribution(learner_.encode(history), learner_);
  }

  void step() {
    if (!episode_) {
      episode_ = env_.reset(derive_seed(reset_stream_, episode_count_));
      episode_return_ = 0.0;
      episode_transitions_.clear();
    }
    const EnvState& s = *episode_;
    const ItemId action = select_action(s.history);
    StepResult r = env_.step(s, action);

    Transition tr{s.history, action, r.reward, r.next.history, r.done};
    episode_return_ += r.reward;
    if (method_ == Method::pg) episode_transitions_.push_back(tr);
    buffer_.push(std::move(tr));
    ++step_;

    if (method_ != Method::pg && buffer_.size() >= cfg_.batch_size) learn_from_buffer();

    if (r.done) {
      if (method_ == Method::pg) reinforce_episode();
      close_episode(r.next.steps_taken);
    } else {
      episode_ = std::move(r.next);
    }
    if (target_ && step_ % cfg_.target_update_every == 0) *target_ = learner_;
  }

  void run_until(std::size_t total_steps) {
    while (step_ < total_steps) step();
  }

  // Deterministic snapshot policy for test-environment evaluation.
  GreedyPolicy greedy_policy() const {
    auto snapshot = std::make_shared<const AgentBundle>(learner_);
    if (method_ == Method::dqn) {
      return [snapshot](std::span<const ItemId> h) {
        return static_cast<ItemId>(argmax(q_values(snapshot->encode(h), *snapshot)));
      };
    }
    if (method_ == Method::ialp_ap) {
      const Real alpha = current_alpha();
      auto frozen = frozen_;
      return [snapshot, frozen, alpha](std::span<const ItemId> h) {
        return static_cast<ItemId>(argmax(mix_action_distribution(*frozen, *snapshot, alpha, h)));
      };
    }
    return [snapshot](std::span<const ItemId> h) {
      return static_cast<ItemId>(argmax(action_distribution(snapshot->encode(h), *snapshot)));
    };
  }

 private:
  ItemId select_action(std::span<const ItemId> history) {
    switch (method_) {
      case Method::dqn: {
        const auto q = q_values(learner_.encode(history), learner_);
        const Real eps = strategy_.kind == StrategyKind::epsilon_greedy
                             ? strategy_.epsilon.value_or(cfg_.dqn_epsilon)
                             : cfg_.dqn_epsilon;
        if (uniform01(action_rng_) < eps) {
          return static_cast<ItemId>(uniform_index(action_rng_, q.size()));
        }
        return static_cast<ItemId>(argmax(q));
      }
      case Method::llm_online: {
        const auto dist = behaviour_distribution(history);
        const auto candidates =
            sample_candidates(dist, cfg_.k, cfg_.candidate_sampling, action_rng_);
        return distill(history, candidates, *oracle_, action_rng_).action;
      }
      default: {
        const auto dist = behaviour_distribution(history);
        return choose_action(dist, strategy_, action_rng_);
      }
    }
  }

  void learn_from_buffer() {
    const Batch batch = buffer_.sample(cfg_.batch_size, sample_rng_);
    LossTerms terms;
    terms.target_net = target_.get();
    if (method_ == Method::dqn) terms.actor = false;
    if (method_ == Method::ialp_ap) {
      terms.frozen = frozen_.get();
      terms.alpha = current_alpha();
    }
    update(batch, learner_, sgd_, terms);
  }

  // REINFORCE: mean over the episode of -log pi(a_t|s_t) * G_t.
  void reinforce_episode() {
    const std::size_t n = episode_transitions_.size();
    std::vector<Real> returns(n);
    Real g = 0.0;
    for (std::size_t i = n; i-- > 0;) {
      g = episode_transitions_[i].reward + learner_.config.gamma * g;
      returns[i] = g;
    }
    learner_.params.zero_grad();
    LossTerms terms;
    terms.critic = false;
    for (std::size_t i = 0; i < n; ++i) {
      terms.actor_scale = returns[i];
      accumulate_gradients(episode_transitions_[i], learner_, 1.0 / static_cast<Real>(n), terms);
    }
    sgd_.step(learner_.params);
  }

  void close_episode(std::size_t length) {
    curve_.episodes.push_back(EpisodeRecord::make(episode_return_, length, episode_count_, step_));
    const std::size_t window = std::min(cfg_.curve_window, curve_.episodes.size());
    std::span<const EpisodeRecord> recent(curve_.episodes.data() + curve_.episodes.size() - window,
                                          window);
    const Metrics m = compute_metrics(recent);
    curve_.smoothed.push_back({step_, episode_count_, m.R, m.Len, m.R_avg});
    ++episode_count_;
    episode_.reset();
  }

  Method method_;
  AgentBundle learner_;
  std::shared_ptr<const AgentBundle> frozen_;
  std::shared_ptr<AgentBundle> target_;
  const Environment& env_;
  TrainConfig cfg_;
  ExplorationStrategy strategy_;
  PreferenceOracle* oracle_;
  Rng action_rng_;
  Rng sample_rng_;
  std::uint64_t reset_stream_;
  ReplayBuffer buffer_;
  Sgd sgd_;
  std::size_t step_ = 0;
  std::size_t episode_count_ = 0;
  std::optional<EnvState> episode_;
  Real episode_return_ = 0.0;
  std::vector<Transition> episode_transitions_;
  LearningCurve curve_;
};

enum class Scheme { ft, ap };

struct OnlineResult {
  AgentBundle agent;
  std::optional<AgentBundle> frozen;
  LearningCurve curve;
  GreedyPolicy policy;
};

inline OnlineResult finish(OnlineRunner& runner) {
  OnlineResult out{runner.learner(), std::nullopt, runner.curve(), runner.greedy_policy()};
  if (runner.frozen()) out.frozen = *runner.frozen();
  return out;
}

// A-iALP: scheme ft fine-tunes the pre-trained agent; scheme ap freezes it
// and learns a copy mixed in with weight alpha_at(step).
inline OnlineResult online_phase(Scheme scheme, const AgentBundle& pretrained,
                                 const Environment& env, const TrainConfig& cfg,
                                 const ExplorationStrategy& strategy) {
  OnlineRunner runner(scheme == Scheme::ft ? Method::ialp_ft : Method::ialp_ap, pretrained, env,
                      cfg, strategy);
  runner.run_until(cfg.online_steps);
  return finish(runner);
}

inline OnlineResult run_baseline(Method kind, const AgentBundle& initial, const Environment& env,
                                 const TrainConfig& cfg, const ExplorationStrategy& strategy,
                                 PreferenceOracle* oracle = nullptr) {
  OnlineRunner runner(kind, initial, env, cfg, strategy, oracle);
  runner.run_until(cfg.online_steps);
  return finish(runner);
}

}  // namespace ialp
