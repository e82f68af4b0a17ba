#pragma once

// Simulated users. A reward model scores (context, item); an environment
// draws an initial state from a log split and ends an episode when the
// reward falls below the quit threshold or the horizon is reached.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "ialp/data.hpp"
#include "ialp/nn.hpp"
#include "ialp/state_encoder.hpp"

namespace ialp {

enum class RewardModelKind { matrix_factorization, sequential };

inline std::string to_string(RewardModelKind k) {
  return k == RewardModelKind::matrix_factorization ? "mf" : "sequential";
}

inline RewardModelKind parse_reward_model_kind(const std::string& s) {
  if (s == "mf" || s == "matrix_factorization") return RewardModelKind::matrix_factorization;
  if (s == "sequential") return RewardModelKind::sequential;
  throw ConfigError("unknown reward model kind '" + s + "'");
}

namespace reward_names {
inline const std::string kUserFactors = "mf.user_factors";
inline const std::string kItemFactors = "mf.item_factors";
inline const std::string kUserBias = "mf.user_bias";
inline const std::string kItemBias = "mf.item_bias";
inline const std::string kGlobalBias = "mf.global_bias";
inline const std::string kOutputEmbedding = "output.item_embedding";
}  // namespace reward_names

struct ScoreContext {
  std::optional<UserId> user;
  std::span<const ItemId> history;
};

class RewardModel {
 public:
  RewardModelKind kind = RewardModelKind::matrix_factorization;
  Real r_max = 5.0;
  std::size_t num_items = 0;
  ParamSet params;
  std::map<UserId, std::size_t> user_rows;  // MF only
  EncoderConfig encoder;                    // sequential only

  // Unclipped model output.
  Real raw_score(const ScoreContext& ctx, ItemId action) const {
    if (action >= num_items) throw EnvError("action " + std::to_string(action) + " out of range");
    if (kind == RewardModelKind::matrix_factorization) {
      if (!ctx.user) throw EnvError("matrix-factorization score needs a user");
      auto it = user_rows.find(*ctx.user);
      if (it == user_rows.end()) throw EnvError("unknown user " + std::to_string(*ctx.user));
      return mf_score(it->second, action);
    }
    const StateVector h = ialp::encode(ctx.history, params, encoder);
    return dot(h, params.value(reward_names::kOutputEmbedding).row(action));
  }

  Real score(const ScoreContext& ctx, ItemId action) const {
    const Real raw = raw_score(ctx, action);
    if (!std::isfinite(raw)) throw NumericError("non-finite reward model output");
    return std::clamp(raw, 0.0, r_max);
  }

  Real mf_score(std::size_t user_row, ItemId item) const {
    return params.value(reward_names::kGlobalBias)[0] +
           params.value(reward_names::kUserBias)[user_row] +
           params.value(reward_names::kItemBias)[item] +
           dot(params.value(reward_names::kUserFactors).row(user_row),
               params.value(reward_names::kItemFactors).row(item));
  }

  // Explicit biased-MF model; user ids are 0..rows-1.
  static RewardModel from_factors(const Tensor& user_factors, const Tensor& item_factors,
                                  Real r_max, Real global_bias = 0.0) {
    if (user_factors.cols() != item_factors.cols()) throw EnvError("factor width mismatch");
    RewardModel m;
    m.kind = RewardModelKind::matrix_factorization;
    m.r_max = r_max;
    m.num_items = item_factors.rows();
    m.params.add(reward_names::kUserFactors, user_factors);
    m.params.add(reward_names::kItemFactors, item_factors);
    m.params.add(reward_names::kUserBias, Tensor({user_factors.rows()}));
    m.params.add(reward_names::kItemBias, Tensor({item_factors.rows()}));
    m.params.add(reward_names::kGlobalBias, Tensor({1}, global_bias));
    for (std::size_t u = 0; u < user_factors.rows(); ++u) m.user_rows[static_cast<UserId>(u)] = u;
    return m;
  }
};

struct RewardModelHyperparams {
  std::size_t dim = 8;
  std::size_t epochs = 30;
  Real lr = 0.02;
  Real reg = 0.01;
  std::size_t negatives = 4;  // MF: sampled negatives per positive
  Real r_max = 5.0;
  std::size_t max_seq_len = 10;  // sequential only
};

struct FitResult {
  RewardModel model;
  std::vector<Real> epoch_loss;
};

namespace detail {

inline FitResult fit_mf(const InteractionLog& log, std::size_t num_items,
                        const RewardModelHyperparams& hp, std::uint64_t seed) {
  Rng rng(seed);
  FitResult fr;
  RewardModel& m = fr.model;
  m.kind = RewardModelKind::matrix_factorization;
  m.r_max = hp.r_max;
  m.num_items = num_items;
  std::map<UserId, std::set<ItemId>> seen;
  for (const auto& s : log.sequences) seen[s.user_id].insert(s.items.begin(), s.items.end());
  std::size_t row = 0;
  for (const auto& [user, _] : seen) m.user_rows[user] = row++;

  Tensor users({row, hp.dim}), items({num_items, hp.dim});
  fill_uniform(users, rng, -0.1, 0.1);
  fill_uniform(items, rng, -0.1, 0.1);
  m.params.add(reward_names::kUserFactors, std::move(users));
  m.params.add(reward_names::kItemFactors, std::move(items));
  m.params.add(reward_names::kUserBias, Tensor({row}));
  m.params.add(reward_names::kItemBias, Tensor({num_items}));
  m.params.add(reward_names::kGlobalBias, Tensor({1}));

  std::vector<std::pair<std::size_t, ItemId>> positives;
  for (const auto& [user, its] : seen) {
    for (ItemId i : its) positives.emplace_back(m.user_rows[user], i);
  }
  std::vector<std::set<ItemId>> seen_by_row(row);
  for (const auto& [user, its] : seen) seen_by_row[m.user_rows[user]] = its;

  Tensor& U = m.params.value(reward_names::kUserFactors);
  Tensor& V = m.params.value(reward_names::kItemFactors);
  Tensor& bu = m.params.value(reward_names::kUserBias);
  Tensor& bi = m.params.value(reward_names::kItemBias);
  Tensor& mu = m.params.value(reward_names::kGlobalBias);

  auto sgd_pair = [&](std::size_t u, ItemId i, Real target) {
    const Real err = m.mf_score(u, i) - target;
    auto pu = U.row(u);
    auto qi = V.row(i);
    for (std::size_t c = 0; c < hp.dim; ++c) {
      const Real gu = err * qi[c] + hp.reg * pu[c];
      const Real gi = err * pu[c] + hp.reg * qi[c];
      pu[c] -= hp.lr * gu;
      qi[c] -= hp.lr * gi;
    }
    bu[u] -= hp.lr * err;
    bi[i] -= hp.lr * err;
    mu[0] -= hp.lr * err;
  };

  auto draw_negative = [&](std::size_t u) -> std::optional<ItemId> {
    for (int tries = 0; tries < 16; ++tries) {
      const auto neg = static_cast<ItemId>(uniform_index(rng, num_items));
      if (!seen_by_row[u].count(neg)) return neg;
    }
    return std::nullopt;
  };

  // Training negatives are redrawn every epoch; the reported loss uses one
  // fixed probe set so that epochs are comparable.
  struct Example {
    std::size_t user;
    ItemId item;
    Real target;
  };
  std::vector<Example> probe;
  for (const auto& [u, i] : positives) {
    probe.push_back({u, i, hp.r_max});
    for (std::size_t n = 0; n < hp.negatives; ++n) {
      if (auto neg = draw_negative(u)) probe.push_back({u, *neg, 0.0});
    }
  }

  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    std::shuffle(positives.begin(), positives.end(), rng);
    for (const auto& [u, i] : positives) {
      sgd_pair(u, i, hp.r_max);
      for (std::size_t n = 0; n < hp.negatives; ++n) {
        if (auto neg = draw_negative(u)) sgd_pair(u, *neg, 0.0);
      }
    }
    Real total = 0.0;
    for (const auto& ex : probe) {
      const Real err = m.mf_score(ex.user, ex.item) - ex.target;
      total += err * err;
    }
    fr.epoch_loss.push_back(total / static_cast<Real>(probe.size()));
    if (!std::isfinite(fr.epoch_loss.back())) throw NumericError("MF fit diverged");
  }
  return fr;
}

// Next-item training with softmax cross-entropy over all items.
inline FitResult fit_sequential(const InteractionLog& log, std::size_t num_items,
                                const RewardModelHyperparams& hp, std::uint64_t seed) {
  Rng rng(seed);
  FitResult fr;
  RewardModel& m = fr.model;
  m.kind = RewardModelKind::sequential;
  m.r_max = hp.r_max;
  m.num_items = num_items;
  m.encoder = EncoderConfig{hp.dim, hp.max_seq_len, num_items};
  init_encoder_params(m.params, m.encoder, rng);
  Tensor out({num_items, hp.dim});
  fill_uniform(out, rng, -0.1, 0.1);
  m.params.add(reward_names::kOutputEmbedding, std::move(out));

  struct Sample {
    std::size_t seq;
    std::size_t len;
  };
  std::vector<Sample> samples;
  for (std::size_t s = 0; s < log.sequences.size(); ++s) {
    for (std::size_t t = 1; t < log.sequences[s].items.size(); ++t) samples.push_back({s, t});
  }
  Sgd sgd(hp.lr);
  const std::size_t d = hp.dim;
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    std::shuffle(samples.begin(), samples.end(), rng);
    Real total = 0.0;
    for (const auto& smp : samples) {
      const auto& items = log.sequences[smp.seq].items;
      std::span<const ItemId> prefix(items.data(), smp.len);
      const ItemId target = items[smp.len];
      m.params.zero_grad();
      const auto trace = encoder_forward(prefix, m.params, m.encoder);
      const Tensor& emb = m.params.value(reward_names::kOutputEmbedding);
      std::vector<Real> logits(num_items);
      matvec(emb, trace.output, logits);
      const auto logp = log_softmax(logits);
      total += -logp[target];
      std::vector<Real> g_logits(num_items);
      for (std::size_t i = 0; i < num_items; ++i) g_logits[i] = std::exp(logp[i]);
      g_logits[target] -= 1.0;
      std::vector<Real> g_state(d, 0.0);
      matvec_transposed_add(emb, g_logits, g_state);
      outer_add(m.params.grad(reward_names::kOutputEmbedding), g_logits, trace.output);
      encoder_backward(trace, g_state, m.params, m.encoder);
      sgd.step(m.params);
    }
    fr.epoch_loss.push_back(total / static_cast<Real>(std::max<std::size_t>(samples.size(), 1)));
    if (!std::isfinite(fr.epoch_loss.back())) throw NumericError("sequential fit diverged");
  }
  return fr;
}

}  // namespace detail

inline FitResult fit_reward_model(const InteractionLog& log, std::size_t num_items,
                                  RewardModelKind kind, const RewardModelHyperparams& hp,
                                  std::uint64_t seed) {
  if (log.sequences.empty() || log.interaction_count() == 0) {
    throw EnvError("cannot fit a reward model on an empty log");
  }
  if (num_items < 2) throw EnvError("reward model needs at least 2 items");
  return kind == RewardModelKind::matrix_factorization
             ? detail::fit_mf(log, num_items, hp, seed)
             : detail::fit_sequential(log, num_items, hp, seed);
}

struct EnvConfig {
  std::size_t max_steps = 30;
  Real quit_threshold = 0.75;
  Real r_max = 5.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_steps < 1) throw ConfigError("env max_steps must be >= 1");
    if (!(quit_threshold >= 0.0 && quit_threshold < r_max)) {
      throw ConfigError("env quit_threshold must lie in [0, r_max)");
    }
  }
};

struct EnvState {
  ItemSequence history;
  std::optional<UserId> user_id;
  std::size_t steps_taken = 0;
  bool done = false;

  bool operator==(const EnvState&) const = default;
};

struct StepResult {
  Real reward = 0.0;
  EnvState next;
  bool done = false;
};

// Immutable after construction; reset/step are const and thread-safe.
class Environment {
 public:
  Environment(std::shared_ptr<const RewardModel> model, InteractionLog starts, EnvConfig cfg)
      : model_(std::move(model)), starts_(std::move(starts)), cfg_(cfg) {
    cfg_.validate();
    if (!model_) throw EnvError("environment needs a reward model");
  }

  EnvState reset(std::uint64_t seed) const {
    if (starts_.sequences.empty()) throw EnvError("no sequences left to draw initial states from");
    Rng rng(seed);
    const auto& seq = starts_.sequences[uniform_index(rng, starts_.sequences.size())];
    if (seq.items.empty()) throw EnvError("empty start sequence");
    EnvState s;
    s.history = {seq.items.front()};
    if (model_->kind == RewardModelKind::matrix_factorization) s.user_id = seq.user_id;
    return s;
  }

  StepResult step(const EnvState& state, ItemId action) const {
    if (state.done) throw EnvError("step on a finished episode");
    if (action >= model_->num_items) {
      throw EnvError("action " + std::to_string(action) + " out of range");
    }
    StepResult r;
    r.reward = std::min(model_->score({state.user_id, state.history}, action), cfg_.r_max);
    r.next = state;
    r.next.history.push_back(action);
    r.next.steps_taken += 1;
    r.done = r.reward < cfg_.quit_threshold || r.next.steps_taken >= cfg_.max_steps;
    r.next.done = r.done;
    return r;
  }

  std::size_t num_items() const { return model_->num_items; }
  const EnvConfig& config() const { return cfg_; }
  const RewardModel& reward_model() const { return *model_; }
  const InteractionLog& starts() const { return starts_; }

 private:
  std::shared_ptr<const RewardModel> model_;
  InteractionLog starts_;
  EnvConfig cfg_;
};

}  // namespace ialp
