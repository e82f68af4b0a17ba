#pragma once

// Actor-critic recommendation agent. The actor maps the encoded state to a
// softmax over all items; the critic maps the same state to one Q-value per
// item. Losses per transition:
//
//   A        = r + gamma * max_a' Q(s', a') - Q(s, a)      (bootstrap 0 if done)
//   L_critic = A^2                   (TD target held constant)
//   L_actor  = -log pi(a | s) * A    (A held constant)

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "ialp/nn.hpp"
#include "ialp/state_encoder.hpp"

namespace ialp {

inline constexpr Real kLogProbFloor = -30.0;

struct AgentConfig {
  EncoderConfig encoder;
  Real gamma = 0.9;

  std::size_t num_items() const { return encoder.num_items; }
  void validate() const {
    encoder.validate();
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  }
};

namespace agent_names {
inline const std::string kActorWeight = "actor.weight";
inline const std::string kActorBias = "actor.bias";
inline const std::string kCriticWeight = "critic.weight";
inline const std::string kCriticBias = "critic.bias";
}  // namespace agent_names

struct AgentBundle {
  AgentConfig config;
  ParamSet params;

  static AgentBundle create(const AgentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    AgentBundle b;
    b.config = cfg;
    Rng rng(seed);
    init_encoder_params(b.params, cfg.encoder, rng);
    const std::size_t n = cfg.num_items(), d = cfg.encoder.embed_dim;
    Tensor actor({n, d}), critic({n, d});
    fill_uniform(actor, rng, -0.1, 0.1);
    fill_uniform(critic, rng, -0.1, 0.1);
    b.params.add(agent_names::kActorWeight, std::move(actor));
    b.params.add(agent_names::kActorBias, Tensor({n}));
    b.params.add(agent_names::kCriticWeight, std::move(critic));
    b.params.add(agent_names::kCriticBias, Tensor({n}));
    return b;
  }

  StateVector encode(std::span<const ItemId> history) const {
    return ialp::encode(history, params, config.encoder);
  }
};

struct Transition {
  ItemSequence state_items;
  ItemId action = 0;
  Real reward = 0.0;
  ItemSequence next_items;
  bool done = false;
};

using Batch = std::vector<Transition>;

inline std::vector<Real> affine_head(const StateVector& state, const ParamSet& params,
                                     const std::string& weight, const std::string& bias) {
  const Tensor& w = params.value(weight);
  const Tensor& b = params.value(bias);
  std::vector<Real> out(w.rows());
  matvec(w, state, out);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

inline std::vector<Real> actor_logits(const StateVector& state, const AgentBundle& bundle) {
  auto logits = affine_head(state, bundle.params, agent_names::kActorWeight,
                            agent_names::kActorBias);
  require_finite(logits, "actor logits");
  return logits;
}

inline std::vector<Real> action_distribution(const StateVector& state, const AgentBundle& bundle) {
  return softmax(actor_logits(state, bundle));
}

inline std::vector<Real> q_values(const StateVector& state, const AgentBundle& bundle) {
  auto q = affine_head(state, bundle.params, agent_names::kCriticWeight,
                       agent_names::kCriticBias);
  require_finite(q, "critic output");
  return q;
}

inline void check_transition(const Transition& t, const AgentBundle& bundle) {
  if (t.action >= bundle.config.num_items()) {
    throw DataError("transition action " + std::to_string(t.action) + " out of range");
  }
  if (!std::isfinite(t.reward)) throw NumericError("non-finite reward in transition");
}

// r + gamma * max_a' Q(s', a'), with zero bootstrap for terminal transitions.
// The bootstrap uses `target_net` when given, else the live critic.
inline Real td_target(const Transition& t, const AgentBundle& bundle,
                      const AgentBundle* target_net = nullptr) {
  Real target = t.reward;
  if (!t.done && bundle.config.gamma != 0.0) {
    const AgentBundle& net = target_net ? *target_net : bundle;
    const auto next_q = q_values(net.encode(t.next_items), net);
    target += bundle.config.gamma * *std::max_element(next_q.begin(), next_q.end());
  }
  return target;
}

inline Real advantage(const Transition& t, const AgentBundle& bundle) {
  check_transition(t, bundle);
  const auto q = q_values(bundle.encode(t.state_items), bundle);
  return td_target(t, bundle) - q[t.action];
}

inline Real critic_loss(const Transition& t, const AgentBundle& bundle) {
  const Real a = advantage(t, bundle);
  return a * a;
}

inline Real clamped_log(Real p) {
  if (p <= 0.0) return kLogProbFloor;
  return std::max(std::log(p), kLogProbFloor);
}

// -log pi(a|s) scaled by the advantage (both evaluated at current params).
inline Real actor_loss(const Transition& t, const AgentBundle& bundle) {
  check_transition(t, bundle);
  const Real adv = advantage(t, bundle);
  const auto logp = log_softmax(actor_logits(bundle.encode(t.state_items), bundle));
  return -std::max(logp[t.action], kLogProbFloor) * adv;
}

// Unscaled -log pi(a|s); logging only.
inline Real actor_nll(const Transition& t, const AgentBundle& bundle) {
  check_transition(t, bundle);
  const auto logp = log_softmax(actor_logits(bundle.encode(t.state_items), bundle));
  return -std::max(logp[t.action], kLogProbFloor);
}

// Which terms contribute to a gradient accumulation.
struct LossTerms {
  bool actor = true;
  bool critic = true;
  // Replaces the TD advantage as the actor-loss multiplier (REINFORCE).
  std::optional<Real> actor_scale;
  // Mixture partner for the adaptive scheme: the actor term becomes
  // -log((1-alpha) pi_frozen(a|s) + alpha pi(a|s)) * A, differentiated
  // through this bundle's policy only.
  const AgentBundle* frozen = nullptr;
  Real alpha = 1.0;
  // Optional frozen copy used for the TD bootstrap.
  const AgentBundle* target_net = nullptr;
};

struct LossValues {
  Real actor = 0.0;
  Real critic = 0.0;
  Real advantage = 0.0;
};

// Adds weight * d(L_actor + L_critic)/d(params) into bundle.params' grads.
inline LossValues accumulate_gradients(const Transition& t, AgentBundle& bundle, Real weight,
                                       const LossTerms& terms = {}) {
  check_transition(t, bundle);
  const EncoderTrace trace = encoder_forward(t.state_items, bundle.params, bundle.config.encoder);
  const StateVector& s = trace.output;
  const std::size_t n = bundle.config.num_items();
  const std::size_t d = bundle.config.encoder.embed_dim;

  LossValues out;
  std::vector<Real> g_state(d, 0.0);

  const auto q = q_values(s, bundle);
  const Real adv = (terms.critic || !terms.actor_scale)
                        ? td_target(t, bundle, terms.target_net) - q[t.action]
                        : 0.0;
  out.advantage = adv;

  if (terms.critic) {
    out.critic = adv * adv;
    // d/dQ(s,a) of (target - Q)^2 = -2 * adv
    const Real g_q = -2.0 * adv * weight;
    auto w_row = bundle.params.value(agent_names::kCriticWeight).row(t.action);
    auto gw_row = bundle.params.grad(agent_names::kCriticWeight).row(t.action);
    for (std::size_t c = 0; c < d; ++c) {
      gw_row[c] += g_q * s[c];
      g_state[c] += g_q * w_row[c];
    }
    bundle.params.grad(agent_names::kCriticBias)[t.action] += g_q;
  }

  if (terms.actor) {
    const Real scale = terms.actor_scale.value_or(adv);
    const auto logits = actor_logits(s, bundle);
    const auto probs = softmax(logits);
    std::vector<Real> g_logits(n, 0.0);
    if (terms.frozen == nullptr) {
      const Real logp = log_softmax(logits)[t.action];
      out.actor = -std::max(logp, kLogProbFloor) * scale;
      if (logp > kLogProbFloor) {
        for (std::size_t i = 0; i < n; ++i) g_logits[i] = scale * probs[i] * weight;
        g_logits[t.action] -= scale * weight;
      }
    } else {
      const auto frozen_probs = action_distribution(terms.frozen->encode(t.state_items),
                                                    *terms.frozen);
      const Real mixed =
          (1.0 - terms.alpha) * frozen_probs[t.action] + terms.alpha * probs[t.action];
      out.actor = -clamped_log(mixed) * scale;
      if (mixed > 0.0 && std::log(mixed) > kLogProbFloor) {
        // d(-log mixed)/d logit_i = -alpha * p_a * (1[i=a] - p_i) / mixed
        const Real coeff = -scale * terms.alpha * probs[t.action] / mixed * weight;
        for (std::size_t i = 0; i < n; ++i) g_logits[i] = -coeff * probs[i];
        g_logits[t.action] += coeff;
      }
    }
    Tensor& gw = bundle.params.grad(agent_names::kActorWeight);
    Tensor& gb = bundle.params.grad(agent_names::kActorBias);
    outer_add(gw, g_logits, s);
    for (std::size_t i = 0; i < n; ++i) gb[i] += g_logits[i];
    matvec_transposed_add(bundle.params.value(agent_names::kActorWeight), g_logits, g_state);
  }

  encoder_backward(trace, g_state, bundle.params, bundle.config.encoder);
  return out;
}

struct UpdateResult {
  Real actor_loss_mean = 0.0;
  Real critic_loss_mean = 0.0;
};

// Mean of L_actor + L_critic over the batch, one optimizer step.
inline UpdateResult update(const Batch& batch, AgentBundle& bundle, Sgd& optimizer,
                           const LossTerms& terms = {}) {
  if (batch.empty()) throw NumericError("update on empty batch");
  bundle.params.zero_grad();
  UpdateResult r;
  const Real w = 1.0 / static_cast<Real>(batch.size());
  for (const auto& t : batch) {
    const auto v = accumulate_gradients(t, bundle, w, terms);
    r.actor_loss_mean += v.actor * w;
    r.critic_loss_mean += v.critic * w;
  }
  if (!std::isfinite(r.actor_loss_mean) || !std::isfinite(r.critic_loss_mean)) {
    throw NumericError("non-finite loss in update");
  }
  optimizer.step(bundle.params);
  return r;
}

inline UpdateResult update(const Batch& batch, AgentBundle& bundle, Real lr) {
  Sgd sgd(lr);
  return update(batch, bundle, sgd);
}

}  // namespace ialp
