#pragma once

#include <functional>
#include <span>
#include <thread>
#include <vector>

#include "ialp/environment.hpp"

namespace ialp {

struct EpisodeRecord {
  Real return_R = 0.0;
  std::size_t length_Len = 0;
  Real avg_reward = 0.0;
  std::size_t episode_index = 0;
  std::size_t global_step = 0;

  static EpisodeRecord make(Real ret, std::size_t len, std::size_t index, std::size_t step) {
    if (len == 0) throw EnvError("episode length must be >= 1");
    return {ret, len, ret / static_cast<Real>(len), index, step};
  }
  bool operator==(const EpisodeRecord&) const = default;
};

struct Metrics {
  Real R = 0.0;
  Real Len = 0.0;
  Real R_avg = 0.0;
};

// Means over episodes; R_avg is the mean of per-episode R_i / Len_i.
inline Metrics compute_metrics(std::span<const EpisodeRecord> episodes) {
  if (episodes.empty()) throw EnvError("metrics need at least one episode");
  Metrics m;
  for (const auto& e : episodes) {
    m.R += e.return_R;
    m.Len += static_cast<Real>(e.length_Len);
    m.R_avg += e.return_R / static_cast<Real>(e.length_Len);
  }
  const Real n = static_cast<Real>(episodes.size());
  m.R /= n;
  m.Len /= n;
  m.R_avg /= n;
  return m;
}

// Deterministic action rule over the visible history. Must be safe to call
// concurrently when evaluation uses several workers.
using GreedyPolicy = std::function<ItemId(std::span<const ItemId> history)>;

struct Evaluation {
  Metrics metrics;
  std::vector<EpisodeRecord> episodes;
};

inline EpisodeRecord rollout(const Environment& env, const GreedyPolicy& policy,
                             std::uint64_t reset_seed, std::size_t index) {
  EnvState s = env.reset(reset_seed);
  Real ret = 0.0;
  while (!s.done) {
    auto r = env.step(s, policy(s.history));
    ret += r.reward;
    s = std::move(r.next);
  }
  return EpisodeRecord::make(ret, s.steps_taken, index, s.steps_taken);
}

// Episode i starts from reset(derive_seed(seed, i)); results are merged in
// episode order, so worker count does not change the outcome.
inline Evaluation evaluate(const GreedyPolicy& policy, const Environment& env,
                           std::size_t num_episodes, std::uint64_t seed,
                           std::size_t workers = 1) {
  if (num_episodes == 0) throw EnvError("evaluate needs num_episodes >= 1");
  Evaluation ev;
  ev.episodes.resize(num_episodes);
  workers = std::max<std::size_t>(1, std::min(workers, num_episodes));
  auto run = [&](std::size_t w) {
    for (std::size_t i = w; i < num_episodes; i += workers) {
      ev.episodes[i] = rollout(env, policy, derive_seed(seed, i), i);
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          run(w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  std::size_t step = 0;
  for (auto& e : ev.episodes) {
    step += e.length_Len;
    e.global_step = step;
  }
  ev.metrics = compute_metrics(ev.episodes);
  return ev;
}

}  // namespace ialp
