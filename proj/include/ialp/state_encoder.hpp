#pragma once

// Sequence-to-state encoder: item embeddings plus learned positions fed
// through one causal single-head self-attention block with a residual
// connection. The state is the block output at the most recent position.
//
// Positions are counted from the oldest item inside the (truncated) window,
// so a prefix is encoded exactly as the same positions inside any longer
// sequence, and left padding never changes the output.

#include <cmath>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ialp/nn.hpp"

namespace ialp {

struct EncoderConfig {
  std::size_t embed_dim = 64;
  std::size_t max_seq_len = 10;
  std::size_t num_items = 0;

  void validate() const {
    if (embed_dim < 2) throw ConfigError("encoder embed_dim must be >= 2");
    if (max_seq_len < 1) throw ConfigError("encoder max_seq_len must be >= 1");
    if (num_items < 2) throw ConfigError("encoder num_items must be >= 2");
  }
};

using StateVector = std::vector<Real>;

namespace encoder_names {
inline const std::string kItemEmbedding = "encoder.item_embedding";
inline const std::string kPositionEmbedding = "encoder.position_embedding";
inline const std::string kQuery = "encoder.query";
inline const std::string kKey = "encoder.key";
inline const std::string kValue = "encoder.value";
}  // namespace encoder_names

// Embeddings ~ U(-0.1, 0.1); projections = I + U(-noise, noise).
inline void init_encoder_params(ParamSet& params, const EncoderConfig& cfg, Rng& rng,
                                Real projection_noise = 0.01) {
  cfg.validate();
  const std::size_t d = cfg.embed_dim;
  Tensor items({cfg.num_items, d});
  fill_uniform(items, rng, -0.1, 0.1);
  Tensor positions({cfg.max_seq_len, d});
  fill_uniform(positions, rng, -0.1, 0.1);
  params.add(encoder_names::kItemEmbedding, std::move(items));
  params.add(encoder_names::kPositionEmbedding, std::move(positions));
  for (const auto* name :
       {&encoder_names::kQuery, &encoder_names::kKey, &encoder_names::kValue}) {
    Tensor w({d, d});
    if (projection_noise > 0.0) fill_uniform(w, rng, -projection_noise, projection_noise);
    for (std::size_t i = 0; i < d; ++i) w.at(i, i) += 1.0;
    params.add(*name, std::move(w));
  }
}

// Strips left padding, validates ids, and keeps the most recent window.
inline ItemSequence effective_window(std::span<const ItemId> sequence,
                                     const EncoderConfig& cfg) {
  std::size_t first = 0;
  while (first < sequence.size() && sequence[first] == kPaddingItem) ++first;
  if (first == sequence.size()) throw DataError("cannot encode an empty sequence");
  for (std::size_t i = first; i < sequence.size(); ++i) {
    if (sequence[i] == kPaddingItem) throw DataError("padding inside a sequence");
    if (sequence[i] >= cfg.num_items) {
      throw DataError("item id " + std::to_string(sequence[i]) + " out of range");
    }
  }
  const std::size_t len = sequence.size() - first;
  const std::size_t start = first + (len > cfg.max_seq_len ? len - cfg.max_seq_len : 0);
  return ItemSequence(sequence.begin() + static_cast<std::ptrdiff_t>(start), sequence.end());
}

// Forward intermediates for the last position, kept for backpropagation.
struct EncoderTrace {
  ItemSequence window;
  std::vector<std::vector<Real>> inputs;  // x_j = item + position
  std::vector<std::vector<Real>> keys;
  std::vector<std::vector<Real>> values;
  std::vector<Real> query;
  std::vector<Real> attention;
  StateVector output;
};

inline EncoderTrace encoder_forward(std::span<const ItemId> sequence, const ParamSet& params,
                                    const EncoderConfig& cfg) {
  EncoderTrace t;
  t.window = effective_window(sequence, cfg);
  const std::size_t d = cfg.embed_dim;
  const std::size_t len = t.window.size();
  const Tensor& items = params.value(encoder_names::kItemEmbedding);
  const Tensor& positions = params.value(encoder_names::kPositionEmbedding);
  const Tensor& wq = params.value(encoder_names::kQuery);
  const Tensor& wk = params.value(encoder_names::kKey);
  const Tensor& wv = params.value(encoder_names::kValue);

  t.inputs.assign(len, std::vector<Real>(d));
  t.keys.assign(len, std::vector<Real>(d));
  t.values.assign(len, std::vector<Real>(d));
  for (std::size_t j = 0; j < len; ++j) {
    auto e = items.row(t.window[j]);
    auto p = positions.row(j);
    for (std::size_t c = 0; c < d; ++c) t.inputs[j][c] = e[c] + p[c];
    matvec(wk, t.inputs[j], t.keys[j]);
    matvec(wv, t.inputs[j], t.values[j]);
  }
  const auto& last = t.inputs[len - 1];
  t.query.assign(d, 0.0);
  matvec(wq, last, t.query);

  const Real scale = 1.0 / std::sqrt(static_cast<Real>(d));
  std::vector<Real> scores(len);
  for (std::size_t j = 0; j < len; ++j) scores[j] = dot(t.query, t.keys[j]) * scale;
  t.attention = softmax(scores);

  t.output = last;
  for (std::size_t j = 0; j < len; ++j) {
    for (std::size_t c = 0; c < d; ++c) t.output[c] += t.attention[j] * t.values[j][c];
  }
  require_finite(t.output, "encoder output");
  return t;
}

// Accumulates d(loss)/d(params) given d(loss)/d(state) into params' grads.
inline void encoder_backward(const EncoderTrace& t, std::span<const Real> grad_state,
                             ParamSet& params, const EncoderConfig& cfg) {
  const std::size_t d = cfg.embed_dim;
  const std::size_t len = t.window.size();
  const std::size_t last = len - 1;
  const Tensor& wq = params.value(encoder_names::kQuery);
  const Tensor& wk = params.value(encoder_names::kKey);
  const Tensor& wv = params.value(encoder_names::kValue);
  Tensor& g_items = params.grad(encoder_names::kItemEmbedding);
  Tensor& g_pos = params.grad(encoder_names::kPositionEmbedding);
  Tensor& g_wq = params.grad(encoder_names::kQuery);
  Tensor& g_wk = params.grad(encoder_names::kKey);
  Tensor& g_wv = params.grad(encoder_names::kValue);

  std::vector<std::vector<Real>> g_inputs(len, std::vector<Real>(d, 0.0));
  for (std::size_t c = 0; c < d; ++c) g_inputs[last][c] += grad_state[c];

  std::vector<Real> g_attn(len);
  for (std::size_t j = 0; j < len; ++j) g_attn[j] = dot(grad_state, t.values[j]);
  const Real mean = dot(t.attention, g_attn);
  const Real scale = 1.0 / std::sqrt(static_cast<Real>(d));

  std::vector<Real> g_query(d, 0.0);
  std::vector<Real> g_vec(d);
  for (std::size_t j = 0; j < len; ++j) {
    const Real g_score = t.attention[j] * (g_attn[j] - mean) * scale;
    // value path
    for (std::size_t c = 0; c < d; ++c) g_vec[c] = t.attention[j] * grad_state[c];
    outer_add(g_wv, g_vec, t.inputs[j]);
    matvec_transposed_add(wv, g_vec, g_inputs[j]);
    // key path
    for (std::size_t c = 0; c < d; ++c) g_vec[c] = g_score * t.query[c];
    outer_add(g_wk, g_vec, t.inputs[j]);
    matvec_transposed_add(wk, g_vec, g_inputs[j]);
    for (std::size_t c = 0; c < d; ++c) g_query[c] += g_score * t.keys[j][c];
  }
  outer_add(g_wq, g_query, t.inputs[last]);
  matvec_transposed_add(wq, g_query, g_inputs[last]);

  for (std::size_t j = 0; j < len; ++j) {
    auto gi = g_items.row(t.window[j]);
    auto gp = g_pos.row(j);
    for (std::size_t c = 0; c < d; ++c) {
      gi[c] += g_inputs[j][c];
      gp[c] += g_inputs[j][c];
    }
  }
}

inline StateVector encode(std::span<const ItemId> sequence, const ParamSet& params,
                          const EncoderConfig& cfg) {
  return encoder_forward(sequence, params, cfg).output;
}

// Outputs at every position of the window under causal masking.
inline std::vector<StateVector> encode_all_positions(std::span<const ItemId> sequence,
                                                     const ParamSet& params,
                                                     const EncoderConfig& cfg) {
  const ItemSequence window = effective_window(sequence, cfg);
  const std::size_t d = cfg.embed_dim;
  const std::size_t len = window.size();
  const Tensor& items = params.value(encoder_names::kItemEmbedding);
  const Tensor& positions = params.value(encoder_names::kPositionEmbedding);
  std::vector<std::vector<Real>> x(len, std::vector<Real>(d)), q = x, k = x, v = x;
  for (std::size_t j = 0; j < len; ++j) {
    for (std::size_t c = 0; c < d; ++c) x[j][c] = items.at(window[j], c) + positions.at(j, c);
    matvec(params.value(encoder_names::kQuery), x[j], q[j]);
    matvec(params.value(encoder_names::kKey), x[j], k[j]);
    matvec(params.value(encoder_names::kValue), x[j], v[j]);
  }
  const Real scale = 1.0 / std::sqrt(static_cast<Real>(d));
  std::vector<StateVector> out(len);
  for (std::size_t i = 0; i < len; ++i) {
    std::vector<Real> scores(i + 1);
    for (std::size_t j = 0; j <= i; ++j) scores[j] = dot(q[i], k[j]) * scale;
    const auto attn = softmax(scores);
    out[i] = x[i];
    for (std::size_t j = 0; j <= i; ++j) {
      for (std::size_t c = 0; c < d; ++c) out[i][c] += attn[j] * v[j][c];
    }
  }
  return out;
}

// Parallel map of encode(); each output slot is written by exactly one worker.
inline std::vector<StateVector> encode_batch(const std::vector<ItemSequence>& sequences,
                                             const ParamSet& params, const EncoderConfig& cfg,
                                             std::size_t workers = 1) {
  std::vector<StateVector> out(sequences.size());
  workers = std::max<std::size_t>(1, std::min(workers, sequences.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < sequences.size(); ++i) out[i] = encode(sequences[i], params, cfg);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < sequences.size(); i += workers) {
          out[i] = encode(sequences[i], params, cfg);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace ialp
