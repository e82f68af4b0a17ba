#pragma once

// Numeric substrate: tensors, named parameter sets with gradient
// accumulators, softmax and sampling, SGD, and a central-difference
// gradient oracle.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ialp/common.hpp"

namespace ialp {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<Real> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> extents, Real fill = 0.0)
      : shape(std::move(extents)), data(element_count(shape), fill) {}

  static std::size_t element_count(const std::vector<std::size_t>& extents) {
    return std::accumulate(extents.begin(), extents.end(), std::size_t{1},
                           std::multiplies<>());
  }

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  Real& operator[](std::size_t i) { return data[i]; }
  Real operator[](std::size_t i) const { return data[i]; }
  Real& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  Real at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  std::span<Real> row(std::size_t r) { return {data.data() + r * cols(), cols()}; }
  std::span<const Real> row(std::size_t r) const {
    return {data.data() + r * cols(), cols()};
  }

  void fill(Real v) { std::fill(data.begin(), data.end(), v); }
  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](Real v) { return std::isfinite(v); });
  }
  bool operator==(const Tensor&) const = default;
};

struct Param {
  Tensor value;
  Tensor grad;
};

// Named parameters in deterministic (lexicographic) order.
class ParamSet {
 public:
  void add(const std::string& name, Tensor value) {
    if (params_.count(name)) throw NumericError("duplicate parameter '" + name + "'");
    Tensor grad(value.shape, 0.0);
    params_.emplace(name, Param{std::move(value), std::move(grad)});
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Tensor& value(const std::string& name) { return lookup(name).value; }
  const Tensor& value(const std::string& name) const { return lookup(name).value; }
  Tensor& grad(const std::string& name) { return lookup(name).grad; }
  const Tensor& grad(const std::string& name) const { return lookup(name).grad; }

  void zero_grad() {
    for (auto& [_, p] : params_) p.grad.fill(0.0);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, _] : params_) out.push_back(name);
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.value.size();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  // Compares parameter values only.
  bool same_values(const ParamSet& other) const {
    if (params_.size() != other.params_.size()) return false;
    for (const auto& [name, p] : params_) {
      auto it = other.params_.find(name);
      if (it == other.params_.end() || !(it->second.value == p.value)) return false;
    }
    return true;
  }

 private:
  Param& lookup(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw NumericError("unknown parameter '" + name + "'");
    return it->second;
  }
  const Param& lookup(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw NumericError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::map<std::string, Param> params_;
};

inline void require_finite(std::span<const Real> values, const char* what) {
  for (Real v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
  }
}

inline std::vector<Real> softmax(std::span<const Real> logits) {
  require_finite(logits, "softmax input");
  if (logits.empty()) throw NumericError("softmax of empty vector");
  const Real peak = *std::max_element(logits.begin(), logits.end());
  std::vector<Real> out(logits.size());
  Real total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (Real& v : out) v /= total;
  return out;
}

inline std::vector<Real> log_softmax(std::span<const Real> logits) {
  require_finite(logits, "log_softmax input");
  if (logits.empty()) throw NumericError("log_softmax of empty vector");
  const Real peak = *std::max_element(logits.begin(), logits.end());
  Real total = 0.0;
  for (Real v : logits) total += std::exp(v - peak);
  const Real log_norm = peak + std::log(total);
  std::vector<Real> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_norm;
  return out;
}

inline void validate_distribution(std::span<const Real> probs, Real tolerance = 1e-6) {
  if (probs.empty()) throw NumericError("empty probability vector");
  Real total = 0.0;
  for (Real p : probs) {
    if (!std::isfinite(p) || p < 0.0) throw NumericError("invalid probability entry");
    total += p;
  }
  if (std::abs(total - 1.0) > tolerance) {
    throw NumericError("probabilities sum to " + std::to_string(total));
  }
}

// Inverse-CDF draw over the given order.
inline std::size_t sample_categorical(std::span<const Real> probs, Rng& rng) {
  validate_distribution(probs);
  const Real u = uniform01(rng);
  Real cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  return last_positive;
}

inline std::size_t argmax(std::span<const Real> values) {
  return static_cast<std::size_t>(
      std::distance(values.begin(), std::max_element(values.begin(), values.end())));
}

// p <- p - lr * (g + momentum * v); gradients are zeroed afterwards. With
// clip_norm > 0 the gradient is first rescaled so its global L2 norm is at
// most clip_norm.
class Sgd {
 public:
  explicit Sgd(Real lr = 1e-3, Real momentum = 0.0, Real clip_norm = 0.0)
      : lr_(lr), momentum_(momentum), clip_norm_(clip_norm) {}

  Real learning_rate() const { return lr_; }
  void set_learning_rate(Real lr) { lr_ = lr; }
  Real clip_norm() const { return clip_norm_; }

  void step(ParamSet& params) {
    Real sq = 0.0;
    for (auto& [name, p] : params) {
      if (!p.grad.all_finite()) throw NumericError("non-finite gradient for '" + name + "'");
      for (Real g : p.grad.data) sq += g * g;
    }
    if (clip_norm_ > 0.0 && sq > clip_norm_ * clip_norm_) {
      const Real scale = clip_norm_ / std::sqrt(sq);
      for (auto& [name, p] : params) {
        for (Real& g : p.grad.data) g *= scale;
      }
    }
    for (auto& [name, p] : params) {
      if (momentum_ != 0.0) {
        auto& v = velocity_[name];
        if (v.size() != p.grad.size()) v.assign(p.grad.size(), 0.0);
        for (std::size_t i = 0; i < v.size(); ++i) {
          v[i] = momentum_ * v[i] + p.grad[i];
          p.value[i] -= lr_ * v[i];
        }
      } else if (lr_ != 0.0) {
        for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr_ * p.grad[i];
      }
      p.grad.fill(0.0);
    }
  }

 private:
  Real lr_;
  Real momentum_;
  Real clip_norm_;
  std::map<std::string, std::vector<Real>> velocity_;
};

inline void optimizer_step(ParamSet& params, Real lr) { Sgd(lr).step(params); }

// Central differences for every scalar parameter. The returned set carries
// the numeric gradient in its value tensors. `params` is restored on exit.
inline ParamSet finite_diff_grad(const std::function<Real(const ParamSet&)>& loss_fn,
                                 ParamSet& params, Real eps = 1e-5) {
  if (!(eps > 0.0)) throw NumericError("finite difference step must be positive");
  ParamSet out;
  for (auto& [name, p] : params) {
    Tensor g(p.value.shape, 0.0);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const Real saved = p.value[i];
      p.value[i] = saved + eps;
      const Real up = loss_fn(params);
      p.value[i] = saved - eps;
      const Real down = loss_fn(params);
      p.value[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("loss is non-finite while differencing '" + name + "'");
      }
      g[i] = (up - down) / (2.0 * eps);
    }
    out.add(name, std::move(g));
  }
  return out;
}

struct GradientCheck {
  bool ok = true;
  Real worst_relative = 0.0;
  std::string worst_name;
  std::size_t worst_index = 0;
};

// Elementwise agreement: |a-n| <= max(rel_tol * max(|a|,|n|), abs_floor).
inline GradientCheck compare_gradients(const ParamSet& analytic, const ParamSet& numeric,
                                       Real rel_tol = 1e-4, Real abs_floor = 1e-6) {
  GradientCheck result;
  for (const auto& [name, p] : analytic) {
    const Tensor& num = numeric.value(name);
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      const Real a = p.grad[i];
      const Real n = num[i];
      const Real diff = std::abs(a - n);
      const Real scale = std::max(std::abs(a), std::abs(n));
      const Real rel = scale > 0.0 ? diff / scale : 0.0;
      const bool close = diff <= std::max(rel_tol * scale, abs_floor);
      if (!close) result.ok = false;
      if (diff > abs_floor && rel > result.worst_relative) {
        result.worst_relative = rel;
        result.worst_name = name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

// Dense helpers over row-major [rows, cols] matrices.
inline void matvec(const Tensor& w, std::span<const Real> x, std::span<Real> out) {
  const std::size_t r = w.rows(), c = w.cols();
  for (std::size_t i = 0; i < r; ++i) {
    const Real* row = w.data.data() + i * c;
    Real acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
}

// out += W^T y
inline void matvec_transposed_add(const Tensor& w, std::span<const Real> y, std::span<Real> out) {
  const std::size_t r = w.rows(), c = w.cols();
  for (std::size_t i = 0; i < r; ++i) {
    const Real yi = y[i];
    if (yi == 0.0) continue;
    const Real* row = w.data.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) out[j] += row[j] * yi;
  }
}

// G += scale * y x^T
inline void outer_add(Tensor& g, std::span<const Real> y, std::span<const Real> x,
                      Real scale = 1.0) {
  const std::size_t r = g.rows(), c = g.cols();
  for (std::size_t i = 0; i < r; ++i) {
    const Real yi = y[i] * scale;
    if (yi == 0.0) continue;
    Real* row = g.data.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) row[j] += yi * x[j];
  }
}

inline Real dot(std::span<const Real> a, std::span<const Real> b) {
  Real acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline void fill_uniform(Tensor& t, Rng& rng, Real lo, Real hi) {
  std::uniform_real_distribution<Real> dist(lo, hi);
  for (Real& v : t.data) v = dist(rng);
}

}  // namespace ialp
