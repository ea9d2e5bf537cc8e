#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "tagforge/error.hpp"
#include "tagforge/numgrad/tape.hpp"
#include "tagforge/numgrad/tensor.hpp"

namespace tagforge::numgrad {

namespace detail {

inline void check_finite_grads(const std::vector<Parameter*>& params) {
  for (const Parameter* p : params) {
    if (p->grad.shape != p->value.shape) {
      throw Error(ErrorKind::Shape, "gradient of '" + p->name + "' has shape " + shape_str(p->grad.shape) +
                                        ", parameter has " + shape_str(p->value.shape));
    }
    if (!p->grad.all_finite()) throw Error(ErrorKind::Optimizer, "non-finite gradient for parameter '" + p->name + "'");
  }
}

}  // namespace detail

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  AdamWConfig config;
  std::size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One AdamW update with decoupled weight decay:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta).
/// Moment buffers are created on the first step.
inline void adamw_step(const std::vector<Parameter*>& params, AdamWState& state, double lr) {
  detail::check_finite_grads(params);
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.shape, 0.0);
      state.v.emplace_back(p->value.shape, 0.0);
    }
  }
  if (state.m.size() != params.size()) throw Error(ErrorKind::Optimizer, "AdamW state does not match parameter list");
  const AdamWConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    if (m.shape != p.value.shape) throw Error(ErrorKind::Optimizer, "AdamW moment shape mismatch for '" + p.name + "'");
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
      const double g = p.grad.data[i];
      m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * g;
      v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m.data[i] / bc1;
      const double v_hat = v.data[i] / bc2;
      p.value.data[i] -= lr * (m_hat / (std::sqrt(v_hat) + c.eps) + c.weight_decay * p.value.data[i]);
    }
  }
}

struct SgdMomentumState {
  double momentum = 0.9;
  std::vector<Tensor> velocity;
};

/// v <- mu v + g; theta <- theta - lr v.
inline void sgd_momentum_step(const std::vector<Parameter*>& params, SgdMomentumState& state, double lr) {
  detail::check_finite_grads(params);
  if (state.velocity.empty()) {
    for (const Parameter* p : params) state.velocity.emplace_back(p->value.shape, 0.0);
  }
  if (state.velocity.size() != params.size()) throw Error(ErrorKind::Optimizer, "SGD state does not match parameter list");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& v = state.velocity[k];
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
      v.data[i] = state.momentum * v.data[i] + p.grad.data[i];
      p.value.data[i] -= lr * v.data[i];
    }
  }
}

/// Linear ramp from 0 to base_lr over warmup_steps, then linear decay to 0 at
/// total_steps.
struct WarmupSchedule {
  double base_lr = 3e-5;
  std::size_t warmup_steps = 2500;
  std::size_t total_steps = 2500;

  WarmupSchedule() = default;
  WarmupSchedule(double base, std::size_t warmup, std::size_t total)
      : base_lr(base), warmup_steps(warmup), total_steps(total) {
    if (warmup_steps == 0 || warmup_steps > total_steps) {
      throw Error(ErrorKind::Schedule, "warmup_steps must satisfy 0 < warmup_steps <= total_steps (got " +
                                           std::to_string(warmup_steps) + " / " + std::to_string(total_steps) + ")");
    }
  }
};

inline double warmup_lr(const WarmupSchedule& s, std::size_t t) {
  if (t > s.total_steps) {
    throw Error(ErrorKind::Schedule, "step " + std::to_string(t) + " beyond total_steps " + std::to_string(s.total_steps));
  }
  if (t <= s.warmup_steps) {
    return s.base_lr * (static_cast<double>(t) / static_cast<double>(s.warmup_steps));
  }
  return s.base_lr * (static_cast<double>(s.total_steps - t) / static_cast<double>(s.total_steps - s.warmup_steps));
}

}  // namespace tagforge::numgrad
