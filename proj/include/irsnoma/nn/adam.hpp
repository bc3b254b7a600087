#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "irsnoma/nn/mlp.hpp"

namespace irsnoma::nn {

enum class Direction { minimize, maximize };

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected first/second moment accumulators shaped like the network.
struct OptimizerState {
  AdamConfig config;
  MlpParams first;
  MlpParams second;
  std::int64_t step = 0;

  OptimizerState() = default;
  OptimizerState(const MlpParams& shape, AdamConfig cfg)
      : config(cfg), first(zeros_like(shape)), second(zeros_like(shape)) {}
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One adaptive-moment step. Throws NonFiniteError before touching anything
/// if a gradient entry is NaN or infinite.
inline void optimizer_step(MlpParams& params, const MlpParams& grads, OptimizerState& opt,
                           Direction direction) {
  auto p = trainable_views(params);
  auto g = trainable_views(grads);
  auto m = trainable_views(opt.first);
  auto v = trainable_views(opt.second);
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size())
    throw std::invalid_argument("optimizer_step: gradient or state shapes do not match");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i].size() != p[i].size() || m[i].size() != p[i].size() || v[i].size() != p[i].size())
      throw std::invalid_argument("optimizer_step: tensor size mismatch");
    for (double x : g[i])
      if (!std::isfinite(x)) throw NonFiniteError("optimizer_step: non-finite gradient");
  }

  const AdamConfig& c = opt.config;
  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  const double sign = direction == Direction::maximize ? -1.0 : 1.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p[i].size(); ++j) {
      const double gj = sign * g[i][j];
      m[i][j] = c.beta1 * m[i][j] + (1.0 - c.beta1) * gj;
      v[i][j] = c.beta2 * v[i][j] + (1.0 - c.beta2) * gj * gj;
      const double m_hat = m[i][j] / bias1;
      const double v_hat = v[i][j] / bias2;
      p[i][j] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

}  // namespace irsnoma::nn
