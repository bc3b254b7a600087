#pragma once

// Small fully connected networks with optional batch normalization and exact
// backpropagation. Batches are column-major: each column is one sample.
//
// The first stage may split its input into several branches, each with its
// own affine map; branch outputs are summed before normalization. A critic
// Q(s, a) uses two branches (state, action); an actor uses one.

#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace irsnoma::nn {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { relu, tanh, identity };
enum class Mode { train, eval };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "identity";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

struct BatchNorm {
  Vector scale;
  Vector shift;
  Vector running_mean;
  Vector running_var;
  double eps = 1e-5;
  double momentum = 0.01;
};

struct Stage {
  std::vector<Matrix> weights;  // one per input branch, out x in_branch
  std::vector<Vector> biases;   // one per input branch
  std::optional<BatchNorm> norm;
  Activation activation = Activation::identity;

  Index out_width() const { return weights.front().rows(); }
};

struct MlpParams {
  std::vector<Index> branch_widths;
  std::vector<Stage> stages;

  Index input_width() const {
    Index w = 0;
    for (Index b : branch_widths) w += b;
    return w;
  }
  Index output_width() const { return stages.back().out_width(); }

  void validate() const {
    if (stages.empty() || branch_widths.empty())
      throw std::invalid_argument("mlp: network needs at least one stage and one input branch");
    Index in = 0;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const Stage& st = stages[s];
      const std::size_t branches = s == 0 ? branch_widths.size() : 1;
      if (st.weights.size() != branches || st.biases.size() != branches)
        throw std::invalid_argument("mlp: stage branch count mismatch");
      for (std::size_t b = 0; b < branches; ++b) {
        const Index expect_in = s == 0 ? branch_widths[b] : in;
        if (st.weights[b].cols() != expect_in || st.weights[b].rows() != st.out_width() ||
            st.biases[b].size() != st.out_width())
          throw std::invalid_argument("mlp: stage shapes do not chain");
      }
      if (st.norm) {
        const BatchNorm& bn = *st.norm;
        const Index w = st.out_width();
        if (bn.scale.size() != w || bn.shift.size() != w || bn.running_mean.size() != w ||
            bn.running_var.size() != w)
          throw std::invalid_argument("mlp: normalization shapes do not match stage width");
        if ((bn.running_var.array() <= 0.0).any())
          throw std::invalid_argument("mlp: running variance must be positive");
      }
      in = st.out_width();
    }
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (a.branch_widths != b.branch_widths || a.stages.size() != b.stages.size()) return false;
    for (std::size_t s = 0; s < a.stages.size(); ++s) {
      const Stage& x = a.stages[s];
      const Stage& y = b.stages[s];
      if (x.activation != y.activation || x.weights.size() != y.weights.size() ||
          x.norm.has_value() != y.norm.has_value())
        return false;
      for (std::size_t i = 0; i < x.weights.size(); ++i) {
        if (x.weights[i].rows() != y.weights[i].rows() ||
            x.weights[i].cols() != y.weights[i].cols() || x.weights[i] != y.weights[i] ||
            x.biases[i] != y.biases[i])
          return false;
      }
      if (x.norm) {
        const BatchNorm& p = *x.norm;
        const BatchNorm& q = *y.norm;
        if (p.scale != q.scale || p.shift != q.shift || p.running_mean != q.running_mean ||
            p.running_var != q.running_var || p.eps != q.eps || p.momentum != q.momentum)
          return false;
      }
    }
    return true;
  }
};

/// Deep copy. MlpParams has value semantics, so this is a plain copy; it
/// exists to name the target-network initialization step.
inline MlpParams clone_params(const MlpParams& p) { return p; }

/// Views over every learnable tensor in a fixed order: per stage, branch
/// weights, branch biases, then normalization scale and shift.
template <class P>
auto trainable_views(P& p) {
  using T = std::conditional_t<std::is_const_v<P>, const double, double>;
  std::vector<std::span<T>> v;
  for (auto& st : p.stages) {
    for (auto& w : st.weights) v.emplace_back(w.data(), static_cast<std::size_t>(w.size()));
    for (auto& b : st.biases) v.emplace_back(b.data(), static_cast<std::size_t>(b.size()));
    if (st.norm) {
      v.emplace_back(st.norm->scale.data(), static_cast<std::size_t>(st.norm->scale.size()));
      v.emplace_back(st.norm->shift.data(), static_cast<std::size_t>(st.norm->shift.size()));
    }
  }
  return v;
}

/// Running normalization statistics, in stage order (mean, var).
template <class P>
auto statistic_views(P& p) {
  using T = std::conditional_t<std::is_const_v<P>, const double, double>;
  std::vector<std::span<T>> v;
  for (auto& st : p.stages) {
    if (!st.norm) continue;
    auto& bn = *st.norm;
    v.emplace_back(bn.running_mean.data(), static_cast<std::size_t>(bn.running_mean.size()));
    v.emplace_back(bn.running_var.data(), static_cast<std::size_t>(bn.running_var.size()));
  }
  return v;
}

/// Same shapes as `p`, every learnable entry zero. Statistics are copied so
/// the result still validates.
inline MlpParams zeros_like(const MlpParams& p) {
  MlpParams z = p;
  for (auto view : trainable_views(z))
    for (double& x : view) x = 0.0;
  return z;
}

inline bool all_finite(const MlpParams& p) {
  for (auto view : trainable_views(p))
    for (double x : view)
      if (!std::isfinite(x)) return false;
  for (auto view : statistic_views(p))
    for (double x : view)
      if (!std::isfinite(x)) return false;
  return true;
}

struct StageSpec {
  Index width = 0;
  Activation activation = Activation::identity;
  bool batch_norm = false;
  double init_range = 0.0;  // 0 selects 1/sqrt(fan_in)
};

inline MlpParams make_mlp(std::vector<Index> branch_widths, const std::vector<StageSpec>& specs,
                          std::mt19937_64& rng) {
  MlpParams p;
  p.branch_widths = std::move(branch_widths);
  Index in = 0;
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const StageSpec& spec = specs[s];
    Stage st;
    st.activation = spec.activation;
    const std::vector<Index> fan_ins = s == 0 ? p.branch_widths : std::vector<Index>{in};
    for (Index fan_in : fan_ins) {
      const double r = spec.init_range > 0.0 ? spec.init_range
                                             : 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-r, r);
      Matrix w(spec.width, fan_in);
      for (Index j = 0; j < w.cols(); ++j)
        for (Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
      Vector b(spec.width);
      for (Index i = 0; i < b.size(); ++i) b[i] = u(rng);
      st.weights.push_back(std::move(w));
      st.biases.push_back(std::move(b));
    }
    if (spec.batch_norm) {
      st.norm = BatchNorm{Vector::Ones(spec.width), Vector::Zero(spec.width),
                          Vector::Zero(spec.width), Vector::Ones(spec.width)};
    }
    p.stages.push_back(std::move(st));
    in = spec.width;
  }
  p.validate();
  return p;
}

/// One hidden ReLU stage and a tanh output stage.
inline MlpParams make_actor(Index state_dim, Index action_dim, Index hidden, bool batch_norm,
                            std::mt19937_64& rng, double final_init = 3e-3) {
  return make_mlp({state_dim},
                  {{hidden, Activation::relu, batch_norm, 0.0},
                   {action_dim, Activation::tanh, false, final_init}},
                  rng);
}

/// State and action branches summed into one hidden ReLU stage, then a
/// linear scalar output.
inline MlpParams make_critic(Index state_dim, Index action_dim, Index hidden, bool batch_norm,
                             std::mt19937_64& rng, double final_init = 3e-3) {
  return make_mlp({state_dim, action_dim},
                  {{hidden, Activation::relu, batch_norm, 0.0},
                   {1, Activation::identity, false, final_init}},
                  rng);
}

struct StageCache {
  Matrix input;       // input to the affine map (stage 0: concatenated branches)
  Matrix pre_norm;    // affine output
  Matrix normalized;  // x_hat, empty without normalization
  Vector mean;        // statistics actually used
  Vector var;
  Matrix pre_act;     // after normalization, before activation
  Matrix output;
};

struct Cache {
  Mode mode = Mode::eval;
  Index batch = 0;
  std::vector<StageCache> stages;
};

struct ForwardResult {
  Matrix output;
  Cache cache;
};

namespace detail {

inline Matrix apply_activation(Activation a, const Matrix& x) {
  switch (a) {
    case Activation::relu: return x.cwiseMax(0.0);
    case Activation::tanh: return x.array().tanh().matrix();
    case Activation::identity: return x;
  }
  return x;
}

}  // namespace detail

/// Pure forward pass. Train mode normalizes with batch statistics (recorded
/// in the cache); eval mode uses the running statistics. Running statistics
/// are never touched here, see update_running_stats.
inline ForwardResult forward(const MlpParams& params, const Matrix& batch, Mode mode) {
  if (batch.rows() != params.input_width())
    throw std::invalid_argument("forward: input width " + std::to_string(batch.rows()) +
                                " does not match network input " +
                                std::to_string(params.input_width()));
  if (batch.cols() < 1) throw std::invalid_argument("forward: empty batch");
  ForwardResult res;
  res.cache.mode = mode;
  res.cache.batch = batch.cols();
  res.cache.stages.resize(params.stages.size());

  Matrix x = batch;
  for (std::size_t s = 0; s < params.stages.size(); ++s) {
    const Stage& st = params.stages[s];
    StageCache& c = res.cache.stages[s];
    c.pre_norm.resize(st.out_width(), x.cols());
    c.pre_norm.setZero();
    Index offset = 0;
    for (std::size_t b = 0; b < st.weights.size(); ++b) {
      const Index w = st.weights[b].cols();
      c.pre_norm.noalias() += st.weights[b] * x.middleRows(offset, w);
      c.pre_norm.colwise() += st.biases[b];
      offset += w;
    }
    if (st.norm) {
      const BatchNorm& bn = *st.norm;
      if (mode == Mode::train) {
        c.mean = c.pre_norm.rowwise().mean();
        c.var = (c.pre_norm.colwise() - c.mean).array().square().rowwise().mean();
      } else {
        c.mean = bn.running_mean;
        c.var = bn.running_var;
      }
      const Vector inv_std = (c.var.array() + bn.eps).rsqrt();
      c.normalized = (c.pre_norm.colwise() - c.mean).array().colwise() * inv_std.array();
      c.pre_act = (c.normalized.array().colwise() * bn.scale.array()).colwise() +
                  bn.shift.array();
    } else {
      c.pre_act = c.pre_norm;
    }
    c.output = detail::apply_activation(st.activation, c.pre_act);
    c.input = std::move(x);
    x = c.output;
  }
  res.output = std::move(x);
  return res;
}

/// Exponential moving average of the batch statistics recorded by a train
/// mode forward pass. Variance uses the unbiased batch estimate.
inline void update_running_stats(MlpParams& params, const Cache& cache) {
  if (cache.mode != Mode::train || cache.stages.size() != params.stages.size())
    throw std::invalid_argument("update_running_stats: cache is not from a train-mode pass");
  const double n = static_cast<double>(cache.batch);
  const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
  for (std::size_t s = 0; s < params.stages.size(); ++s) {
    if (!params.stages[s].norm) continue;
    BatchNorm& bn = *params.stages[s].norm;
    const StageCache& c = cache.stages[s];
    bn.running_mean = (1.0 - bn.momentum) * bn.running_mean + bn.momentum * c.mean;
    bn.running_var = (1.0 - bn.momentum) * bn.running_var + bn.momentum * unbias * c.var;
    bn.running_var = bn.running_var.cwiseMax(bn.eps);
  }
}

struct Gradients {
  MlpParams params;  // learnable entries hold dL/dtheta
  Matrix input;      // dL/dx, rows = input width
};

/// Exact gradients of the forward map recorded in `cache`.
inline Gradients backward(const MlpParams& params, const Cache& cache, const Matrix& output_grad) {
  if (cache.stages.size() != params.stages.size())
    throw std::invalid_argument("backward: cache does not belong to this network");
  for (std::size_t s = 0; s < params.stages.size(); ++s) {
    const StageCache& c = cache.stages[s];
    if (c.output.rows() != params.stages[s].out_width() || c.output.cols() != cache.batch ||
        (c.normalized.size() == 0 && params.stages[s].norm.has_value()))
      throw std::invalid_argument("backward: stale cache for stage " + std::to_string(s));
  }
  if (output_grad.rows() != params.output_width() || output_grad.cols() != cache.batch)
    throw std::invalid_argument("backward: output gradient shape mismatch");

  Gradients g{zeros_like(params), Matrix()};
  Matrix d = output_grad;
  for (std::size_t si = params.stages.size(); si-- > 0;) {
    const Stage& st = params.stages[si];
    const StageCache& c = cache.stages[si];
    Stage& gs = g.params.stages[si];

    switch (st.activation) {
      case Activation::relu: d = (c.pre_act.array() > 0.0).select(d, 0.0); break;
      case Activation::tanh: d = d.cwiseProduct((1.0 - c.output.array().square()).matrix()); break;
      case Activation::identity: break;
    }

    if (st.norm) {
      const BatchNorm& bn = *st.norm;
      BatchNorm& gbn = *gs.norm;
      gbn.scale = d.cwiseProduct(c.normalized).rowwise().sum();
      gbn.shift = d.rowwise().sum();
      const Vector inv_std = (c.var.array() + bn.eps).rsqrt();
      const Matrix dxhat = d.array().colwise() * bn.scale.array();
      if (cache.mode == Mode::train) {
        const double n = static_cast<double>(cache.batch);
        const Vector sum_dxhat = dxhat.rowwise().sum();
        const Vector sum_dxhat_xhat = dxhat.cwiseProduct(c.normalized).rowwise().sum();
        Matrix t = n * dxhat;
        t.colwise() -= sum_dxhat;
        t -= (c.normalized.array().colwise() * sum_dxhat_xhat.array()).matrix();
        d = (t.array().colwise() * (inv_std.array() / n)).matrix();
      } else {
        d = (dxhat.array().colwise() * inv_std.array()).matrix();
      }
    }

    Matrix dx = Matrix::Zero(c.input.rows(), c.input.cols());
    Index offset = 0;
    for (std::size_t b = 0; b < st.weights.size(); ++b) {
      const Index w = st.weights[b].cols();
      gs.weights[b].noalias() = d * c.input.middleRows(offset, w).transpose();
      gs.biases[b] = d.rowwise().sum();
      dx.middleRows(offset, w).noalias() = st.weights[b].transpose() * d;
      offset += w;
    }
    d = std::move(dx);
  }
  g.input = std::move(d);
  return g;
}

/// Stacks column blocks vertically: [s; a] for a two-branch critic.
inline Matrix concat_rows(const Matrix& top, const Matrix& bottom) {
  if (top.cols() != bottom.cols()) throw std::invalid_argument("concat_rows: batch mismatch");
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

/// target <- tau * source + (1 - tau) * target over learnable entries and
/// normalization statistics.
inline void soft_update(MlpParams& target, const MlpParams& source, double tau) {
  auto tv = trainable_views(target);
  auto sv = trainable_views(source);
  auto ts = statistic_views(target);
  auto ss = statistic_views(source);
  if (tv.size() != sv.size() || ts.size() != ss.size() ||
      target.branch_widths != source.branch_widths)
    throw std::invalid_argument("soft_update: network shapes differ");
  for (std::size_t i = 0; i < tv.size(); ++i)
    if (tv[i].size() != sv[i].size()) throw std::invalid_argument("soft_update: tensor size mismatch");
  for (std::size_t i = 0; i < ts.size(); ++i)
    if (ts[i].size() != ss[i].size()) throw std::invalid_argument("soft_update: tensor size mismatch");
  const auto blend = [tau](std::span<double> t, std::span<const double> s) {
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = tau * s[j] + (1.0 - tau) * t[j];
  };
  for (std::size_t i = 0; i < tv.size(); ++i) blend(tv[i], sv[i]);
  for (std::size_t i = 0; i < ts.size(); ++i) blend(ts[i], ss[i]);
}

}  // namespace irsnoma::nn
