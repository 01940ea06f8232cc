#pragma once

// ADAM with a step-decay schedule, shuffled mini-batches, and the acceptance
// guard that keeps the incoming parameters whenever a training run fails to
// lower the full-dataset cost.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "vnsp/dataset.hpp"
#include "vnsp/errors.hpp"
#include "vnsp/random.hpp"
#include "vnsp/varnet.hpp"

namespace vnsp {

struct AdamConfig {
  double lr0 = 2e-4;
  double drop_factor = 0.25;
  int drop_every_epochs = 2;
  int epochs = 8;
  int batch_size = 8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(lr0 > 0.0)) throw ConfigError("adam: lr0 must be > 0");
    if (!(drop_factor > 0.0 && drop_factor <= 1.0)) throw ConfigError("adam: drop_factor must be in (0, 1]");
    if (drop_every_epochs < 1) throw ConfigError("adam: drop_every_epochs must be >= 1");
    if (epochs < 1) throw ConfigError("adam: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("adam: batch_size must be >= 1");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
      throw ConfigError("adam: betas must be in (0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("adam: eps must be > 0");
  }

  /// lr0 * drop_factor^floor((epoch - 1) / drop_every_epochs), epoch 1-based.
  double lr_at_epoch(int epoch) const {
    return lr0 * std::pow(drop_factor, (epoch - 1) / drop_every_epochs);
  }
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  double lr = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(const AdamConfig& cfg, std::size_t n)
      : m(n, 0.0), v(n, 0.0), lr(cfg.lr0), beta1(cfg.beta1), beta2(cfg.beta2), eps(cfg.eps) {}
};

/// One bias-corrected ADAM update at the state's current learning rate.
inline void adam_step(AdamState& state, VnParams& params, const Gradients& grads) {
  const std::size_t n = params.values.size();
  if (grads.values.size() != n || state.m.size() != n || state.v.size() != n || !(grads.config == params.config)) {
    throw ShapeError("adam_step: parameter, gradient and moment shapes differ");
  }
  for (double g : grads.values) {
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads.values[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params.values[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

/// Supplies the sampling pattern for (epoch, batch); both 0-based.
using PatternSource = std::function<const SamplingPattern&(int epoch, std::size_t batch)>;

/// Mean gradient of the per-image loss over `items`, summed in index order.
inline Gradients batch_gradient(const VnParams& params, const SamplingPattern& sp, const Dataset& data,
                                std::span<const std::size_t> items) {
  Gradients total(params.config);
  for (std::size_t idx : items) {
    const auto& item = data.items[idx];
    const auto res = vn_backward(params, item.image, sp, item.coils);
    for (std::size_t i = 0; i < total.values.size(); ++i) total.values[i] += res.grads.values[i];
  }
  const double inv = 1.0 / static_cast<double>(items.size());
  for (auto& v : total.values) v *= inv;
  return total;
}

/// Shuffled mini-batch ADAM; the pattern may change per batch. Returns the
/// trained parameters (no cost evaluation).
inline VnParams train_with_patterns(const AdamConfig& config, VnParams params, const Dataset& data,
                                    std::uint64_t seed, const PatternSource& patterns) {
  config.validate();
  data.check_nonempty("train_epochs");
  AdamState state(config, params.values.size());
  Rng rng(seed);
  std::vector<std::size_t> order(data.size());
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    state.lr = config.lr_at_epoch(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    std::size_t batch = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++batch) {
      const std::size_t len = std::min(bs, order.size() - start);
      const SamplingPattern& sp = patterns(epoch - 1, batch);
      adam_step(state, params, batch_gradient(params, sp, data, std::span(order).subspan(start, len)));
    }
  }
  return params;
}

struct TrainResult {
  VnParams params;
  double cost = 0.0;
};

/// epochs x ceil(N_i / batch) ADAM steps on a fixed pattern; returns the
/// trained parameters and their full-dataset cost.
inline TrainResult train_epochs(const AdamConfig& config, const VnParams& params, const SamplingPattern& sp,
                                const Dataset& data, std::uint64_t seed) {
  VnParams trained = train_with_patterns(config, params, data, seed,
                                         [&](int, std::size_t) -> const SamplingPattern& { return sp; });
  const double cost = cost_over_dataset(trained, sp, data);
  return {std::move(trained), cost};
}

struct GuardedResult {
  VnParams params;
  double cost = 0.0;
  double prev_cost = 0.0;
  bool accepted = false;
};

/// train_epochs, keeping `params_prev` unless the new cost is <= the old one.
/// With `enforce` off the trained parameters are always taken.
/// `prev_cost`, when given, must equal cost_over_dataset(params_prev, sp, data).
inline GuardedResult guarded_train(const AdamConfig& config, const VnParams& params_prev, const SamplingPattern& sp,
                                   const Dataset& data, std::uint64_t seed, bool enforce = true,
                                   std::optional<double> prev_cost = std::nullopt) {
  const double before = prev_cost ? *prev_cost : cost_over_dataset(params_prev, sp, data);
  TrainResult trained = train_epochs(config, params_prev, sp, data, seed);
  if (!enforce || trained.cost <= before) {
    return {std::move(trained.params), trained.cost, before, true};
  }
  return {params_prev, before, before, false};
}

}  // namespace vnsp
