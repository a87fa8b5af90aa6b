#pragma once

// Antithetic ES-MAML outer loop over a task distribution with a pluggable
// Hill-Climbing adaptation operator, plus the adaptation-gap metric.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "esmaml/adaptation.hpp"
#include "esmaml/core.hpp"
#include "esmaml/objectives.hpp"
#include "esmaml/parallel.hpp"

namespace esmaml {

/// A distribution that samples tasks from a split and turns them into
/// objectives over parameters of dimension dim().
template <class D>
concept TaskDistribution = requires(const D& dist, Split split, Stream& rng,
                                    const typename D::task_type& task) {
  { dist.sample(split, rng) } -> std::same_as<typename D::task_type>;
  { dist.objective(task) } -> std::same_as<Objective>;
  { dist.dim() } -> std::convertible_to<std::size_t>;
};

struct MetaConfig {
  double sigma = 0.1;
  double beta = 0.01;
  std::size_t pairs = 10;  // n
  std::size_t iterations = 100;
  AdaptationConfig adaptation;
  NoiseModel noise;  // additive noise on every task evaluation
  bool normalize_outer = false;
  std::size_t value_evaluations = 1;  // evaluations averaged into v+ and v-

  void validate() const {
    if (!(sigma > 0.0)) throw ConfigError("meta: sigma must be > 0");
    if (!(beta >= 0.0)) throw ConfigError("meta: beta must be >= 0");
    if (pairs < 1) throw ConfigError("meta: pairs (n) must be >= 1");
    if (value_evaluations < 1) throw ConfigError("meta: value_evaluations must be >= 1");
    noise.validate();
    adaptation.validate(noise);
  }
};

struct PairRecord {
  std::uint64_t task_id = 0;
  double v_plus = 0.0;
  double v_minus = 0.0;
  double v = 0.0;  // (v_plus - v_minus) / 2
  std::uint64_t evaluations = 0;
};

struct MetaIteration {
  std::size_t iteration = 0;
  ParamVector theta;  // before the update
  std::vector<PairRecord> pairs;
  double grad_norm = 0.0;
  std::uint64_t evaluations = 0;
};

struct MetaTrace {
  std::vector<MetaIteration> iterations;

  std::uint64_t total_evaluations() const {
    std::uint64_t n = 0;
    for (const auto& it : iterations) n += it.evaluations;
    return n;
  }
};

namespace detail {

// f^T(U(theta, T)) with the evaluation budget it consumed.
inline std::pair<double, std::uint64_t> adapted_value(const Objective& task_obj,
                                                      const ParamVector& theta,
                                                      const MetaConfig& cfg,
                                                      Stream adapt_stream,
                                                      Stream value_stream) {
  NoisyObjective noisy(task_obj, cfg.noise);
  const ParamVector adapted = adapt(theta, noisy, cfg.adaptation, adapt_stream);
  double sum = 0.0;
  for (std::size_t k = 0; k < cfg.value_evaluations; ++k) {
    Stream s = value_stream.child(k);
    sum += noisy.evaluate(adapted, s);
  }
  return {sum / static_cast<double>(cfg.value_evaluations), noisy.evaluations()};
}

}  // namespace detail

/// One antithetic update:
///   v_i = (f^{T_i}(U(theta + sigma g_i)) - f^{T_i}(U(theta - sigma g_i))) / 2
///   theta <- theta + beta / (sigma n) * sum_i v_i g_i
/// Both arms of a pair share the task and the adaptation sub-streams.
template <TaskDistribution Dist>
std::pair<ParamVector, MetaIteration> antithetic_step(const ParamVector& theta,
                                                      const Dist& dist,
                                                      const MetaConfig& cfg,
                                                      Stream rng,
                                                      std::size_t jobs = 1) {
  cfg.validate();
  const std::size_t d = dist.dim();
  if (static_cast<std::size_t>(theta.size()) != d) {
    throw DimensionError("antithetic_step: theta has dimension " +
                         std::to_string(theta.size()) + ", tasks expect " +
                         std::to_string(d));
  }

  MetaIteration rec;
  rec.theta = theta;
  rec.pairs.resize(cfg.pairs);
  std::vector<ParamVector> directions(cfg.pairs);

  parallel_for(cfg.pairs, jobs, [&](std::size_t i) {
    Stream pair = rng.child(i);
    Stream task_stream = pair.child(Role::Task);
    const auto task = dist.sample(Split::Train, task_stream);
    const Objective obj = dist.objective(task);
    Stream dir_stream = pair.child(Role::Direction);
    directions[i] = sample_direction(d, cfg.normalize_outer, dir_stream);

    const Stream adapt_stream = pair.child(Role::Adaptation);
    const Stream value_stream = pair.child(Role::Value);
    PairRecord& p = rec.pairs[i];
    p.task_id = task.id;
    try {
      const auto [plus, n_plus] = detail::adapted_value(
          obj, theta + cfg.sigma * directions[i], cfg, adapt_stream, value_stream);
      const auto [minus, n_minus] = detail::adapted_value(
          obj, theta - cfg.sigma * directions[i], cfg, adapt_stream, value_stream);
      p.v_plus = plus;
      p.v_minus = minus;
      p.v = 0.5 * (plus - minus);
      p.evaluations = n_plus + n_minus;
    } catch (const EvaluationError& e) {
      throw EvaluationError("antithetic pair " + std::to_string(i) + ": " + e.what(),
                            e.step());
    }
  });

  ParamVector grad = ParamVector::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < cfg.pairs; ++i) {
    grad += rec.pairs[i].v * directions[i];
    rec.evaluations += rec.pairs[i].evaluations;
  }
  grad /= cfg.sigma * static_cast<double>(cfg.pairs);
  rec.grad_norm = grad.norm();
  return {ParamVector(theta + cfg.beta * grad), std::move(rec)};
}

/// Runs `cfg.iterations` antithetic steps from `init`.
template <TaskDistribution Dist>
std::pair<ParamVector, MetaTrace> es_maml_train(const ParamVector& init,
                                                const Dist& dist,
                                                const MetaConfig& cfg, Stream rng,
                                                std::size_t jobs = 1) {
  cfg.validate();
  ParamVector theta = init;
  MetaTrace trace;
  trace.iterations.reserve(cfg.iterations);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    auto [next, rec] = antithetic_step(theta, dist, cfg, rng.child(it), jobs);
    rec.iteration = it;
    trace.iterations.push_back(std::move(rec));
    theta = std::move(next);
  }
  return {std::move(theta), std::move(trace)};
}

/// Domain randomization: the same outer loop with the identity adaptation.
template <TaskDistribution Dist>
std::pair<ParamVector, MetaTrace> train_dr_baseline(const ParamVector& init,
                                                    const Dist& dist,
                                                    MetaConfig cfg, Stream rng,
                                                    std::size_t jobs = 1) {
  cfg.adaptation.steps = 0;
  return es_maml_train(init, dist, cfg, rng, jobs);
}

struct GapEstimate {
  double meta_value = 0.0;
  double adapted_value = 0.0;
  double gap = 0.0;  // adapted_value - meta_value
  std::uint64_t adaptation_evaluations = 0;
  ParamVector adapted;
  std::optional<AdaptationTrace> trace;  // only when requested and Q > 0
};

/// f^T(U(theta, T)) - f^T(theta). Adapts once on the noisy objective, then
/// estimates both values from `n_eval` fresh evaluations of the base
/// objective (the same streams for both, outside the adaptation budget).
inline GapEstimate adaptation_gap(const ParamVector& theta, const Objective& task_obj,
                                  const AdaptationConfig& u, const NoiseModel& noise,
                                  std::size_t n_eval, Stream rng,
                                  bool keep_trace = false) {
  if (n_eval < 1) throw ParameterError("adaptation_gap: n_eval must be >= 1");
  NoisyObjective noisy(task_obj, noise);
  GapEstimate out;
  if (keep_trace && u.steps > 0) {
    auto [adapted, trace] = adapt_traced(theta, noisy, u, rng.child(Role::Adaptation));
    out.adapted = std::move(adapted);
    out.trace = std::move(trace);
  } else {
    out.adapted = adapt(theta, noisy, u, rng.child(Role::Adaptation));
  }
  out.adaptation_evaluations = noisy.evaluations();

  const Stream value_stream = rng.child(Role::Value);
  double meta_sum = 0.0;
  double adapted_sum = 0.0;
  for (std::size_t k = 0; k < n_eval; ++k) {
    Stream a = value_stream.child(k);
    Stream b = value_stream.child(k);
    meta_sum += task_obj(theta, a);
    adapted_sum += task_obj(out.adapted, b);
  }
  out.meta_value = meta_sum / static_cast<double>(n_eval);
  out.adapted_value = adapted_sum / static_cast<double>(n_eval);
  out.gap = out.adapted_value - out.meta_value;
  return out;
}

}  // namespace esmaml
