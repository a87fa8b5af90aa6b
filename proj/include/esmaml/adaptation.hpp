#pragma once

// Hill-Climbing adaptation operators U(theta, T).
//
//   Sequential  argmax over {theta, theta + alpha g} of one noisy evaluation
//   Average     argmax over {theta, theta + alpha g} of the mean of P
//               noisy evaluations
//   Batch       argmax over {theta, theta + alpha g_1, ..., theta + alpha g_P}
//               of one noisy evaluation each
//
// The incumbent is re-evaluated every step. Ties keep the incumbent, then
// the lowest candidate index.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "esmaml/core.hpp"
#include "esmaml/format.hpp"
#include "esmaml/objectives.hpp"

namespace esmaml {

enum class HcVariant { Sequential, Average, Batch };

inline std::string to_string(HcVariant v) {
  switch (v) {
    case HcVariant::Sequential: return "sequential";
    case HcVariant::Average: return "average";
    case HcVariant::Batch: return "batch";
  }
  return "?";
}

struct AdaptationConfig {
  HcVariant variant = HcVariant::Batch;
  double alpha = 0.1;
  std::size_t steps = 5;     // Q
  std::size_t parallel = 10;  // P; Sequential uses 1
  bool normalize_directions = true;

  std::size_t effective_parallel() const {
    return variant == HcVariant::Sequential ? 1 : parallel;
  }

  /// Noisy evaluations consumed by one step.
  std::size_t evaluations_per_step() const {
    switch (variant) {
      case HcVariant::Sequential: return 2;
      case HcVariant::Average: return 2 * parallel;
      case HcVariant::Batch: return parallel + 1;
    }
    return 0;
  }

  std::uint64_t total_evaluations() const {
    return static_cast<std::uint64_t>(steps) * evaluations_per_step();
  }

  void validate(const NoiseModel& noise = NoiseModel::none()) const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
      throw ConfigError("adaptation: alpha must be > 0");
    }
    if (parallel < 1) throw ConfigError("adaptation: parallel (P) must be >= 1");
    if (variant == HcVariant::Batch && noise.kind == NoiseModel::Kind::Adversarial &&
        noise.corruptions >= parallel) {
      throw ConfigError("adaptation: Batch under adversarial noise needs W < P (W=" +
                        std::to_string(noise.corruptions) +
                        ", P=" + std::to_string(parallel) + ")");
    }
  }
};

/// One noisy evaluation inside a step.
struct EvaluationRecord {
  std::size_t candidate = 0;  // 0 is the incumbent
  double noisy = 0.0;
  std::optional<double> truth;
  bool corrupted = false;
};

struct StepRecord {
  std::vector<ParamVector> candidates;  // [0] is the incumbent
  std::vector<double> scores;           // per candidate, what the argmax saw
  std::vector<EvaluationRecord> evaluations;
  std::size_t selected = 0;
  std::uint64_t evaluations_used = 0;
  std::vector<bool> outside_domain;  // per candidate
  // f(selected) >= max_i f(candidate_i) - 2 Lambda, checked on uncorrupted
  // steps of objectives with a known band and known true values.
  std::optional<bool> within_band_of_best;
};

struct AdaptationTrace {
  std::vector<StepRecord> steps;
  std::vector<ParamVector> iterates;                 // theta_0 .. theta_Q
  std::vector<std::optional<double>> iterate_truth;  // f(theta_q) if known
  std::uint64_t evaluations = 0;
};

/// Writes one row per evaluation:
/// step,candidate_index,is_incumbent,noisy_value,true_value_or_blank,selected
void write_trace_csv(std::ostream& os, const AdaptationTrace& trace,
                     bool header = true);

/// Supplies the direction for (step, index); the default draws from `rng`.
using DirectionSource =
    std::function<ParamVector(std::size_t step, std::size_t index, Stream& rng)>;

namespace detail {

inline std::optional<double> true_value(const Objective& f, const ParamVector& x) {
  if (f.stochastic) return std::nullopt;
  Stream unused(0);
  return f(x, unused);
}

inline ParamVector draw_direction(const DirectionSource& src, std::size_t d,
                                  bool normalize, std::size_t step,
                                  std::size_t index, Stream step_stream) {
  Stream s = step_stream.child(Role::Direction).child(index);
  if (src) {
    ParamVector g = src(step, index, s);
    if (static_cast<std::size_t>(g.size()) != d) {
      throw DimensionError("direction source returned wrong dimension");
    }
    return g;
  }
  return sample_direction(d, normalize, s);
}

// Shared driver: `make_step` returns the candidate list for a step and
// `repeats` is how many times each candidate is evaluated.
template <class MakeCandidates>
std::pair<ParamVector, AdaptationTrace> run_hill_climb(
    const ParamVector& theta0, NoisyObjective& obj, const AdaptationConfig& cfg,
    Stream rng, std::size_t repeats, MakeCandidates&& make_candidates) {
  cfg.validate(obj.noise());
  obj.base().check_dim(theta0);
  const Objective& f = obj.base();
  const auto band = obj.noise().band();
  const double half_diameter = 0.5 * f.diameter;

  AdaptationTrace trace;
  ParamVector theta = theta0;
  trace.iterates.push_back(theta);
  trace.iterate_truth.push_back(true_value(f, theta));
  const std::uint64_t start_count = obj.evaluations();

  for (std::size_t q = 0; q < cfg.steps; ++q) {
    Stream step_stream = rng.child(q);
    StepRecord rec;
    rec.candidates = make_candidates(theta, q, step_stream);
    const std::size_t k = rec.candidates.size();

    std::vector<ParamVector> points;
    points.reserve(k * repeats);
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t r = 0; r < repeats; ++r) points.push_back(rec.candidates[c]);

    Stream eval_stream = step_stream.child(Role::Evaluation);
    const std::uint64_t before = obj.evaluations();
    const StepEvaluation ev = obj.evaluate_step(points, eval_stream, repeats);
    rec.evaluations_used = obj.evaluations() - before;

    std::vector<std::optional<double>> truth(k);
    for (std::size_t c = 0; c < k; ++c) {
      if (!f.stochastic) truth[c] = ev.clean[c * repeats];
    }

    rec.scores.assign(k, 0.0);
    bool any_corrupted = false;
    for (std::size_t c = 0; c < k; ++c) {
      double sum = 0.0;
      for (std::size_t r = 0; r < repeats; ++r) {
        const std::size_t i = c * repeats + r;
        sum += ev.noisy[i];
        any_corrupted = any_corrupted || ev.corrupted[i];
        rec.evaluations.push_back({c, ev.noisy[i], truth[c], ev.corrupted[i]});
      }
      rec.scores[c] = repeats == 1 ? sum : sum / static_cast<double>(repeats);
    }

    // Strict comparison: ties keep the incumbent, then the lowest index.
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (rec.scores[c] > rec.scores[best]) best = c;
    }
    rec.selected = best;

    rec.outside_domain.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
      rec.outside_domain[c] = std::isfinite(half_diameter) &&
                              (rec.candidates[c] - theta0).norm() > half_diameter;
    }

    if (band && !any_corrupted && !f.stochastic && repeats == 1) {
      double top = *truth[0];
      for (std::size_t c = 1; c < k; ++c) top = std::max(top, *truth[c]);
      rec.within_band_of_best = *truth[best] >= top - 2.0 * *band - 1e-12 * (1.0 + std::abs(top));
    }

    theta = rec.candidates[best];
    trace.iterates.push_back(theta);
    trace.iterate_truth.push_back(truth[best]);
    trace.steps.push_back(std::move(rec));
  }
  trace.evaluations = obj.evaluations() - start_count;
  return {std::move(theta), std::move(trace)};
}

}  // namespace detail

/// Sequential HC: one direction per step, incumbent and candidate evaluated
/// once each (2 evaluations per step).
inline std::pair<ParamVector, AdaptationTrace> hc_sequential(
    const ParamVector& theta, NoisyObjective& obj, const AdaptationConfig& cfg,
    Stream rng, const DirectionSource& directions = {}) {
  if (cfg.variant != HcVariant::Sequential) {
    throw ConfigError("hc_sequential: config variant is " + to_string(cfg.variant));
  }
  const std::size_t d = obj.dim();
  return detail::run_hill_climb(
      theta, obj, cfg, rng, 1,
      [&](const ParamVector& x, std::size_t q, Stream s) {
        const ParamVector g =
            detail::draw_direction(directions, d, cfg.normalize_directions, q, 0, s);
        return std::vector<ParamVector>{x, x + cfg.alpha * g};
      });
}

/// Average HC: one direction per step, incumbent and candidate each
/// evaluated P times and compared by their means (2P evaluations per step).
inline std::pair<ParamVector, AdaptationTrace> hc_average(
    const ParamVector& theta, NoisyObjective& obj, const AdaptationConfig& cfg,
    Stream rng, const DirectionSource& directions = {}) {
  if (cfg.variant != HcVariant::Average) {
    throw ConfigError("hc_average: config variant is " + to_string(cfg.variant));
  }
  const std::size_t d = obj.dim();
  return detail::run_hill_climb(
      theta, obj, cfg, rng, cfg.parallel,
      [&](const ParamVector& x, std::size_t q, Stream s) {
        const ParamVector g =
            detail::draw_direction(directions, d, cfg.normalize_directions, q, 0, s);
        return std::vector<ParamVector>{x, x + cfg.alpha * g};
      });
}

/// Batch HC: P directions per step; the incumbent and all P candidates are
/// evaluated once each (P + 1 evaluations per step).
inline std::pair<ParamVector, AdaptationTrace> hc_batch(
    const ParamVector& theta, NoisyObjective& obj, const AdaptationConfig& cfg,
    Stream rng, const DirectionSource& directions = {}) {
  if (cfg.variant != HcVariant::Batch) {
    throw ConfigError("hc_batch: config variant is " + to_string(cfg.variant));
  }
  const std::size_t d = obj.dim();
  return detail::run_hill_climb(
      theta, obj, cfg, rng, 1,
      [&](const ParamVector& x, std::size_t q, Stream s) {
        std::vector<ParamVector> cands;
        cands.reserve(cfg.parallel + 1);
        cands.push_back(x);
        for (std::size_t i = 0; i < cfg.parallel; ++i) {
          const ParamVector g =
              detail::draw_direction(directions, d, cfg.normalize_directions, q, i, s);
          cands.push_back(x + cfg.alpha * g);
        }
        return cands;
      });
}

/// Dispatches to the configured variant and keeps the trace.
inline std::pair<ParamVector, AdaptationTrace> adapt_traced(
    const ParamVector& theta, NoisyObjective& obj, const AdaptationConfig& cfg,
    Stream rng, const DirectionSource& directions = {}) {
  switch (cfg.variant) {
    case HcVariant::Sequential: return hc_sequential(theta, obj, cfg, rng, directions);
    case HcVariant::Average: return hc_average(theta, obj, cfg, rng, directions);
    case HcVariant::Batch: return hc_batch(theta, obj, cfg, rng, directions);
  }
  throw ConfigError("adapt: unknown variant");
}

/// U(theta, T): the final iterate theta^(Q). Q = 0 is the identity.
inline ParamVector adapt(const ParamVector& theta, NoisyObjective& obj,
                         const AdaptationConfig& cfg, Stream rng) {
  if (cfg.steps == 0) {
    obj.base().check_dim(theta);
    return theta;
  }
  return adapt_traced(theta, obj, cfg, rng).first;
}

inline void write_trace_csv(std::ostream& os, const AdaptationTrace& trace,
                            bool header) {
  if (header) {
    os << "step,candidate_index,is_incumbent,noisy_value,true_value_or_blank,selected\n";
  }
  for (std::size_t q = 0; q < trace.steps.size(); ++q) {
    const StepRecord& s = trace.steps[q];
    for (const EvaluationRecord& e : s.evaluations) {
      os << q << ',' << e.candidate << ',' << (e.candidate == 0 ? 1 : 0) << ','
         << format_number(e.noisy) << ','
         << (e.truth ? format_number(*e.truth) : std::string()) << ','
         << (e.candidate == s.selected ? 1 : 0) << '\n';
    }
  }
}

}  // namespace esmaml
