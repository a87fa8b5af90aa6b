#pragma once

// Noisy Nav-2D point navigation with linear policies, and a synthetic family
// of quadratic tasks whose curvature and optimum depend on a per-task gain.
// Both expose tasks as Objectives over policy parameters.

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "esmaml/core.hpp"
#include "esmaml/objectives.hpp"

namespace esmaml {

/// Task ids carry their split in the lowest bit, so the train and test
/// populations can never share a task.
inline std::uint64_t make_task_id(Split split, std::uint64_t raw) {
  return (raw << 1) | static_cast<std::uint64_t>(split);
}
inline Split task_split(std::uint64_t id) {
  return (id & 1u) ? Split::Test : Split::Train;
}

struct Nav2DTask {
  std::uint64_t id = 0;
  Eigen::Vector2d goal = Eigen::Vector2d::Zero();
  Eigen::Vector2d start = Eigen::Vector2d::Zero();
  double obs_noise_std = 0.0;
  Eigen::Matrix2d action_gain = Eigen::Matrix2d::Identity();
  Eigen::Vector2d drift = Eigen::Vector2d::Zero();
  std::size_t horizon = 100;
  double action_clip = 0.1;

  void validate() const {
    if (horizon < 1) throw ParameterError("Nav2DTask: horizon must be >= 1");
    if (!(obs_noise_std >= 0.0)) {
      throw ParameterError("Nav2DTask: obs_noise_std must be >= 0");
    }
    if (!(action_clip > 0.0)) {
      throw ParameterError("Nav2DTask: action_clip must be > 0");
    }
    if (std::abs(action_gain.determinant()) < 1e-12) {
      throw ParameterError("Nav2DTask: action_gain must be invertible");
    }
  }
};

/// action = clip(W obs + b) componentwise. Packs as (W row-major, b).
struct LinearPolicy {
  static constexpr std::size_t kDim = 6;

  Eigen::Matrix2d weights = Eigen::Matrix2d::Zero();
  Eigen::Vector2d bias = Eigen::Vector2d::Zero();

  static LinearPolicy unpack(const ParamVector& theta) {
    if (static_cast<std::size_t>(theta.size()) != kDim) {
      throw DimensionError("LinearPolicy: expected 6 parameters, got " +
                           std::to_string(theta.size()));
    }
    LinearPolicy p;
    p.weights << theta[0], theta[1], theta[2], theta[3];
    p.bias << theta[4], theta[5];
    return p;
  }

  ParamVector pack() const {
    ParamVector theta(kDim);
    theta << weights(0, 0), weights(0, 1), weights(1, 0), weights(1, 1), bias[0],
        bias[1];
    return theta;
  }

  Eigen::Vector2d act(const Eigen::Vector2d& obs, double clip) const {
    return (weights * obs + bias).cwiseMax(-clip).cwiseMin(clip);
  }
};

struct RolloutResult {
  double total_reward = 0.0;
  std::vector<Eigen::Vector2d> positions;  // start plus one entry per step
  std::size_t steps_used = 0;
};

namespace detail {

inline void nav2d_step(const Nav2DTask& task, Eigen::Vector2d& pos,
                       const Eigen::Vector2d& action, std::size_t t,
                       RolloutResult& out) {
  pos += task.action_gain * action + task.drift;
  if (!pos.allFinite()) {
    throw EvaluationError("Nav2D state became non-finite at step " +
                              std::to_string(t),
                          t);
  }
  out.positions.push_back(pos);
  out.total_reward -= (pos - task.goal).norm();
  out.steps_used = t + 1;
}

}  // namespace detail

/// Runs one episode from `task.start`. Reward per step is the negative
/// distance to the goal after moving.
inline RolloutResult rollout(const LinearPolicy& policy, const Nav2DTask& task,
                             Stream& rng) {
  RolloutResult out;
  out.positions.reserve(task.horizon + 1);
  Eigen::Vector2d pos = task.start;
  out.positions.push_back(pos);
  for (std::size_t t = 0; t < task.horizon; ++t) {
    Eigen::Vector2d obs = pos;
    if (task.obs_noise_std > 0.0) {
      obs[0] += task.obs_noise_std * rng.normal();
      obs[1] += task.obs_noise_std * rng.normal();
    }
    detail::nav2d_step(task, pos, policy.act(obs, task.action_clip), t, out);
  }
  return out;
}

/// Applies a fixed action sequence (already clipped by the caller or not;
/// it is clipped here) under the task dynamics.
inline RolloutResult replay_actions(const Nav2DTask& task,
                                    std::span<const Eigen::Vector2d> actions) {
  RolloutResult out;
  Eigen::Vector2d pos = task.start;
  out.positions.push_back(pos);
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const Eigen::Vector2d a =
        actions[t].cwiseMax(-task.action_clip).cwiseMin(task.action_clip);
    detail::nav2d_step(task, pos, a, t, out);
  }
  return out;
}

/// Sum of per-step rewards recomputed from a trajectory.
inline double reward_from_positions(const Nav2DTask& task,
                                    const std::vector<Eigen::Vector2d>& positions) {
  double total = 0.0;
  for (std::size_t t = 1; t < positions.size(); ++t) {
    total -= (positions[t] - task.goal).norm();
  }
  return total;
}

struct Box2 {
  Eigen::Vector2d lo = Eigen::Vector2d::Zero();
  Eigen::Vector2d hi = Eigen::Vector2d::Zero();

  Eigen::Vector2d sample(Stream& rng) const {
    Eigen::Vector2d v;
    for (int i = 0; i < 2; ++i) v[i] = lo[i] == hi[i] ? lo[i] : rng.uniform(lo[i], hi[i]);
    return v;
  }
};

struct Interval {
  double lo = 1.0;
  double hi = 1.0;

  double sample(Stream& rng) const { return lo == hi ? lo : rng.uniform(lo, hi); }
};

/// Distribution over Nav-2D tasks. Goals, per-axis action gains and drift
/// are drawn uniformly from their ranges.
struct Nav2DDistribution {
  using task_type = Nav2DTask;

  Box2 goal_range{Eigen::Vector2d(-0.5, -0.5), Eigen::Vector2d(0.5, 0.5)};
  Interval gain_range{1.0, 1.0};
  Box2 drift_range{};
  double obs_noise_std = 1.0;
  std::size_t horizon = 100;
  double action_clip = 0.1;
  std::uint64_t seed = 0;
  std::size_t rollouts_per_eval = 1;

  static constexpr std::size_t dim() { return LinearPolicy::kDim; }

  void validate() const {
    for (int i = 0; i < 2; ++i) {
      if (goal_range.lo[i] > goal_range.hi[i] || drift_range.lo[i] > drift_range.hi[i]) {
        throw ParameterError("Nav2DDistribution: range with lo > hi");
      }
    }
    if (gain_range.lo > gain_range.hi) {
      throw ParameterError("Nav2DDistribution: gain_range lo > hi");
    }
    if (gain_range.lo <= 0.0 && gain_range.hi >= 0.0 && gain_range.lo == gain_range.hi) {
      throw ParameterError("Nav2DDistribution: gain of zero is not invertible");
    }
    if (rollouts_per_eval < 1) {
      throw ParameterError("Nav2DDistribution: rollouts_per_eval must be >= 1");
    }
  }

  /// Task determined entirely by its id.
  Nav2DTask task(std::uint64_t id) const {
    Stream s = Stream(seed).child(Role::Task).child(id);
    Nav2DTask t;
    t.id = id;
    t.goal = goal_range.sample(s);
    for (;;) {
      const double gx = gain_range.sample(s);
      const double gy = gain_range.sample(s);
      if (std::abs(gx) > 1e-9 && std::abs(gy) > 1e-9) {
        t.action_gain = Eigen::Vector2d(gx, gy).asDiagonal();
        break;
      }
    }
    t.drift = drift_range.sample(s);
    t.obs_noise_std = obs_noise_std;
    t.horizon = horizon;
    t.action_clip = action_clip;
    return t;
  }

  Nav2DTask sample(Split which, Stream& rng) const {
    return task(make_task_id(which, rng() >> 1));
  }

  Objective objective(const Nav2DTask& t) const;
};

/// Episodic return of a task as an objective over the 6 policy parameters,
/// averaged over `n_rollouts_per_eval` rollouts. No gradient.
inline Objective task_objective(const Nav2DTask& task,
                                std::size_t n_rollouts_per_eval = 1) {
  if (n_rollouts_per_eval < 1) {
    throw ParameterError("task_objective: n_rollouts_per_eval must be >= 1");
  }
  task.validate();
  Objective obj;
  obj.dim = LinearPolicy::kDim;
  obj.stochastic = task.obs_noise_std > 0.0;
  obj.eval = [task, n = n_rollouts_per_eval](const ParamVector& theta, Stream& rng) {
    const LinearPolicy policy = LinearPolicy::unpack(theta);
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      Stream episode = rng.child(k);
      sum += rollout(policy, task, episode).total_reward;
    }
    return sum / static_cast<double>(n);
  };
  return obj;
}

inline Objective Nav2DDistribution::objective(const Nav2DTask& t) const {
  return task_objective(t, rollouts_per_eval);
}

inline Nav2DTask sample_task(const Nav2DDistribution& dist, Split which,
                             Stream& rng) {
  return dist.sample(which, rng);
}

/// One member of the synthetic gain family:
///   f(theta) = -1/2 (g theta - c)' A (g theta - c),
/// a (g^2 mu, g^2 rho)-strongly-concave quadratic maximized at c / g.
struct QuadraticTask {
  std::uint64_t id = 0;
  double gain = 1.0;
  ParamVector target;
  std::shared_ptr<const QuadraticConcave> quadratic;
};

/// Synthetic task family in which a per-task gain rescales both the
/// curvature and the location of the optimum. A shared base curvature A
/// (spectrum in [mu, rho]) is drawn once from `seed`.
struct QuadraticTaskFamily {
  using task_type = QuadraticTask;

  std::size_t dimension = 2;
  double mu = 1.0;
  double rho = 4.0;
  Interval gain_range{0.25, 2.0};
  ParamVector target_center = ParamVector::Ones(2);
  double target_jitter = 0.1;
  std::uint64_t seed = 0;

  std::size_t dim() const { return dimension; }

  void validate() const {
    if (dimension < 1) throw DimensionError("QuadraticTaskFamily: dimension >= 1");
    if (static_cast<std::size_t>(target_center.size()) != dimension) {
      throw DimensionError("QuadraticTaskFamily: target_center has wrong dimension");
    }
    if (!(gain_range.lo > 0.0) || gain_range.lo > gain_range.hi) {
      throw ParameterError("QuadraticTaskFamily: gain_range must be positive, lo <= hi");
    }
    if (!(mu > 0.0) || !(mu < rho)) {
      throw ParameterError("QuadraticTaskFamily: require 0 < mu < rho");
    }
  }

  Eigen::MatrixXd base_curvature() const {
    Stream s = Stream(seed).child(Role::Instance);
    const QuadraticConcave q =
        make_quadratic(dimension, mu, rho, s, 0.0);
    return q.matrix();
  }

  QuadraticTask task(std::uint64_t id) const {
    Stream s = Stream(seed).child(Role::Task).child(id);
    QuadraticTask t;
    t.id = id;
    t.gain = gain_range.sample(s);
    ParamVector jitter = sample_direction(dimension, false, s);
    jitter.normalize();
    jitter *= target_jitter * std::pow(s.uniform01(), 1.0 / static_cast<double>(dimension));
    t.target = target_center + jitter;
    // In theta coordinates: A_T = g^2 A, b_T = g A c.
    const Eigen::MatrixXd a = base_curvature();
    const double g2 = t.gain * t.gain;
    t.quadratic = std::make_shared<const QuadraticConcave>(
        g2 * a, ParamVector(t.gain * (a * t.target)), g2 * mu, g2 * rho);
    return t;
  }

  QuadraticTask sample(Split which, Stream& rng) const {
    return task(make_task_id(which, rng() >> 1));
  }

  Objective objective(const QuadraticTask& t) const {
    // Shifted so the optimum value is 0.
    auto q = t.quadratic;
    const double top = q->max_value();
    Objective obj = q->to_objective();
    obj.eval = [q, top](const ParamVector& x, Stream&) { return q->value(x) - top; };
    obj.optimum_value = 0.0;
    return obj;
  }
};

}  // namespace esmaml
