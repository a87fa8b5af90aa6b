#pragma once

// Objective functions, the synthetic (mu, rho)-strongly-concave quadratic
// family, and additive noise models.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "esmaml/core.hpp"

namespace esmaml {

/// Scalar objective over ParamVector. `eval` receives a stream that
/// stochastic objectives (environment rollouts) consume; deterministic
/// objectives ignore it.
struct Objective {
  using EvalFn = std::function<double(const ParamVector&, Stream&)>;
  using GradFn = std::function<ParamVector(const ParamVector&)>;

  std::size_t dim = 0;
  EvalFn eval;
  GradFn grad;  // empty when no gradient is available
  double diameter = std::numeric_limits<double>::infinity();
  std::optional<ParamVector> optimum;
  std::optional<double> optimum_value;
  bool stochastic = false;

  bool has_gradient() const { return static_cast<bool>(grad); }

  double operator()(const ParamVector& x, Stream& rng) const {
    check_dim(x);
    return eval(x, rng);
  }

  /// Evaluation for deterministic objectives.
  double operator()(const ParamVector& x) const {
    Stream unused(0);
    return (*this)(x, unused);
  }

  ParamVector gradient(const ParamVector& x) const {
    if (!grad) throw CapabilityError("objective has no gradient");
    check_dim(x);
    return grad(x);
  }

  void check_dim(const ParamVector& x) const {
    if (static_cast<std::size_t>(x.size()) != dim) {
      throw DimensionError("objective expects dimension " +
                           std::to_string(dim) + ", got " +
                           std::to_string(x.size()));
    }
  }
};

/// Wraps a deterministic callable as an Objective.
template <class F>
Objective make_objective(std::size_t dim, F f) {
  Objective obj;
  obj.dim = dim;
  obj.eval = [f = std::move(f)](const ParamVector& x, Stream&) { return f(x); };
  return obj;
}

/// f(x) = -1/2 x'Ax + b'x with A symmetric positive definite and its
/// spectrum inside [mu, rho].
class QuadraticConcave {
 public:
  QuadraticConcave(Eigen::MatrixXd a, ParamVector b, double mu, double rho)
      : a_(std::move(a)), b_(std::move(b)), mu_(mu), rho_(rho) {
    if (!(mu_ > 0.0) || !(mu_ < rho_)) {
      throw ParameterError("QuadraticConcave: require 0 < mu < rho");
    }
    if (a_.rows() != a_.cols() || a_.rows() != b_.size() || b_.size() == 0) {
      throw DimensionError("QuadraticConcave: A must be d x d and b length d");
    }
    if (!a_.isApprox(a_.transpose(), 1e-12)) {
      throw ParameterError("QuadraticConcave: A must be symmetric");
    }
    const Eigen::VectorXd ev =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a_, Eigen::EigenvaluesOnly)
            .eigenvalues();
    const double slack = 1e-9 * rho_;
    if (ev.minCoeff() < mu_ - slack || ev.maxCoeff() > rho_ + slack) {
      throw ParameterError("QuadraticConcave: eigenvalues of A outside [mu, rho]");
    }
    optimum_ = a_.ldlt().solve(b_);
  }

  std::size_t dim() const { return static_cast<std::size_t>(b_.size()); }
  const Eigen::MatrixXd& matrix() const { return a_; }
  const ParamVector& linear() const { return b_; }
  double mu() const { return mu_; }
  double rho() const { return rho_; }

  double value(const ParamVector& x) const {
    return -0.5 * x.dot(a_ * x) + b_.dot(x);
  }
  ParamVector gradient(const ParamVector& x) const { return b_ - a_ * x; }

  /// Unique maximizer A^{-1} b.
  const ParamVector& maximizer() const { return optimum_; }
  double max_value() const { return value(optimum_); }

  Eigen::VectorXd eigenvalues() const {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a_, Eigen::EigenvaluesOnly)
        .eigenvalues();
  }

  Objective to_objective() const {
    Objective obj;
    obj.dim = dim();
    auto self = std::make_shared<const QuadraticConcave>(*this);
    obj.eval = [self](const ParamVector& x, Stream&) { return self->value(x); };
    obj.grad = [self](const ParamVector& x) { return self->gradient(x); };
    obj.optimum = optimum_;
    obj.optimum_value = max_value();
    return obj;
  }

 private:
  Eigen::MatrixXd a_;
  ParamVector b_;
  double mu_;
  double rho_;
  ParamVector optimum_;
};

/// Random orthogonal matrix (Haar distributed) from a Gaussian QR.
inline Eigen::MatrixXd random_orthogonal(std::size_t d, Stream& rng) {
  const auto n = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

/// Random (mu, rho)-strongly-concave quadratic. Eigenvalues are uniform in
/// [mu, rho] with both endpoints present when d >= 2; the maximizer is
/// uniform in the ball of `optimum_radius` around `center`.
inline QuadraticConcave make_quadratic(std::size_t d, double mu, double rho,
                                       Stream rng, double optimum_radius = 1.0,
                                       std::optional<ParamVector> center = {}) {
  if (d == 0) throw DimensionError("make_quadratic: dimension must be >= 1");
  if (!(mu > 0.0) || !(mu < rho)) {
    throw ParameterError("make_quadratic: require 0 < mu < rho");
  }
  const auto n = static_cast<Eigen::Index>(d);
  Eigen::VectorXd ev(n);
  Stream spectrum = rng.child(1);
  for (Eigen::Index i = 0; i < n; ++i) ev[i] = spectrum.uniform(mu, rho);
  if (d >= 2) {
    ev[0] = mu;
    ev[1] = rho;
  }
  Stream basis = rng.child(2);
  const Eigen::MatrixXd q = random_orthogonal(d, basis);
  Eigen::MatrixXd a = q * ev.asDiagonal() * q.transpose();
  a = 0.5 * (a + a.transpose());

  Stream where = rng.child(3);
  ParamVector opt = sample_direction(d, false, where);
  opt.normalize();
  const double radius =
      optimum_radius * std::pow(where.uniform01(), 1.0 / static_cast<double>(d));
  opt *= radius;
  if (center) {
    require_same_dim(opt, *center, "make_quadratic");
    opt += *center;
  }
  ParamVector b = a * opt;
  return QuadraticConcave(std::move(a), std::move(b), mu, rho);
}

/// Which side of the curvature sandwich a sampled pair violated.
enum class ConcavityBound { Upper, Lower };

struct ConcavityWitness {
  ParamVector x;
  ParamVector y;
  ConcavityBound violated;
  double excess;  // amount by which the inequality fails
};

struct ConcavityCheck {
  bool passed = true;
  std::size_t pairs_checked = 0;
  std::optional<ConcavityWitness> witness;

  explicit operator bool() const { return passed; }
};

/// Samples `n_pairs` points (x, y) uniformly in the ball of `radius` around
/// `center` and checks
///   f(y) <= f(x) + grad f(x)'(y - x) - mu/2 |y - x|^2   (upper)
///   f(y) >= f(x) + grad f(x)'(y - x) - rho/2 |y - x|^2  (lower)
/// with tolerance 1e-8 (1 + |f(x)|). Stops at the first violation.
inline ConcavityCheck verify_strong_concavity(const Objective& f, double mu,
                                              double rho, std::size_t n_pairs,
                                              Stream rng,
                                              std::optional<ParamVector> center = {},
                                              double radius = 0.0) {
  if (!f.has_gradient()) {
    throw CapabilityError("verify_strong_concavity: objective has no gradient");
  }
  if (!(mu > 0.0) || !(mu < rho)) {
    throw ParameterError("verify_strong_concavity: require 0 < mu < rho");
  }
  const ParamVector c =
      center ? *center : (f.optimum ? *f.optimum : ParamVector::Zero(f.dim));
  if (radius <= 0.0) {
    radius = std::isfinite(f.diameter) ? 0.5 * f.diameter : 1.0;
  }
  auto draw = [&](Stream& s) {
    ParamVector u = sample_direction(f.dim, false, s);
    u.normalize();
    return ParamVector(
        c + u * radius * std::pow(s.uniform01(), 1.0 / static_cast<double>(f.dim)));
  };

  ConcavityCheck out;
  for (std::size_t k = 0; k < n_pairs; ++k) {
    Stream s = rng.child(k);
    const ParamVector x = draw(s);
    const ParamVector y = draw(s);
    const double fx = f(x);
    const double fy = f(y);
    const ParamVector diff = y - x;
    const double lin = fx + f.gradient(x).dot(diff);
    const double sq = diff.squaredNorm();
    const double tol = 1e-8 * (1.0 + std::abs(fx));
    ++out.pairs_checked;

    const double upper_excess = fy - (lin - 0.5 * mu * sq);
    if (upper_excess > tol) {
      out.passed = false;
      out.witness = ConcavityWitness{x, y, ConcavityBound::Upper, upper_excess};
      return out;
    }
    const double lower_excess = (lin - 0.5 * rho * sq) - fy;
    if (lower_excess > tol) {
      out.passed = false;
      out.witness = ConcavityWitness{x, y, ConcavityBound::Lower, lower_excess};
      return out;
    }
  }
  return out;
}

enum class AdversaryPolicy { RandomSubset, TargetBest };

/// Additive noise epsilon in f'(theta, eps) = f(theta) + eps.
struct NoiseModel {
  enum class Kind { None, IidGaussian, BoundedUniform, Adversarial };

  Kind kind = Kind::None;
  double scale = 0.0;          // std for IidGaussian, Lambda otherwise
  std::size_t corruptions = 0;  // W, Adversarial only
  AdversaryPolicy policy = AdversaryPolicy::TargetBest;

  static NoiseModel none() { return {}; }
  static NoiseModel gaussian(double std_dev) {
    return {Kind::IidGaussian, std_dev, 0, AdversaryPolicy::TargetBest};
  }
  static NoiseModel bounded(double lambda) {
    return {Kind::BoundedUniform, lambda, 0, AdversaryPolicy::TargetBest};
  }
  static NoiseModel adversarial(double lambda, std::size_t w, AdversaryPolicy p) {
    return {Kind::Adversarial, lambda, w, p};
  }

  void validate() const {
    if (!(scale >= 0.0) || !std::isfinite(scale)) {
      throw ParameterError("NoiseModel: scale must be finite and >= 0");
    }
  }

  /// Bound on |eps| for uncorrupted evaluations, if the model has one.
  std::optional<double> band() const {
    switch (kind) {
      case Kind::None: return 0.0;
      case Kind::BoundedUniform:
      case Kind::Adversarial: return scale;
      case Kind::IidGaussian: return std::nullopt;
    }
    return std::nullopt;
  }

  /// Corruption count for a step offering m corruptible evaluations.
  std::size_t corruptions_for_step(std::size_t m) const {
    if (kind != Kind::Adversarial) return 0;
    return std::min(corruptions, m);
  }
};

/// Value reported for a corrupted evaluation.
inline double corrupted_value(double clean) {
  return clean - 1e6 * (1.0 + std::abs(clean));
}

/// Outcome of evaluating one HC step's worth of points together.
struct StepEvaluation {
  std::vector<double> noisy;
  std::vector<double> clean;  // objective value before additive noise
  std::vector<bool> corrupted;
};

/// Base objective composed with a noise model and an evaluation counter.
/// Every noisy evaluation costs one budget unit.
class NoisyObjective {
 public:
  NoisyObjective(Objective base, NoiseModel noise,
                 std::optional<std::uint64_t> cap = std::nullopt)
      : base_(std::move(base)), noise_(noise), cap_(cap) {
    noise_.validate();
  }

  NoisyObjective(const NoisyObjective&) = delete;
  NoisyObjective& operator=(const NoisyObjective&) = delete;

  const Objective& base() const { return base_; }
  const NoiseModel& noise() const { return noise_; }
  std::uint64_t evaluations() const { return counter_.load(); }
  std::size_t dim() const { return base_.dim; }

  /// Evaluates one point and advances `rng` by one draw. Adversarial
  /// corruption needs a step scope, so a lone evaluation only receives the
  /// bounded band noise.
  double evaluate(const ParamVector& theta, Stream& rng) {
    const ParamVector pts[1] = {theta};
    Stream step = rng.child(rng());
    return evaluate_step(pts, step, 1).noisy.front();
  }

  /// Evaluates all points of one step. Point i draws from rng.child(i), so
  /// results do not depend on evaluation order. Under adversarial noise at
  /// most W evaluations with index >= `corruptible_from` (the perturbed
  /// candidates; the incumbent comes first) are corrupted.
  StepEvaluation evaluate_step(std::span<const ParamVector> points, Stream& rng,
                               std::size_t corruptible_from = 0) {
    const std::size_t m = points.size();
    if (cap_ && counter_.load() + m > *cap_) {
      throw BudgetExhaustedError("evaluation cap of " + std::to_string(*cap_) +
                                 " would be exceeded");
    }
    StepEvaluation out;
    out.noisy.resize(m);
    out.clean.resize(m);
    out.corrupted.assign(m, false);
    for (std::size_t i = 0; i < m; ++i) {
      Stream point = rng.child(i);
      Stream objective_stream = point.child(Role::Evaluation);
      const double clean = base_(points[i], objective_stream);
      if (!std::isfinite(clean)) {
        throw EvaluationError("objective returned a non-finite value");
      }
      Stream noise_stream = point.child(Role::Noise);
      out.clean[i] = clean;
      out.noisy[i] = clean + draw_noise(noise_stream);
      counter_.fetch_add(1);
    }
    const std::size_t first = std::min(corruptible_from, m);
    const std::size_t w = noise_.corruptions_for_step(m - first);
    if (w > 0) {
      Stream adv = rng.child(Role::Adversary);
      const std::vector<double> eligible(out.clean.begin() + first, out.clean.end());
      for (std::size_t i : pick_corrupted(eligible, w, adv)) {
        out.corrupted[first + i] = true;
        out.noisy[first + i] = corrupted_value(out.clean[first + i]);
      }
    }
    return out;
  }

 private:
  double draw_noise(Stream& s) const {
    switch (noise_.kind) {
      case NoiseModel::Kind::None: return 0.0;
      case NoiseModel::Kind::IidGaussian: return noise_.scale * s.normal();
      case NoiseModel::Kind::BoundedUniform:
      case NoiseModel::Kind::Adversarial:
        return noise_.scale == 0.0 ? 0.0 : s.uniform(-noise_.scale, noise_.scale);
    }
    return 0.0;
  }

  std::vector<std::size_t> pick_corrupted(const std::vector<double>& clean,
                                          std::size_t w, Stream& adv) const {
    std::vector<std::size_t> idx(clean.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (noise_.policy == AdversaryPolicy::TargetBest) {
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return clean[a] > clean[b];
      });
    } else {
      // Partial Fisher-Yates over the first w slots.
      for (std::size_t i = 0; i < w; ++i) {
        const std::size_t j = i + adv.below(idx.size() - i);
        std::swap(idx[i], idx[j]);
      }
    }
    idx.resize(w);
    return idx;
  }

  Objective base_;
  NoiseModel noise_;
  std::optional<std::uint64_t> cap_;
  std::atomic<std::uint64_t> counter_{0};
};

/// One noisy evaluation f(theta) + eps.
inline double evaluate_noisy(NoisyObjective& obj, const ParamVector& theta,
                             Stream& rng) {
  return obj.evaluate(theta, rng);
}

}  // namespace esmaml
