#pragma once

// Closed-form quantities of the Batch Hill-Climbing convergence result and
// an empirical regret experiment on synthetic strongly concave quadratics.
//
// log(d) in the batch-size requirement is the natural logarithm.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "esmaml/adaptation.hpp"
#include "esmaml/core.hpp"
#include "esmaml/objectives.hpp"
#include "esmaml/parallel.hpp"

namespace esmaml::theory {

/// (1/sqrt T) (D^2/2 + (L + 4 L^2 / sqrt T)^2 + 8 D L^2)
inline double regret_bound(double diameter, double grad_bound, double steps) {
  if (!(steps >= 1.0)) throw ParameterError("regret_bound: T must be >= 1");
  if (!(diameter >= 0.0)) throw ParameterError("regret_bound: D must be >= 0");
  if (!(grad_bound >= 0.0)) throw ParameterError("regret_bound: L must be >= 0");
  const double rt = std::sqrt(steps);
  const double l2 = grad_bound * grad_bound;
  const double inner = grad_bound + 4.0 * l2 / rt;
  return (0.5 * diameter * diameter + inner * inner + 8.0 * diameter * l2) / rt;
}

/// Perturbation scale xi L / sqrt(T d).
inline double sigma_schedule(double xi, double grad_bound, double steps, double d) {
  if (!(xi > 0.0 && xi < 1.0)) throw ParameterError("sigma_schedule: need 0 < xi < 1");
  if (!(grad_bound > 0.0)) throw ParameterError("sigma_schedule: L must be > 0");
  if (!(steps >= 1.0) || !(d >= 1.0)) {
    throw ParameterError("sigma_schedule: T and d must be >= 1");
  }
  return xi * grad_bound / std::sqrt(steps * d);
}

/// Smallest admissible gradient bound:
///   sqrt(16 Lambda T / (7 xi) / (1 - 4 (rho - mu) xi / 7)).
inline double min_L_threshold(double lambda, double steps, double xi, double rho,
                              double mu) {
  if (!(lambda >= 0.0)) throw ParameterError("min_L_threshold: Lambda must be >= 0");
  if (!(xi > 0.0 && xi < 1.0)) throw ParameterError("min_L_threshold: need 0 < xi < 1");
  if (!(mu > 0.0) || !(mu < rho)) {
    throw ParameterError("min_L_threshold: require 0 < mu < rho");
  }
  const double denom = 1.0 - 4.0 * (rho - mu) * xi / 7.0;
  if (!(denom > 0.0)) {
    throw ParameterError(
        "min_L_threshold: 1 - 4 (rho - mu) xi / 7 <= 0, hypothesis unsatisfiable");
  }
  return std::sqrt(16.0 * lambda * steps / (7.0 * xi) / denom);
}

struct BatchRequirement {
  double log_excess = 0.0;  // 3 s d ln(d) sqrt(T) = ln(P_min - W)
  std::optional<double> excess;  // e^{log_excess} when representable
  std::optional<std::uint64_t> min_batch;  // smallest integer P, when it fits
  bool overflow = false;
};

/// P >= W + exp(3 s d ln(d) sqrt(T)), evaluated in log space.
inline BatchRequirement required_batch_log(std::uint64_t w, double s, double d,
                                           double steps) {
  if (!(s > 0.0)) throw ParameterError("required_batch_log: s must be > 0");
  if (!(d >= 1.0)) throw ParameterError("required_batch_log: d must be >= 1");
  if (!(steps >= 1.0)) throw ParameterError("required_batch_log: T must be >= 1");
  BatchRequirement r;
  r.log_excess = 3.0 * s * d * std::log(d) * std::sqrt(steps);
  if (r.log_excess >= std::log(std::numeric_limits<double>::max())) {
    r.overflow = true;
    return r;
  }
  const double e = std::exp(r.log_excess);
  r.excess = e;
  // Snap values that are integers up to rounding before taking the ceiling.
  const double nearest = std::round(e);
  const double whole = std::abs(e - nearest) <= 1e-9 * std::max(1.0, e) ? nearest
                                                                         : std::ceil(e);
  if (whole + static_cast<double>(w) < 0x1.0p63) {
    r.min_batch = w + static_cast<std::uint64_t>(whole);
  }
  return r;
}

struct TailBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// (1/x - 1/x^3) phi(x) <= P[g > x] <= phi(x) / x with phi the standard
/// normal density; the lower bound is clamped at 0.
inline TailBounds gaussian_tail_bounds(double x) {
  if (!(x > 0.0)) throw ParameterError("gaussian_tail_bounds: x must be > 0");
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  TailBounds b;
  b.upper = phi / x;
  b.lower = std::max(0.0, (1.0 / x - 1.0 / (x * x * x)) * phi);
  return b;
}

/// tau = cos(phi0) - cos(2 phi0).
inline double tau(double phi0) { return std::cos(phi0) - std::cos(2.0 * phi0); }

/// Taylor lower bound 3/2 phi0^2 - 5/8 phi0^4 on tau.
inline double tau_lower_bound(double phi0) {
  const double p2 = phi0 * phi0;
  return 1.5 * p2 - 0.625 * p2 * p2;
}

/// (rho - mu) / (2 tau) sqrt(d) sigma + 2 Lambda / (sigma tau sqrt(d)).
/// phi0 must lie in (0, pi/4) unless `allow_any_angle` is set.
inline double gradient_length_bound(double rho, double mu, double phi0, double d,
                                    double sigma, double lambda,
                                    bool allow_any_angle = false) {
  if (!allow_any_angle && !(phi0 > 0.0 && phi0 < std::numbers::pi / 4.0)) {
    throw ParameterError("gradient_length_bound: phi0 must lie in (0, pi/4)");
  }
  if (!(sigma > 0.0)) throw ParameterError("gradient_length_bound: sigma must be > 0");
  if (!(d >= 1.0)) throw ParameterError("gradient_length_bound: d must be >= 1");
  if (!(lambda >= 0.0)) throw ParameterError("gradient_length_bound: Lambda must be >= 0");
  const double t = tau(phi0);
  if (!(t > 0.0)) throw ParameterError("gradient_length_bound: tau <= 0");
  const double rd = std::sqrt(d);
  return (rho - mu) / (2.0 * t) * rd * sigma + 2.0 * lambda / (sigma * t * rd);
}

/// Mean of f_opt - f(theta_t) over the given values.
inline double empirical_average_regret(std::span<const double> values, double f_opt) {
  if (values.empty()) throw DegenerateInputError("empirical_average_regret: no values");
  double sum = 0.0;
  for (double v : values) sum += f_opt - v;
  return sum / static_cast<double>(values.size());
}

/// Average regret over theta_0 .. theta_{T-1} of an adaptation trace.
inline double empirical_average_regret(const AdaptationTrace& trace, double f_opt) {
  if (trace.iterates.size() < 2) {
    throw DegenerateInputError("empirical_average_regret: trace has no steps");
  }
  std::vector<double> values;
  values.reserve(trace.iterate_truth.size() - 1);
  for (std::size_t t = 0; t + 1 < trace.iterate_truth.size(); ++t) {
    if (!trace.iterate_truth[t]) {
      throw CapabilityError("empirical_average_regret: trace lacks true values");
    }
    values.push_back(*trace.iterate_truth[t]);
  }
  return empirical_average_regret(values, f_opt);
}

struct TheoremParams {
  std::size_t d = 2;
  std::size_t steps = 100;  // T
  double mu = 1.0;
  double rho = 4.0;
  double diameter = 2.0;    // D
  double grad_bound = 0.0;  // L; 0 means rho * D
  double lambda = 0.0;
  std::size_t corruptions = 0;  // W
  double xi = 0.5;
  double s = 1.0;
  double phi0 = 0.5;

  void validate() const {
    if (d < 1) throw ConfigError("theorem: d must be >= 1");
    if (steps < 1) throw ConfigError("theorem: T must be >= 1");
    if (!(mu > 0.0) || !(mu < rho)) throw ConfigError("theorem: require 0 < mu < rho");
    if (!(xi > 0.0 && xi < 1.0)) throw ConfigError("theorem: require 0 < xi < 1");
    if (!(s > 0.0)) throw ConfigError("theorem: s must be > 0");
    if (!(diameter > 0.0)) throw ConfigError("theorem: D must be > 0");
    if (!(lambda >= 0.0)) throw ConfigError("theorem: Lambda must be >= 0");
    if (!(grad_bound >= 0.0)) throw ConfigError("theorem: L must be >= 0");
  }

  // Sup of |grad f| over a ball of diameter D containing the maximizer.
  double resolved_grad_bound() const { return grad_bound > 0.0 ? grad_bound : rho * diameter; }
};

struct RegretSetup {
  std::size_t d = 2;
  double mu = 1.0;
  double rho = 4.0;
  double diameter = 2.0;      // domain: ball of this diameter around start
  double start_distance = 0.5;  // |theta_0 - theta*|
  double xi = 0.5;
  double grad_bound = 0.0;   // L for the schedule; 0 -> sup bound over domain
  std::size_t batch = 16;    // P
  NoiseModel noise;
  std::vector<std::size_t> horizons{16, 64, 256, 1024};
  std::size_t runs = 50;
  std::uint64_t seed = 1;
  double inner_radius = 0.0;  // > 0: also report runs clipped at this radius

  void validate() const {
    if (d < 1) throw ConfigError("regret: d must be >= 1");
    if (!(mu > 0.0) || !(mu < rho)) throw ConfigError("regret: require 0 < mu < rho");
    if (!(xi > 0.0 && xi < 1.0)) throw ConfigError("regret: require 0 < xi < 1");
    if (!(diameter > 0.0)) throw ConfigError("regret: diameter must be > 0");
    if (!(start_distance >= 0.0)) throw ConfigError("regret: start_distance must be >= 0");
    if (batch < 1) throw ConfigError("regret: batch (P) must be >= 1");
    if (runs < 1) throw ConfigError("regret: runs must be >= 1");
    if (horizons.empty()) throw ConfigError("regret: horizons must not be empty");
    for (auto t : horizons) {
      if (t < 1) throw ConfigError("regret: horizons must be >= 1");
    }
    if (!(inner_radius >= 0.0)) throw ConfigError("regret: inner_radius must be >= 0");
    noise.validate();
    if (noise.kind == NoiseModel::Kind::Adversarial && noise.corruptions >= batch) {
      throw ConfigError("regret: adversarial noise needs W < P");
    }
  }
};

/// The fixed instance of a regret experiment: quadratic, start point and
/// the gradient-norm range over the domain.
struct RegretInstance {
  QuadraticConcave quadratic;
  ParamVector start;
  double grad_sup = 0.0;  // upper bound on |grad f| over the domain
  double grad_inf = 0.0;  // lower bound on |grad f| over the domain
  double schedule_L = 0.0;
};

inline RegretInstance make_regret_instance(const RegretSetup& setup) {
  Stream root(setup.seed);
  Stream inst = root.child(Role::Instance);
  QuadraticConcave q = make_quadratic(setup.d, setup.mu, setup.rho, inst.child(0), 1.0);
  Stream where = inst.child(1);
  ParamVector offset = sample_direction(setup.d, false, where);
  offset.normalize();
  ParamVector start = q.maximizer() + setup.start_distance * offset;
  // grad f(theta) = A (theta* - theta); over the ball of radius D/2 around
  // theta_0 the distance to theta* lies in [max(0, r - D/2), r + D/2].
  const double half = 0.5 * setup.diameter;
  RegretInstance out{std::move(q), std::move(start), 0.0, 0.0, 0.0};
  out.grad_sup = setup.rho * (setup.start_distance + half);
  out.grad_inf = setup.mu * std::max(0.0, setup.start_distance - half);
  out.schedule_L = setup.grad_bound > 0.0 ? setup.grad_bound : out.grad_sup;
  return out;
}

struct RunRegret {
  std::size_t horizon = 0;
  std::size_t run = 0;
  double final_regret = 0.0;
  double avg_regret = 0.0;
  std::optional<double> clipped_avg_regret;  // only when inner_radius > 0
  std::size_t clipped_steps = 0;
  std::uint64_t evaluations = 0;
};

struct HorizonSummary {
  std::size_t horizon = 0;
  double alpha = 0.0;
  double mean_final_regret = 0.0;
  double mean_avg_regret = 0.0;
  std::optional<double> mean_clipped_avg_regret;
  double bound = 0.0;
};

struct RegretTable {
  RegretInstance instance;
  std::vector<RunRegret> runs;  // horizon-major, then run
  std::vector<HorizonSummary> summary;
  double slope = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> clipped_slope;
  std::uint64_t evaluations = 0;
};

/// Least-squares slope of log(y) against log(x); NaN if fewer than two
/// positive points.
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) continue;
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double nn = static_cast<double>(n);
  const double den = nn * sxx - sx * sx;
  if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (nn * sxy - sx * sy) / den;
}

/// Batch HC with alpha = sigma_schedule(xi, L, T, d) on one fixed quadratic,
/// for every horizon T and `runs` seeded runs each.
inline RegretTable regret_experiment(const RegretSetup& setup, std::size_t jobs = 1) {
  setup.validate();
  RegretTable table{make_regret_instance(setup), {}, {}, {}, {}, 0};
  const RegretInstance& inst = table.instance;
  const Objective f = inst.quadratic.to_objective();
  const double f_opt = inst.quadratic.max_value();
  const ParamVector& opt = inst.quadratic.maximizer();
  Stream root = Stream(setup.seed).child(Role::Run);

  const std::size_t nh = setup.horizons.size();
  table.runs.resize(nh * setup.runs);
  parallel_for(table.runs.size(), jobs, [&](std::size_t k) {
    const std::size_t h = k / setup.runs;
    const std::size_t r = k % setup.runs;
    const std::size_t T = setup.horizons[h];
    AdaptationConfig cfg;
    cfg.variant = HcVariant::Batch;
    cfg.parallel = setup.batch;
    cfg.steps = T;
    cfg.normalize_directions = true;
    cfg.alpha = sigma_schedule(setup.xi, inst.schedule_L, static_cast<double>(T),
                               static_cast<double>(setup.d));
    Objective bounded = f;
    bounded.diameter = setup.diameter;
    NoisyObjective noisy(bounded, setup.noise);
    const auto [final_theta, trace] =
        hc_batch(inst.start, noisy, cfg, root.child(T).child(r));

    RunRegret out;
    out.horizon = T;
    out.run = r;
    out.final_regret = f_opt - *trace.iterate_truth.back();
    out.avg_regret = empirical_average_regret(trace, f_opt);
    out.evaluations = trace.evaluations;
    if (setup.inner_radius > 0.0) {
      std::vector<double> kept;
      for (std::size_t t = 0; t < T; ++t) {
        if ((trace.iterates[t] - opt).norm() < setup.inner_radius) break;
        kept.push_back(*trace.iterate_truth[t]);
      }
      out.clipped_steps = kept.size();
      if (!kept.empty()) out.clipped_avg_regret = empirical_average_regret(kept, f_opt);
    }
    table.runs[k] = out;
  });

  std::vector<double> xs, ys, ys_clipped;
  for (std::size_t h = 0; h < nh; ++h) {
    HorizonSummary s;
    s.horizon = setup.horizons[h];
    s.alpha = sigma_schedule(setup.xi, inst.schedule_L, static_cast<double>(s.horizon),
                             static_cast<double>(setup.d));
    double fin = 0.0, avg = 0.0, clip = 0.0;
    std::size_t nclip = 0;
    for (std::size_t r = 0; r < setup.runs; ++r) {
      const RunRegret& rr = table.runs[h * setup.runs + r];
      fin += rr.final_regret;
      avg += rr.avg_regret;
      table.evaluations += rr.evaluations;
      if (rr.clipped_avg_regret) {
        clip += *rr.clipped_avg_regret;
        ++nclip;
      }
    }
    s.mean_final_regret = fin / static_cast<double>(setup.runs);
    s.mean_avg_regret = avg / static_cast<double>(setup.runs);
    if (nclip > 0) s.mean_clipped_avg_regret = clip / static_cast<double>(nclip);
    s.bound = regret_bound(setup.diameter, inst.schedule_L, static_cast<double>(s.horizon));
    xs.push_back(static_cast<double>(s.horizon));
    ys.push_back(s.mean_avg_regret);
    ys_clipped.push_back(s.mean_clipped_avg_regret.value_or(0.0));
    table.summary.push_back(s);
  }
  table.slope = loglog_slope(xs, ys);
  if (setup.inner_radius > 0.0) table.clipped_slope = loglog_slope(xs, ys_clipped);
  return table;
}

}  // namespace esmaml::theory
