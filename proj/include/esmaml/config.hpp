#pragma once

// Experiment configuration: a JSON tree with one section per module.
// Parsing is strict (unknown keys are errors) and every error carries the
// JSON pointer of the offending node and, when the source text is known,
// its line number.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "esmaml/adaptation.hpp"
#include "esmaml/environments.hpp"
#include "esmaml/errors.hpp"
#include "esmaml/meta.hpp"
#include "esmaml/objectives.hpp"
#include "esmaml/theory.hpp"

namespace esmaml {

using Json = nlohmann::json;

enum class ExperimentKind { Train, Adapt, CompareHc, Regret, Bound };
enum class EnvironmentType { Nav2D, QuadraticFamily };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Train: return "train";
    case ExperimentKind::Adapt: return "adapt";
    case ExperimentKind::CompareHc: return "compare-hc";
    case ExperimentKind::Regret: return "regret";
    case ExperimentKind::Bound: return "bound";
  }
  return "?";
}

inline std::string to_string(EnvironmentType t) {
  return t == EnvironmentType::Nav2D ? "nav2d" : "quadratic_family";
}

inline std::string to_string(NoiseModel::Kind k) {
  switch (k) {
    case NoiseModel::Kind::None: return "none";
    case NoiseModel::Kind::IidGaussian: return "gaussian";
    case NoiseModel::Kind::BoundedUniform: return "bounded";
    case NoiseModel::Kind::Adversarial: return "adversarial";
  }
  return "?";
}

inline std::string to_string(AdversaryPolicy p) {
  return p == AdversaryPolicy::RandomSubset ? "random_subset" : "target_best";
}

inline std::optional<ExperimentKind> parse_kind(std::string_view s) {
  for (auto k : {ExperimentKind::Train, ExperimentKind::Adapt, ExperimentKind::CompareHc,
                 ExperimentKind::Regret, ExperimentKind::Bound}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct EnvironmentSpec {
  EnvironmentType type = EnvironmentType::Nav2D;
  Nav2DDistribution nav2d;
  QuadraticTaskFamily quadratic;

  std::size_t dim() const {
    return type == EnvironmentType::Nav2D ? nav2d.dim() : quadratic.dim();
  }
};

struct TrainSpec {
  bool baseline_dr = false;         // also train the Q = 0 baseline on the same seeds
  std::size_t heldout_tasks = 0;    // test-split tasks scored after training
  std::size_t heldout_evaluations = 1;
  std::vector<double> init;         // empty: zeros
};

struct AdaptSpec {
  std::vector<double> theta;  // meta-policy; empty: zeros
  std::size_t tasks = 20;
  std::size_t eval_evaluations = 10;
  bool write_trace = true;
};

struct CompareSpec {
  std::vector<std::size_t> parallel{1, 2, 5, 10, 20};
  std::vector<HcVariant> variants{HcVariant::Batch, HcVariant::Average};
  std::size_t budget = 50;  // evaluations per adaptation
  std::size_t test_tasks = 30;
  std::size_t eval_evaluations = 10;
  bool train_meta = true;   // train the meta-policy with the meta section first
  std::vector<double> theta;  // used when train_meta is false; empty: zeros
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Bound;
  std::uint64_t seed = 1;
  std::size_t runs = 1;
  std::string output_dir = "runs/out";
  EnvironmentSpec environment;
  NoiseModel noise;
  AdaptationConfig adaptation;
  MetaConfig meta;  // its adaptation and noise come from the sections above
  TrainSpec train;
  AdaptSpec adapt;
  CompareSpec compare;
  theory::RegretSetup regret;  // its noise, seed and runs come from above
  theory::TheoremParams theorem;

  MetaConfig resolved_meta() const {
    MetaConfig m = meta;
    m.adaptation = adaptation;
    m.noise = noise;
    return m;
  }

  theory::RegretSetup resolved_regret() const {
    theory::RegretSetup r = regret;
    r.noise = noise;
    r.seed = seed;
    r.runs = runs;
    return r;
  }
};

/// Configuration error tied to a node of the tree.
class ConfigNodeError : public ConfigError {
 public:
  ConfigNodeError(std::string pointer, const std::string& message)
      : ConfigError((pointer.empty() ? std::string("/") : pointer) + ": " + message),
        pointer_(std::move(pointer)),
        message_(message) {}

  const std::string& pointer() const { return pointer_; }
  const std::string& message() const { return message_; }

 private:
  std::string pointer_;
  std::string message_;
};

namespace detail {

inline Json vec_json(const ParamVector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Json vec2_json(const Eigen::Vector2d& v) { return Json::array({v[0], v[1]}); }

/// Reads one JSON object, remembering which keys were consumed.
class ObjectReader {
 public:
  ObjectReader(const Json* node, std::string pointer)
      : node_(node), pointer_(std::move(pointer)) {
    if (node_ && !node_->is_object()) throw ConfigNodeError(pointer_, "expected an object");
  }

  bool has(const char* key) const { return node_ && node_->contains(key); }

  ObjectReader child(const char* key) {
    if (!has(key)) return ObjectReader(nullptr, at(key));
    seen_.insert(key);
    return ObjectReader(&(*node_)[key], at(key));
  }

  void number(const char* key, double& out) {
    if (const Json* j = take(key)) {
      if (!j->is_number()) throw ConfigNodeError(at(key), "expected a number");
      out = j->get<double>();
    }
  }

  template <class U>
  void count(const char* key, U& out) {
    if (const Json* j = take(key)) out = static_cast<U>(as_count(*j, at(key)));
  }

  void flag(const char* key, bool& out) {
    if (const Json* j = take(key)) {
      if (!j->is_boolean()) throw ConfigNodeError(at(key), "expected true or false");
      out = j->get<bool>();
    }
  }

  void text(const char* key, std::string& out) {
    if (const Json* j = take(key)) {
      if (!j->is_string()) throw ConfigNodeError(at(key), "expected a string");
      out = j->get<std::string>();
    }
  }

  void numbers(const char* key, std::vector<double>& out) {
    if (const Json* j = take(key)) {
      if (!j->is_array()) throw ConfigNodeError(at(key), "expected an array of numbers");
      out.clear();
      for (std::size_t i = 0; i < j->size(); ++i) {
        if (!(*j)[i].is_number()) {
          throw ConfigNodeError(at(key) + "/" + std::to_string(i), "expected a number");
        }
        out.push_back((*j)[i].get<double>());
      }
    }
  }

  void counts(const char* key, std::vector<std::size_t>& out) {
    if (const Json* j = take(key)) {
      if (!j->is_array()) throw ConfigNodeError(at(key), "expected an array of integers");
      out.clear();
      for (std::size_t i = 0; i < j->size(); ++i) {
        out.push_back(static_cast<std::size_t>(
            as_count((*j)[i], at(key) + "/" + std::to_string(i))));
      }
    }
  }

  void vec2(const char* key, Eigen::Vector2d& out) {
    std::vector<double> v;
    numbers(key, v);
    if (!has(key)) return;
    if (v.size() != 2) throw ConfigNodeError(at(key), "expected 2 numbers");
    out = Eigen::Vector2d(v[0], v[1]);
  }

  void vec(const char* key, ParamVector& out) {
    std::vector<double> v;
    numbers(key, v);
    if (!has(key)) return;
    out = Eigen::Map<const ParamVector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  template <class E>
  using Options = std::vector<std::pair<std::string_view, E>>;

  template <class E>
  void choice(const char* key, E& out, const Options<E>& options) {
    if (const Json* j = take(key)) out = pick(*j, at(key), options);
  }

  template <class E>
  void choices(const char* key, std::vector<E>& out, const Options<E>& options) {
    if (const Json* j = take(key)) {
      if (!j->is_array()) throw ConfigNodeError(at(key), "expected an array");
      out.clear();
      for (std::size_t i = 0; i < j->size(); ++i) {
        out.push_back(pick((*j)[i], at(key) + "/" + std::to_string(i), options));
      }
    }
  }

  /// Rejects keys that no reader consumed.
  void finish() const {
    if (!node_) return;
    for (auto it = node_->begin(); it != node_->end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigNodeError(at(it.key()), "unknown key");
    }
  }

  std::string at(std::string_view key) const {
    std::string k(key);
    std::string escaped;
    for (char c : k) {
      if (c == '~') escaped += "~0";
      else if (c == '/') escaped += "~1";
      else escaped += c;
    }
    return pointer_ + "/" + escaped;
  }

  const std::string& pointer() const { return pointer_; }

 private:
  const Json* take(const char* key) {
    if (!has(key)) return nullptr;
    seen_.insert(key);
    return &(*node_)[key];
  }

  template <class E>
  static E pick(const Json& j, const std::string& where, const Options<E>& options) {
    if (j.is_string()) {
      const std::string s = j.get<std::string>();
      for (const auto& [name, value] : options) {
        if (name == s) return value;
      }
    }
    std::string names;
    for (const auto& o : options) names += (names.empty() ? "" : ", ") + std::string(o.first);
    throw ConfigNodeError(where, "expected one of: " + names);
  }

  static std::uint64_t as_count(const Json& j, const std::string& where) {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer()) {
      if (j.get<std::int64_t>() >= 0) return j.get<std::uint64_t>();
    }
    if (j.is_number_float()) {
      const double d = j.get<double>();
      if (d >= 0.0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
    }
    throw ConfigNodeError(where, "expected a non-negative integer");
  }

  const Json* node_;
  std::string pointer_;
  std::set<std::string> seen_;
};

inline const ObjectReader::Options<HcVariant>& variant_names() {
  static const ObjectReader::Options<HcVariant> names{{"sequential", HcVariant::Sequential},
                                                      {"average", HcVariant::Average},
                                                      {"batch", HcVariant::Batch}};
  return names;
}

inline void read_interval(ObjectReader r, Interval& out) {
  r.number("lo", out.lo);
  r.number("hi", out.hi);
  r.finish();
}

inline void read_box(ObjectReader r, Box2& out) {
  r.vec2("lo", out.lo);
  r.vec2("hi", out.hi);
  r.finish();
}

inline Json interval_json(const Interval& i) { return {{"lo", i.lo}, {"hi", i.hi}}; }
inline Json box_json(const Box2& b) {
  return {{"lo", vec2_json(b.lo)}, {"hi", vec2_json(b.hi)}};
}

}  // namespace detail

/// Builds a config from a parsed tree. Absent keys keep their defaults.
inline ExperimentConfig config_from_json(const Json& root) {
  using detail::ObjectReader;
  ExperimentConfig c;
  ObjectReader top(&root, "");

  if (top.has("kind")) {
    std::string k;
    top.text("kind", k);
    auto kind = parse_kind(k);
    if (!kind) {
      throw ConfigNodeError("/kind",
                            "expected one of: train, adapt, compare-hc, regret, bound");
    }
    c.kind = *kind;
  }
  top.count("seed", c.seed);
  top.count("runs", c.runs);
  top.text("output_dir", c.output_dir);

  {
    ObjectReader env = top.child("environment");
    env.choice<EnvironmentType>("type", c.environment.type,
               {{"nav2d", EnvironmentType::Nav2D},
                {"quadratic_family", EnvironmentType::QuadraticFamily}});
    {
      ObjectReader n = env.child("nav2d");
      Nav2DDistribution& d = c.environment.nav2d;
      if (n.has("goal_range")) detail::read_box(n.child("goal_range"), d.goal_range);
      if (n.has("gain_range")) detail::read_interval(n.child("gain_range"), d.gain_range);
      if (n.has("drift_range")) detail::read_box(n.child("drift_range"), d.drift_range);
      n.number("obs_noise_std", d.obs_noise_std);
      n.count("horizon", d.horizon);
      n.number("action_clip", d.action_clip);
      n.count("seed", d.seed);
      n.count("rollouts_per_eval", d.rollouts_per_eval);
      n.finish();
    }
    {
      ObjectReader q = env.child("quadratic_family");
      QuadraticTaskFamily& f = c.environment.quadratic;
      q.count("dimension", f.dimension);
      q.number("mu", f.mu);
      q.number("rho", f.rho);
      if (q.has("gain_range")) detail::read_interval(q.child("gain_range"), f.gain_range);
      f.target_center = ParamVector::Ones(static_cast<Eigen::Index>(f.dimension));
      q.vec("target_center", f.target_center);
      q.number("target_jitter", f.target_jitter);
      q.count("seed", f.seed);
      q.finish();
    }
    env.finish();
  }

  {
    ObjectReader n = top.child("noise");
    n.choice<NoiseModel::Kind>("kind", c.noise.kind,
             {{"none", NoiseModel::Kind::None},
              {"gaussian", NoiseModel::Kind::IidGaussian},
              {"bounded", NoiseModel::Kind::BoundedUniform},
              {"adversarial", NoiseModel::Kind::Adversarial}});
    n.number("scale", c.noise.scale);
    n.count("corruptions", c.noise.corruptions);
    n.choice<AdversaryPolicy>("policy", c.noise.policy,
             {{"random_subset", AdversaryPolicy::RandomSubset},
              {"target_best", AdversaryPolicy::TargetBest}});
    n.finish();
  }

  {
    ObjectReader a = top.child("adaptation");
    a.choice("variant", c.adaptation.variant, detail::variant_names());
    a.number("alpha", c.adaptation.alpha);
    a.count("steps", c.adaptation.steps);
    a.count("parallel", c.adaptation.parallel);
    a.flag("normalize_directions", c.adaptation.normalize_directions);
    a.finish();
  }

  {
    ObjectReader m = top.child("meta");
    m.number("sigma", c.meta.sigma);
    m.number("beta", c.meta.beta);
    m.count("pairs", c.meta.pairs);
    m.count("iterations", c.meta.iterations);
    m.flag("normalize_outer", c.meta.normalize_outer);
    m.count("value_evaluations", c.meta.value_evaluations);
    m.finish();
  }

  {
    ObjectReader t = top.child("train");
    t.flag("baseline_dr", c.train.baseline_dr);
    t.count("heldout_tasks", c.train.heldout_tasks);
    t.count("heldout_evaluations", c.train.heldout_evaluations);
    t.numbers("init", c.train.init);
    t.finish();
  }

  {
    ObjectReader a = top.child("adapt");
    a.numbers("theta", c.adapt.theta);
    a.count("tasks", c.adapt.tasks);
    a.count("eval_evaluations", c.adapt.eval_evaluations);
    a.flag("write_trace", c.adapt.write_trace);
    a.finish();
  }

  {
    ObjectReader h = top.child("compare");
    h.counts("parallel", c.compare.parallel);
    h.choices("variants", c.compare.variants, detail::variant_names());
    h.count("budget", c.compare.budget);
    h.count("test_tasks", c.compare.test_tasks);
    h.count("eval_evaluations", c.compare.eval_evaluations);
    h.flag("train_meta", c.compare.train_meta);
    h.numbers("theta", c.compare.theta);
    h.finish();
  }

  {
    ObjectReader r = top.child("regret");
    r.count("d", c.regret.d);
    r.number("mu", c.regret.mu);
    r.number("rho", c.regret.rho);
    r.number("diameter", c.regret.diameter);
    r.number("start_distance", c.regret.start_distance);
    r.number("xi", c.regret.xi);
    r.number("grad_bound", c.regret.grad_bound);
    r.count("batch", c.regret.batch);
    r.counts("horizons", c.regret.horizons);
    r.number("inner_radius", c.regret.inner_radius);
    r.finish();
  }

  {
    ObjectReader t = top.child("theorem");
    t.count("d", c.theorem.d);
    t.count("steps", c.theorem.steps);
    t.number("mu", c.theorem.mu);
    t.number("rho", c.theorem.rho);
    t.number("diameter", c.theorem.diameter);
    t.number("grad_bound", c.theorem.grad_bound);
    t.number("lambda", c.theorem.lambda);
    t.count("corruptions", c.theorem.corruptions);
    t.number("xi", c.theorem.xi);
    t.number("s", c.theorem.s);
    t.number("phi0", c.theorem.phi0);
    t.finish();
  }

  top.finish();
  return c;
}

/// The complete tree, every field explicit.
inline Json config_to_json(const ExperimentConfig& c) {
  const Nav2DDistribution& n = c.environment.nav2d;
  const QuadraticTaskFamily& q = c.environment.quadratic;
  Json variants = Json::array();
  for (auto v : c.compare.variants) variants.push_back(to_string(v));
  return {
      {"kind", to_string(c.kind)},
      {"seed", c.seed},
      {"runs", c.runs},
      {"output_dir", c.output_dir},
      {"environment",
       {{"type", to_string(c.environment.type)},
        {"nav2d",
         {{"goal_range", detail::box_json(n.goal_range)},
          {"gain_range", detail::interval_json(n.gain_range)},
          {"drift_range", detail::box_json(n.drift_range)},
          {"obs_noise_std", n.obs_noise_std},
          {"horizon", n.horizon},
          {"action_clip", n.action_clip},
          {"seed", n.seed},
          {"rollouts_per_eval", n.rollouts_per_eval}}},
        {"quadratic_family",
         {{"dimension", q.dimension},
          {"mu", q.mu},
          {"rho", q.rho},
          {"gain_range", detail::interval_json(q.gain_range)},
          {"target_center", detail::vec_json(q.target_center)},
          {"target_jitter", q.target_jitter},
          {"seed", q.seed}}}}},
      {"noise",
       {{"kind", to_string(c.noise.kind)},
        {"scale", c.noise.scale},
        {"corruptions", c.noise.corruptions},
        {"policy", to_string(c.noise.policy)}}},
      {"adaptation",
       {{"variant", to_string(c.adaptation.variant)},
        {"alpha", c.adaptation.alpha},
        {"steps", c.adaptation.steps},
        {"parallel", c.adaptation.parallel},
        {"normalize_directions", c.adaptation.normalize_directions}}},
      {"meta",
       {{"sigma", c.meta.sigma},
        {"beta", c.meta.beta},
        {"pairs", c.meta.pairs},
        {"iterations", c.meta.iterations},
        {"normalize_outer", c.meta.normalize_outer},
        {"value_evaluations", c.meta.value_evaluations}}},
      {"train",
       {{"baseline_dr", c.train.baseline_dr},
        {"heldout_tasks", c.train.heldout_tasks},
        {"heldout_evaluations", c.train.heldout_evaluations},
        {"init", c.train.init}}},
      {"adapt",
       {{"theta", c.adapt.theta},
        {"tasks", c.adapt.tasks},
        {"eval_evaluations", c.adapt.eval_evaluations},
        {"write_trace", c.adapt.write_trace}}},
      {"compare",
       {{"parallel", c.compare.parallel},
        {"variants", variants},
        {"budget", c.compare.budget},
        {"test_tasks", c.compare.test_tasks},
        {"eval_evaluations", c.compare.eval_evaluations},
        {"train_meta", c.compare.train_meta},
        {"theta", c.compare.theta}}},
      {"regret",
       {{"d", c.regret.d},
        {"mu", c.regret.mu},
        {"rho", c.regret.rho},
        {"diameter", c.regret.diameter},
        {"start_distance", c.regret.start_distance},
        {"xi", c.regret.xi},
        {"grad_bound", c.regret.grad_bound},
        {"batch", c.regret.batch},
        {"horizons", c.regret.horizons},
        {"inner_radius", c.regret.inner_radius}}},
      {"theorem",
       {{"d", c.theorem.d},
        {"steps", c.theorem.steps},
        {"mu", c.theorem.mu},
        {"rho", c.theorem.rho},
        {"diameter", c.theorem.diameter},
        {"grad_bound", c.theorem.grad_bound},
        {"lambda", c.theorem.lambda},
        {"corruptions", c.theorem.corruptions},
        {"xi", c.theorem.xi},
        {"s", c.theorem.s},
        {"phi0", c.theorem.phi0}}},
  };
}

namespace detail {

inline void check_theta(const std::vector<double>& theta, std::size_t dim,
                        const std::string& pointer) {
  if (!theta.empty() && theta.size() != dim) {
    throw ConfigNodeError(pointer, "has " + std::to_string(theta.size()) +
                                       " entries, the environment expects " +
                                       std::to_string(dim));
  }
}

template <class Fn>
void at_node(const std::string& pointer, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigNodeError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigNodeError(pointer, e.what());
  }
}

}  // namespace detail

/// Checks every precondition the selected experiment kind depends on.
inline void validate_config(const ExperimentConfig& c) {
  using detail::at_node;
  if (c.output_dir.empty()) throw ConfigNodeError("/output_dir", "must not be empty");
  if (c.runs < 1) throw ConfigNodeError("/runs", "must be >= 1");
  at_node("/noise", [&] {
    c.noise.validate();
    if (c.noise.kind != NoiseModel::Kind::Adversarial && c.noise.corruptions != 0) {
      throw ConfigError("corruptions is only meaningful for adversarial noise");
    }
  });

  const bool uses_env = c.kind == ExperimentKind::Train || c.kind == ExperimentKind::Adapt ||
                        c.kind == ExperimentKind::CompareHc;
  if (uses_env) {
    if (c.environment.type == EnvironmentType::Nav2D) {
      at_node("/environment/nav2d", [&] {
        c.environment.nav2d.validate();
        Nav2DTask probe = c.environment.nav2d.task(0);
        probe.validate();
      });
    } else {
      at_node("/environment/quadratic_family", [&] { c.environment.quadratic.validate(); });
    }
  }

  switch (c.kind) {
    case ExperimentKind::Train:
      at_node("/adaptation", [&] { c.adaptation.validate(c.noise); });
      at_node("/meta", [&] { c.resolved_meta().validate(); });
      detail::check_theta(c.train.init, c.environment.dim(), "/train/init");
      if (c.train.heldout_tasks > 0 && c.train.heldout_evaluations < 1) {
        throw ConfigNodeError("/train/heldout_evaluations", "must be >= 1");
      }
      break;
    case ExperimentKind::Adapt:
      at_node("/adaptation", [&] { c.adaptation.validate(c.noise); });
      detail::check_theta(c.adapt.theta, c.environment.dim(), "/adapt/theta");
      if (c.adapt.tasks < 1) throw ConfigNodeError("/adapt/tasks", "must be >= 1");
      if (c.adapt.eval_evaluations < 1) {
        throw ConfigNodeError("/adapt/eval_evaluations", "must be >= 1");
      }
      break;
    case ExperimentKind::CompareHc: {
      if (c.compare.parallel.empty()) throw ConfigNodeError("/compare/parallel", "must not be empty");
      if (c.compare.variants.empty()) throw ConfigNodeError("/compare/variants", "must not be empty");
      if (c.compare.test_tasks < 1) throw ConfigNodeError("/compare/test_tasks", "must be >= 1");
      if (c.compare.eval_evaluations < 1) {
        throw ConfigNodeError("/compare/eval_evaluations", "must be >= 1");
      }
      for (std::size_t i = 0; i < c.compare.parallel.size(); ++i) {
        for (HcVariant v : c.compare.variants) {
          AdaptationConfig u = c.adaptation;
          u.variant = v;
          u.parallel = c.compare.parallel[i];
          const std::string where = "/compare/parallel/" + std::to_string(i);
          at_node(where, [&] { u.validate(c.noise); });
          if (c.compare.budget < u.evaluations_per_step()) {
            throw ConfigNodeError(where, "budget " + std::to_string(c.compare.budget) +
                                             " is below one " + to_string(v) + " step (" +
                                             std::to_string(u.evaluations_per_step()) +
                                             " evaluations)");
          }
        }
      }
      at_node("/adaptation", [&] {
        if (!(c.adaptation.alpha > 0.0)) throw ConfigError("alpha must be > 0");
      });
      if (c.compare.train_meta) {
        at_node("/meta", [&] { c.resolved_meta().validate(); });
      } else {
        detail::check_theta(c.compare.theta, c.environment.dim(), "/compare/theta");
      }
      break;
    }
    case ExperimentKind::Regret:
      at_node("/regret", [&] { c.resolved_regret().validate(); });
      break;
    case ExperimentKind::Bound:
      at_node("/theorem", [&] {
        c.theorem.validate();
        if (!(c.theorem.phi0 > 0.0 && c.theorem.phi0 < std::numbers::pi / 4.0)) {
          throw ConfigError("phi0 must lie in (0, pi/4)");
        }
        const double denom = 1.0 - 4.0 * (c.theorem.rho - c.theorem.mu) * c.theorem.xi / 7.0;
        if (!(denom > 0.0)) {
          throw ConfigError("require 1 - 4 (rho - mu) xi / 7 > 0 for the L threshold");
        }
      });
      break;
  }
}

/// 1-based line of the node named by `pointer` in `text`, found by walking
/// its object keys in order. 0 when unknown.
inline std::size_t line_of(std::string_view text, std::string_view pointer) {
  if (text.empty()) return 0;
  std::size_t pos = 0;
  bool found = false;
  std::size_t start = pointer.empty() ? std::string_view::npos : 1;
  while (start != std::string_view::npos && start <= pointer.size()) {
    const std::size_t end = pointer.find('/', start);
    std::string token(pointer.substr(start, end == std::string_view::npos ? end : end - start));
    start = end == std::string_view::npos ? end : end + 1;
    const bool index = !token.empty() &&
                       token.find_first_not_of("0123456789") == std::string::npos;
    if (index) continue;
    std::string unescaped;
    for (std::size_t i = 0; i < token.size(); ++i) {
      if (token[i] == '~' && i + 1 < token.size()) {
        unescaped += token[i + 1] == '1' ? '/' : '~';
        ++i;
      } else {
        unescaped += token[i];
      }
    }
    const std::size_t at = text.find("\"" + unescaped + "\"", pos);
    if (at == std::string_view::npos) break;
    pos = at;
    found = true;
  }
  if (!found) return 0;
  std::size_t line = 1;
  for (std::size_t i = 0; i < pos; ++i) line += text[i] == '\n';
  return line;
}

/// Parses and validates config text. `adjust` runs between parsing and
/// validation (command-line overrides). Errors come back as ConfigError with
/// a "<source>:<line>: <pointer>: <message>" message.
inline ExperimentConfig parse_config(
    std::string_view text, std::string_view source = "config",
    const std::function<void(ExperimentConfig&, const Json&)>& adjust = {}) {
  Json root;
  try {
    root = Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    std::size_t line = 1;
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    for (std::size_t i = 0; i + 1 < upto; ++i) line += text[i] == '\n';
    throw ConfigError(std::string(source) + ":" + std::to_string(line) +
                      ": invalid JSON: " + e.what());
  }
  try {
    ExperimentConfig c = config_from_json(root);
    if (adjust) adjust(c, root);
    validate_config(c);
    return c;
  } catch (const ConfigNodeError& e) {
    const std::size_t line = line_of(text, e.pointer());
    throw ConfigError(std::string(source) + ":" +
                      (line > 0 ? std::to_string(line) + ":" : std::string()) + " " +
                      (e.pointer().empty() ? std::string("/") : e.pointer()) + ": " +
                      e.message());
  }
}

}  // namespace esmaml
