#pragma once

// Random streams, parameter vectors and the perturbation-direction sampler.
//
// Streams are counter based: a stream is a 64-bit key plus a draw counter,
// and child streams are derived from the key alone. Two streams reached by
// the same derivation path produce the same draws no matter when or on which
// thread they are consumed, which is what lets parallel and serial runs agree
// bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "esmaml/errors.hpp"

namespace esmaml {

/// A point in parameter space (policy weights or optimization variable).
using ParamVector = Eigen::VectorXd;

/// Which half of a task population a draw belongs to.
enum class Split : std::uint64_t { Train = 0, Test = 1 };

/// Tags that separate independent uses of randomness under one parent stream.
enum class Role : std::uint64_t {
  Direction = 0x11,
  Evaluation = 0x12,
  Noise = 0x13,
  Adversary = 0x14,
  Task = 0x15,
  Adaptation = 0x16,
  Value = 0x17,
  Instance = 0x18,
  Run = 0x19,
  Rollout = 0x1a,
};

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based random stream. Satisfies UniformRandomBitGenerator.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t master_seed) noexcept
      : key_(detail::mix64(master_seed ^ 0x6A09E667F3BCC909ull)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  /// Independent child stream. Depends only on this stream's key and the
  /// index, never on how many draws have been taken.
  Stream child(std::uint64_t index) const noexcept {
    Stream s;
    s.key_ = detail::mix64(key_ ^ detail::mix64(index + detail::kGolden)) +
             0xD1B54A32D192ED03ull;
    s.key_ = detail::mix64(s.key_);
    return s;
  }
  Stream child(Role role) const noexcept {
    return child(static_cast<std::uint64_t>(role));
  }
  Stream child(Split split) const noexcept {
    return child(static_cast<std::uint64_t>(split) + 0x5100);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return boost::random::uniform_real_distribution<double>(lo, hi)(*this);
  }

  double normal() { return boost::random::normal_distribution<double>()(*this); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ParameterError("Stream::below: n must be positive");
    // Rejection keeps the draw exactly uniform.
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t r;
    do {
      r = (*this)();
    } while (r >= limit);
    return r % n;
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t draws() const noexcept { return counter_; }

  friend bool operator==(const Stream&, const Stream&) = default;

 private:
  Stream() = default;

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// A master seed plus a derivation path; names one reproducible stream.
struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::vector<std::uint64_t> stream_path;

  Stream stream() const {
    Stream s(master_seed);
    for (auto index : stream_path) s = s.child(index);
    return s;
  }

  SeedSpec then(std::uint64_t index) const {
    SeedSpec next = *this;
    next.stream_path.push_back(index);
    return next;
  }
};

inline bool all_finite(const ParamVector& v) { return v.allFinite(); }

inline void require_same_dim(const ParamVector& a, const ParamVector& b,
                             const char* where) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(where) + ": dimension mismatch (" +
                         std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
  }
}

/// Standard Gaussian direction in R^d. With `normalize` the draw is rescaled
/// to Euclidean norm sqrt(d); a zero draw is rejected and resampled.
inline ParamVector sample_direction(std::size_t d, bool normalize, Stream& rng) {
  if (d == 0) throw DimensionError("sample_direction: dimension must be >= 1");
  ParamVector g(static_cast<Eigen::Index>(d));
  for (;;) {
    for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = rng.normal();
    if (!normalize) return g;
    const double norm = g.norm();
    if (norm > 0.0 && std::isfinite(norm)) {
      // Divide first so that d = 1 yields exactly +-1.
      g /= norm;
      if (d > 1) g *= std::sqrt(static_cast<double>(d));
      return g;
    }
  }
}

/// Cosine of the angle between two nonzero vectors, clamped to [-1, 1].
inline double cos_angle(const ParamVector& g, const ParamVector& v) {
  require_same_dim(g, v, "cos_angle");
  const double ng = g.stableNorm();
  const double nv = v.stableNorm();
  if (ng == 0.0 || nv == 0.0) {
    throw DegenerateInputError("cos_angle: zero vector");
  }
  const double c = (g / ng).dot(v / nv);
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace esmaml
