#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "esmaml/core.hpp"
#include "esmaml/format.hpp"
#include "esmaml/parallel.hpp"

using namespace esmaml;

namespace {

double ulps_apart(double a, double b) {
  return std::abs(a - b) / std::numeric_limits<double>::epsilon() / std::max(1.0, std::abs(b));
}

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    const double fa = static_cast<double>(i) / static_cast<double>(a.size());
    const double fb = static_cast<double>(j) / static_cast<double>(b.size());
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

}  // namespace

TEST(Stream, ReplayIsBitExact) {
  Stream a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a(), b());
  Stream c(43);
  EXPECT_NE(Stream(42)(), c());
}

TEST(Stream, ChildDependsOnlyOnKeyAndIndex) {
  Stream parent(7);
  const Stream before = parent.child(3);
  for (int i = 0; i < 17; ++i) parent();
  const Stream after = parent.child(3);
  EXPECT_EQ(before.key(), after.key());
  EXPECT_NE(parent.child(3).key(), parent.child(4).key());
  EXPECT_NE(parent.child(Role::Noise).key(), parent.child(Role::Evaluation).key());
  EXPECT_NE(parent.child(Split::Train).key(), parent.child(Split::Test).key());
}

TEST(Stream, SeedSpecNamesAStream) {
  SeedSpec spec{99, {1, 2, 3}};
  Stream direct = Stream(99).child(1).child(2).child(3);
  Stream viaSpec = spec.stream();
  for (int i = 0; i < 10; ++i) EXPECT_EQ(direct(), viaSpec());
  EXPECT_EQ(spec.then(4).stream().key(), Stream(99).child(1).child(2).child(3).child(4).key());
}

TEST(Stream, DrawOrderAcrossChildrenDoesNotMatter) {
  const Stream root(5);
  std::vector<double> forward, backward(8);
  for (int i = 0; i < 8; ++i) {
    Stream s = root.child(static_cast<std::uint64_t>(i));
    forward.push_back(s.normal());
  }
  for (int i = 7; i >= 0; --i) {
    Stream s = root.child(static_cast<std::uint64_t>(i));
    backward[static_cast<std::size_t>(i)] = s.normal();
  }
  EXPECT_EQ(forward, backward);
}

TEST(Stream, BelowIsInRange) {
  Stream s(1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = s.below(7);
    ASSERT_LT(v, 7u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
  EXPECT_THROW(s.below(0), ParameterError);
}

TEST(SampleDirection, NormalizedD4HasNormTwo) {
  Stream s(11);
  for (int i = 0; i < 100; ++i) {
    const ParamVector g = sample_direction(4, true, s);
    EXPECT_LE(ulps_apart(g.norm(), 2.0), 8.0);
  }
}

TEST(SampleDirection, NormalizedD1IsPlusOrMinusOne) {
  Stream s(12);
  bool plus = false, minus = false;
  for (int i = 0; i < 200; ++i) {
    const ParamVector g = sample_direction(1, true, s);
    ASSERT_EQ(g.size(), 1);
    ASSERT_TRUE(g[0] == 1.0 || g[0] == -1.0) << g[0];
    plus |= g[0] == 1.0;
    minus |= g[0] == -1.0;
  }
  EXPECT_TRUE(plus && minus);
}

TEST(SampleDirection, NormWithinEightUlpsUpTo64) {
  Stream s(13);
  for (std::size_t d = 1; d <= 64; ++d) {
    for (int k = 0; k < 20; ++k) {
      const ParamVector g = sample_direction(d, true, s);
      ASSERT_LE(ulps_apart(g.norm(), std::sqrt(static_cast<double>(d))), 8.0) << "d=" << d;
    }
  }
}

TEST(SampleDirection, RawSquaredNormAveragesD) {
  Stream s(14);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += sample_direction(3, false, s).squaredNorm();
  EXPECT_NEAR(sum / n, 3.0, 0.05);
}

TEST(SampleDirection, ZeroDimensionIsAnError) {
  Stream s(1);
  EXPECT_THROW(sample_direction(0, true, s), DimensionError);
}

TEST(SampleDirection, AdvancesTheStreamDeterministically) {
  Stream a(3), b(3);
  const ParamVector g1 = sample_direction(5, true, a);
  const ParamVector g2 = sample_direction(5, true, a);
  EXPECT_NE(g1, g2);
  EXPECT_EQ(g1, sample_direction(5, true, b));
  EXPECT_EQ(a.draws(), b.draws() * 2);
}

TEST(CosAngle, Examples) {
  EXPECT_DOUBLE_EQ(cos_angle(ParamVector::Unit(2, 0), ParamVector::Unit(2, 1)), 0.0);
  ParamVector g(2), v(2);
  g << 2, 0;
  v << 1, 0;
  EXPECT_DOUBLE_EQ(cos_angle(g, v), 1.0);
  g << 1, 1;
  EXPECT_NEAR(cos_angle(g, v), 0.70710678118654752, 1e-15);
}

TEST(CosAngle, Errors) {
  EXPECT_THROW(cos_angle(ParamVector::Zero(2), ParamVector::Ones(2)), DegenerateInputError);
  EXPECT_THROW(cos_angle(ParamVector::Ones(2), ParamVector::Zero(2)), DegenerateInputError);
  EXPECT_THROW(cos_angle(ParamVector::Ones(2), ParamVector::Ones(3)), DimensionError);
}

TEST(CosAngle, StaysInRange) {
  ParamVector g(3);
  g << 1e-300, 1e-300, 1e-300;
  EXPECT_LE(cos_angle(g, g), 1.0);
  EXPECT_GE(cos_angle(g, -g), -1.0);
}

TEST(CosAngle, NormalizationLeavesDirectionDistributionUnchanged) {
  const int n = 100000;
  for (std::size_t d : {2u, 5u}) {
    Stream a = Stream(21).child(d);
    Stream b = Stream(22).child(d);
    const ParamVector e1 = ParamVector::Unit(static_cast<Eigen::Index>(d), 0);
    std::vector<double> normalized, raw;
    normalized.reserve(n);
    raw.reserve(n);
    for (int i = 0; i < n; ++i) {
      normalized.push_back(cos_angle(sample_direction(d, true, a), e1));
      const ParamVector g = sample_direction(d, false, b);
      raw.push_back(g[0] / g.norm());
    }
    EXPECT_LT(ks_statistic(normalized, raw), 0.02) << "d=" << d;
  }
}

TEST(ParallelFor, ResultsDoNotDependOnJobs) {
  const Stream root(8);
  auto run = [&](std::size_t jobs) {
    std::vector<double> out(257);
    parallel_for(out.size(), jobs, [&](std::size_t i) {
      Stream s = root.child(i);
      out[i] = sample_direction(4, true, s).sum();
    });
    return out;
  };
  const auto serial = run(1);
  EXPECT_EQ(serial, run(3));
  EXPECT_EQ(serial, run(8));
}

TEST(ParallelFor, RethrowsLowestFailingIndex) {
  for (std::size_t jobs : {1u, 4u}) {
    std::atomic<int> ran{0};
    try {
      parallel_for(50, jobs, [&](std::size_t i) {
        ++ran;
        if (i == 7 || i == 30) throw std::runtime_error("item " + std::to_string(i));
      });
      FAIL() << "expected an exception";
    } catch (const std::runtime_error& e) {
      EXPECT_STREQ(e.what(), "item 7");
    }
  }
}

TEST(Format, ShortestRoundTrip) {
  EXPECT_EQ(format_number(1.046), "1.046");
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(-2.0), "-2");
  EXPECT_EQ(format_number(-0.0), "0");
  EXPECT_EQ(format_number(std::nan("")), "nan");
  EXPECT_EQ(format_number(-std::numeric_limits<double>::infinity()), "-inf");
  Stream s(4);
  for (int i = 0; i < 1000; ++i) {
    const double x = s.normal() * std::pow(10.0, s.uniform(-30, 30));
    EXPECT_EQ(std::stod(format_number(x)), x);
  }
}
