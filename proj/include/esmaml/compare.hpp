#pragma once

// Adaptation-gap tables over held-out tasks and the Batch-versus-Average
// comparison at a fixed evaluation budget.

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "esmaml/adaptation.hpp"
#include "esmaml/config.hpp"
#include "esmaml/core.hpp"
#include "esmaml/meta.hpp"
#include "esmaml/parallel.hpp"
#include "esmaml/stats.hpp"

namespace esmaml {

struct GapRow {
  std::size_t seed = 0;
  std::size_t task_index = 0;
  std::uint64_t task_id = 0;
  double meta_value = 0.0;
  double adapted_value = 0.0;
  double gap = 0.0;
  std::uint64_t evaluations = 0;  // adaptation budget consumed
  std::optional<AdaptationTrace> trace;
};

/// Test-split tasks j = 0..n-1, task j drawn from root.child(Test).child(j).
template <TaskDistribution Dist>
std::vector<typename Dist::task_type> held_out_tasks(const Dist& dist, std::size_t n,
                                                     Stream root) {
  std::vector<typename Dist::task_type> tasks;
  tasks.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    Stream s = root.child(Split::Test).child(j);
    tasks.push_back(dist.sample(Split::Test, s));
  }
  return tasks;
}

/// One gap estimate per (seed, task), seed-major. The estimate for (s, j)
/// uses eval_root.child(s).child(j) whatever the adaptation settings, so
/// tables built with different settings share their random numbers.
template <TaskDistribution Dist>
std::vector<GapRow> gap_table(const Dist& dist,
                              const std::vector<typename Dist::task_type>& tasks,
                              const ParamVector& theta, const AdaptationConfig& u,
                              const NoiseModel& noise, std::size_t seeds,
                              std::size_t n_eval, Stream eval_root, std::size_t jobs = 1,
                              bool keep_trace = false) {
  std::vector<GapRow> rows(seeds * tasks.size());
  parallel_for(rows.size(), jobs, [&](std::size_t k) {
    const std::size_t s = k / tasks.size();
    const std::size_t j = k % tasks.size();
    const Objective obj = dist.objective(tasks[j]);
    GapEstimate g =
        adaptation_gap(theta, obj, u, noise, n_eval, eval_root.child(s).child(j), keep_trace);
    GapRow& r = rows[k];
    r.seed = s;
    r.task_index = j;
    r.task_id = tasks[j].id;
    r.meta_value = g.meta_value;
    r.adapted_value = g.adapted_value;
    r.gap = g.gap;
    r.evaluations = g.adaptation_evaluations;
    r.trace = std::move(g.trace);
  });
  return rows;
}

struct GapSummary {
  stats::Moments meta;
  stats::Moments adapted;
  stats::Moments gap;
  stats::Interval gap_ci;
  std::uint64_t evaluations = 0;
};

inline GapSummary summarize(const std::vector<GapRow>& rows) {
  std::vector<double> m, a, g;
  GapSummary s;
  for (const GapRow& r : rows) {
    m.push_back(r.meta_value);
    a.push_back(r.adapted_value);
    g.push_back(r.gap);
    s.evaluations += r.evaluations;
  }
  s.meta = stats::moments(m);
  s.adapted = stats::moments(a);
  s.gap = stats::moments(g);
  s.gap_ci = stats::confidence_interval(s.gap);
  return s;
}

/// Largest Q whose total fits the budget: Average spends 2P per step,
/// Batch P + 1.
inline AdaptationConfig budgeted(AdaptationConfig u, HcVariant v, std::size_t p,
                                 std::size_t budget) {
  u.variant = v;
  u.parallel = p;
  u.steps = budget / u.evaluations_per_step();
  return u;
}

struct CompareCell {
  AdaptationConfig adaptation;
  std::vector<GapRow> rows;
  GapSummary summary;
};

struct CompareTest {
  std::size_t parallel = 0;
  double batch_mean_gap = 0.0;
  double average_mean_gap = 0.0;
  stats::TestResult test;  // H1: Batch gap > Average gap
};

struct CompareResult {
  std::vector<CompareCell> cells;  // variant-major in spec order
  std::vector<CompareTest> tests;  // for each P with both Batch and Average
  std::uint64_t evaluations = 0;

  const CompareCell* find(HcVariant v, std::size_t p) const {
    for (const auto& c : cells) {
      if (c.adaptation.variant == v && c.adaptation.parallel == p) return &c;
    }
    return nullptr;
  }
};

/// Gap of every (variant, P) cell over `seeds` x spec.test_tasks held-out
/// tasks, each adaptation held to spec.budget evaluations.
template <TaskDistribution Dist>
CompareResult compare_hc(const Dist& dist, const ParamVector& theta, const CompareSpec& spec,
                         const AdaptationConfig& base, const NoiseModel& noise,
                         std::size_t seeds, Stream root, std::size_t jobs = 1) {
  const auto tasks = held_out_tasks(dist, spec.test_tasks, root);
  CompareResult out;
  for (HcVariant v : spec.variants) {
    for (std::size_t p : spec.parallel) {
      CompareCell cell;
      cell.adaptation = budgeted(base, v, p, spec.budget);
      if (cell.adaptation.steps == 0) {
        throw ConfigError("compare_hc: budget " + std::to_string(spec.budget) +
                          " is below one " + to_string(v) + " step at P=" + std::to_string(p));
      }
      cell.rows = gap_table(dist, tasks, theta, cell.adaptation, noise, seeds,
                            spec.eval_evaluations, root.child(Role::Evaluation), jobs);
      cell.summary = summarize(cell.rows);
      out.evaluations += cell.summary.evaluations;
      out.cells.push_back(std::move(cell));
    }
  }
  for (std::size_t p : spec.parallel) {
    const CompareCell* b = out.find(HcVariant::Batch, p);
    const CompareCell* a = out.find(HcVariant::Average, p);
    if (!b || !a || b->rows.size() < 2) continue;
    CompareTest t;
    t.parallel = p;
    t.batch_mean_gap = b->summary.gap.mean;
    t.average_mean_gap = a->summary.gap.mean;
    t.test = stats::welch_greater(b->summary.gap, a->summary.gap);
    out.tests.push_back(t);
  }
  return out;
}

}  // namespace esmaml
