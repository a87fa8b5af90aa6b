#pragma once

// Experiment orchestration: runs one configured experiment into an output
// directory, writes its CSVs and a manifest, and derives plot-ready files
// from a finished run directory.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "json.hpp"

#include "esmaml/compare.hpp"
#include "esmaml/config.hpp"
#include "esmaml/environments.hpp"
#include "esmaml/errors.hpp"
#include "esmaml/format.hpp"
#include "esmaml/meta.hpp"
#include "esmaml/stats.hpp"
#include "esmaml/theory.hpp"

namespace esmaml {

namespace fs = std::filesystem;

/// 64-bit FNV-1a, as 16 lowercase hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return out;
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string kind;
  std::string config_hash;  // FNV-1a of config.resolved.json
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  std::map<std::string, std::uint64_t> budget;  // evaluation counters by category
  std::vector<std::string> files;              // relative to the run directory

  Json to_json() const {
    return {{"kind", kind},
            {"config_hash", config_hash},
            {"seed", seed},
            {"started_at", started_at},
            {"finished_at", finished_at},
            {"budget", budget},
            {"files", files}};
  }
};

struct RunOptions {
  std::size_t jobs = 1;
  std::string config_text;  // verbatim source; empty: the resolved tree is used
};

namespace detail {

struct RunContext {
  const ExperimentConfig& cfg;
  fs::path dir;
  std::size_t jobs;
  RunManifest& manifest;

  CsvWriter csv(const std::string& name) {
    manifest.files.push_back(name);
    return CsvWriter((dir / name).string());
  }

  void text(const std::string& name, std::string_view body) {
    manifest.files.push_back(name);
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + (dir / name).string() + " for writing");
    out << body;
    if (!out) throw Error("failed writing " + (dir / name).string());
  }
};

template <class Fn>
decltype(auto) with_distribution(const EnvironmentSpec& env, Fn&& fn) {
  if (env.type == EnvironmentType::Nav2D) return fn(env.nav2d);
  return fn(env.quadratic);
}

inline ParamVector theta_or_zero(const std::vector<double>& v, std::size_t dim) {
  if (v.empty()) return ParamVector::Zero(static_cast<Eigen::Index>(dim));
  return Eigen::Map<const ParamVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline void write_meta_trace(CsvWriter& w, std::string_view method, std::size_t run,
                             const MetaTrace& trace) {
  std::uint64_t used = 0;
  for (const MetaIteration& it : trace.iterations) {
    used += it.evaluations;
    for (std::size_t i = 0; i < it.pairs.size(); ++i) {
      const PairRecord& p = it.pairs[i];
      w.cell(method).cell(run).cell(it.iteration).cell(i).cell(p.task_id)
          .cell(p.v_plus).cell(p.v_minus).cell(it.grad_norm).cell(used).end_row();
    }
  }
}

inline void meta_trace_header(CsvWriter& w) {
  w.header({"method", "run", "iteration", "pair_index", "task_id", "v_plus", "v_minus",
            "grad_norm", "budget_used"});
}

inline void write_theta(CsvWriter& w, std::string_view method, std::size_t run,
                        const ParamVector& theta) {
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    w.cell(method).cell(run).cell(static_cast<std::size_t>(i)).cell(theta[i]).end_row();
  }
}

inline void gap_summary_cells(CsvWriter& w, const GapSummary& s) {
  w.cell(s.gap.n).cell(s.meta.mean).cell(s.adapted.mean).cell(s.gap.mean)
      .cell(s.gap.std_dev);
}

template <TaskDistribution Dist>
void run_train(RunContext& ctx, const Dist& dist) {
  const ExperimentConfig& cfg = ctx.cfg;
  const Stream root(cfg.seed);
  const ParamVector init = theta_or_zero(cfg.train.init, dist.dim());

  struct Method {
    std::string name;
    MetaConfig meta;
  };
  std::vector<Method> methods{{"es-maml", cfg.resolved_meta()}};
  if (cfg.train.baseline_dr) {
    MetaConfig dr = cfg.resolved_meta();
    dr.adaptation.steps = 0;
    methods.push_back({"dr", dr});
  }

  std::vector<std::vector<ParamVector>> thetas(methods.size());
  CsvWriter trace = ctx.csv("meta_trace.csv");
  meta_trace_header(trace);
  std::uint64_t meta_evals = 0;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    for (std::size_t r = 0; r < cfg.runs; ++r) {
      auto [theta, tr] = es_maml_train(init, dist, methods[m].meta,
                                       root.child(Role::Run).child(r), ctx.jobs);
      write_meta_trace(trace, methods[m].name, r, tr);
      meta_evals += tr.total_evaluations();
      thetas[m].push_back(std::move(theta));
    }
  }
  trace.close();
  ctx.manifest.budget["meta_evaluations"] = meta_evals;

  CsvWriter th = ctx.csv("theta.csv");
  th.header({"method", "run", "index", "value"});
  for (std::size_t m = 0; m < methods.size(); ++m) {
    for (std::size_t r = 0; r < cfg.runs; ++r) write_theta(th, methods[m].name, r, thetas[m][r]);
  }
  th.close();

  if (cfg.train.heldout_tasks == 0) return;
  const auto tasks = held_out_tasks(dist, cfg.train.heldout_tasks, root);
  CsvWriter raw = ctx.csv("heldout.csv");
  raw.header({"method", "run", "task_index", "task_id", "meta_value", "adapted_value", "gap",
              "evaluations"});
  std::vector<std::vector<GapRow>> all(methods.size());
  std::uint64_t adapt_evals = 0;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    for (std::size_t r = 0; r < cfg.runs; ++r) {
      auto rows = gap_table(dist, tasks, thetas[m][r], cfg.adaptation, cfg.noise, 1,
                            cfg.train.heldout_evaluations,
                            root.child(Role::Evaluation).child(r), ctx.jobs);
      for (const GapRow& g : rows) {
        raw.cell(methods[m].name).cell(r).cell(g.task_index).cell(g.task_id)
            .cell(g.meta_value).cell(g.adapted_value).cell(g.gap).cell(g.evaluations).end_row();
        adapt_evals += g.evaluations;
        all[m].push_back(g);
      }
    }
  }
  raw.close();
  ctx.manifest.budget["heldout_adaptation_evaluations"] = adapt_evals;

  CsvWriter sum = ctx.csv("heldout_summary.csv");
  sum.header({"method", "n", "mean_meta", "mean_adapted", "mean_gap", "std_gap"});
  for (std::size_t m = 0; m < methods.size(); ++m) {
    sum.cell(methods[m].name);
    gap_summary_cells(sum, summarize(all[m]));
    sum.end_row();
  }
  sum.close();
}

template <TaskDistribution Dist>
void run_adapt(RunContext& ctx, const Dist& dist) {
  const ExperimentConfig& cfg = ctx.cfg;
  const Stream root(cfg.seed);
  const ParamVector theta = theta_or_zero(cfg.adapt.theta, dist.dim());
  const auto tasks = held_out_tasks(dist, cfg.adapt.tasks, root);
  const auto rows = gap_table(dist, tasks, theta, cfg.adaptation, cfg.noise, cfg.runs,
                              cfg.adapt.eval_evaluations, root.child(Role::Evaluation),
                              ctx.jobs, cfg.adapt.write_trace);

  CsvWriter w = ctx.csv("adapt.csv");
  w.header({"run", "task_index", "task_id", "meta_value", "adapted_value", "gap",
            "evaluations"});
  for (const GapRow& g : rows) {
    w.cell(g.seed).cell(g.task_index).cell(g.task_id).cell(g.meta_value)
        .cell(g.adapted_value).cell(g.gap).cell(g.evaluations).end_row();
  }
  w.close();

  const GapSummary s = summarize(rows);
  ctx.manifest.budget["adaptation_evaluations"] = s.evaluations;
  CsvWriter sw = ctx.csv("adapt_summary.csv");
  sw.header({"n", "mean_meta", "mean_adapted", "mean_gap", "std_gap"});
  gap_summary_cells(sw, s);
  sw.end_row();
  sw.close();

  if (!cfg.adapt.write_trace || cfg.adaptation.steps == 0) return;
  std::string body =
      "run,task_index,step,candidate_index,is_incumbent,noisy_value,true_value_or_blank,"
      "selected\n";
  for (const GapRow& g : rows) {
    std::ostringstream os;
    write_trace_csv(os, *g.trace, false);
    const std::string prefix = std::to_string(g.seed) + "," + std::to_string(g.task_index) + ",";
    std::istringstream lines(os.str());
    for (std::string line; std::getline(lines, line);) body += prefix + line + "\n";
  }
  ctx.text("adapt_trace.csv", body);
}

template <TaskDistribution Dist>
void run_compare(RunContext& ctx, const Dist& dist) {
  const ExperimentConfig& cfg = ctx.cfg;
  const Stream root(cfg.seed);
  ParamVector theta;
  if (cfg.compare.train_meta) {
    auto [trained, tr] = es_maml_train(ParamVector::Zero(static_cast<Eigen::Index>(dist.dim())),
                                       dist, cfg.resolved_meta(),
                                       root.child(Role::Run).child(0), ctx.jobs);
    theta = std::move(trained);
    CsvWriter t = ctx.csv("meta_trace.csv");
    meta_trace_header(t);
    write_meta_trace(t, "es-maml", 0, tr);
    t.close();
    ctx.manifest.budget["meta_evaluations"] = tr.total_evaluations();
  } else {
    theta = theta_or_zero(cfg.compare.theta, dist.dim());
  }
  CsvWriter th = ctx.csv("theta.csv");
  th.header({"method", "run", "index", "value"});
  write_theta(th, cfg.compare.train_meta ? "es-maml" : "given", 0, theta);
  th.close();

  const CompareResult res =
      compare_hc(dist, theta, cfg.compare, cfg.adaptation, cfg.noise, cfg.runs, root, ctx.jobs);
  ctx.manifest.budget["adaptation_evaluations"] = res.evaluations;

  CsvWriter raw = ctx.csv("compare_raw.csv");
  raw.header({"variant", "P", "Q", "seed", "task_index", "task_id", "meta_value",
              "adapted_value", "gap", "evaluations"});
  for (const CompareCell& c : res.cells) {
    for (const GapRow& g : c.rows) {
      raw.cell(to_string(c.adaptation.variant)).cell(c.adaptation.parallel)
          .cell(c.adaptation.steps).cell(g.seed).cell(g.task_index).cell(g.task_id)
          .cell(g.meta_value).cell(g.adapted_value).cell(g.gap).cell(g.evaluations).end_row();
    }
  }
  raw.close();

  CsvWriter sum = ctx.csv("compare_summary.csv");
  sum.header({"variant", "P", "Q", "budget_used", "n", "mean_meta", "mean_adapted", "mean_gap",
              "std_gap", "ci_low", "ci_high"});
  for (const CompareCell& c : res.cells) {
    sum.cell(to_string(c.adaptation.variant)).cell(c.adaptation.parallel)
        .cell(c.adaptation.steps).cell(c.adaptation.total_evaluations());
    gap_summary_cells(sum, c.summary);
    sum.cell(c.summary.gap_ci.low).cell(c.summary.gap_ci.high).end_row();
  }
  sum.close();

  if (res.tests.empty()) return;
  CsvWriter tests = ctx.csv("compare_tests.csv");
  tests.header({"P", "batch_mean_gap", "average_mean_gap", "t", "df", "p_value"});
  for (const CompareTest& t : res.tests) {
    tests.cell(t.parallel).cell(t.batch_mean_gap).cell(t.average_mean_gap)
        .cell(t.test.statistic).cell(t.test.df).cell(t.test.p_value).end_row();
  }
  tests.close();
}

inline void run_regret(RunContext& ctx) {
  const theory::RegretSetup setup = ctx.cfg.resolved_regret();
  const theory::RegretTable table = theory::regret_experiment(setup, ctx.jobs);
  ctx.manifest.budget["adaptation_evaluations"] = table.evaluations;

  CsvWriter raw = ctx.csv("regret_runs.csv");
  raw.header({"T", "run", "alpha", "final_regret", "avg_regret", "bound", "clipped_avg_regret",
              "clipped_steps", "evaluations"});
  for (std::size_t h = 0; h < table.summary.size(); ++h) {
    const theory::HorizonSummary& s = table.summary[h];
    for (std::size_t r = 0; r < setup.runs; ++r) {
      const theory::RunRegret& rr = table.runs[h * setup.runs + r];
      raw.cell(rr.horizon).cell(rr.run).cell(s.alpha).cell(rr.final_regret)
          .cell(rr.avg_regret).cell(s.bound);
      if (rr.clipped_avg_regret) raw.cell(*rr.clipped_avg_regret);
      else raw.cell("");
      raw.cell(rr.clipped_steps).cell(rr.evaluations).end_row();
    }
  }
  raw.close();

  CsvWriter sum = ctx.csv("regret.csv");
  sum.header({"T", "run", "final_regret", "avg_regret", "bound", "slope"});
  for (const theory::HorizonSummary& s : table.summary) {
    sum.cell(s.horizon).cell("mean").cell(s.mean_final_regret).cell(s.mean_avg_regret)
        .cell(s.bound).cell(table.slope).end_row();
  }
  sum.close();

  if (table.clipped_slope) {
    CsvWriter clip = ctx.csv("regret_clipped.csv");
    clip.header({"T", "runs_with_steps", "clipped_avg_regret", "slope"});
    for (std::size_t h = 0; h < table.summary.size(); ++h) {
      std::size_t n = 0;
      for (std::size_t r = 0; r < setup.runs; ++r) {
        n += table.runs[h * setup.runs + r].clipped_avg_regret.has_value();
      }
      const auto& s = table.summary[h];
      clip.cell(s.horizon).cell(n);
      if (s.mean_clipped_avg_regret) clip.cell(*s.mean_clipped_avg_regret);
      else clip.cell("");
      clip.cell(*table.clipped_slope).end_row();
    }
    clip.close();
  }

  CsvWriter inst = ctx.csv("regret_instance.csv");
  inst.header({"quantity", "value"});
  inst.cell("f_opt").cell(table.instance.quadratic.max_value()).end_row();
  inst.cell("start_distance").cell(setup.start_distance).end_row();
  inst.cell("grad_sup").cell(table.instance.grad_sup).end_row();
  inst.cell("grad_inf").cell(table.instance.grad_inf).end_row();
  inst.cell("schedule_L").cell(table.instance.schedule_L).end_row();
  inst.close();
}

inline void run_bound(RunContext& ctx) {
  const theory::TheoremParams& p = ctx.cfg.theorem;
  const double T = static_cast<double>(p.steps);
  const double d = static_cast<double>(p.d);
  const double L = p.resolved_grad_bound();
  const double sigma = theory::sigma_schedule(p.xi, L, T, d);
  const theory::BatchRequirement batch = theory::required_batch_log(p.corruptions, p.s, d, T);

  CsvWriter w = ctx.csv("bound.csv");
  w.header({"D", "L", "T", "d", "xi", "sigma", "regret_bound", "min_L", "batch_log_excess",
            "batch_min", "batch_overflow", "tau", "tau_lower", "grad_length_bound"});
  w.cell(p.diameter).cell(L).cell(p.steps).cell(p.d).cell(p.xi).cell(sigma)
      .cell(theory::regret_bound(p.diameter, L, T))
      .cell(theory::min_L_threshold(p.lambda, T, p.xi, p.rho, p.mu))
      .cell(batch.log_excess);
  if (batch.min_batch) w.cell(static_cast<unsigned long long>(*batch.min_batch));
  else w.cell("");
  w.cell(batch.overflow ? 1 : 0)
      .cell(theory::tau(p.phi0))
      .cell(theory::tau_lower_bound(p.phi0))
      .cell(theory::gradient_length_bound(p.rho, p.mu, p.phi0, d, sigma, p.lambda))
      .end_row();
  w.close();
}

inline void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace detail

/// Runs the experiment into cfg.output_dir. Writes config.json (verbatim),
/// config.resolved.json, the kind's CSVs and manifest.json. On a runtime
/// failure, writes failure.json next to whatever was produced and rethrows.
inline RunManifest run(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  validate_config(cfg);
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);

  RunManifest manifest;
  manifest.kind = to_string(cfg.kind);
  manifest.seed = cfg.seed;
  manifest.started_at = utc_now();

  const std::string resolved = config_to_json(cfg).dump(2) + "\n";
  manifest.config_hash = fnv1a_hex(resolved);
  detail::RunContext ctx{cfg, dir, std::max<std::size_t>(1, opts.jobs), manifest};
  ctx.text("config.json", opts.config_text.empty() ? resolved : opts.config_text);
  ctx.text("config.resolved.json", resolved);

  try {
    switch (cfg.kind) {
      case ExperimentKind::Train:
        detail::with_distribution(cfg.environment, [&](const auto& d) { detail::run_train(ctx, d); });
        break;
      case ExperimentKind::Adapt:
        detail::with_distribution(cfg.environment, [&](const auto& d) { detail::run_adapt(ctx, d); });
        break;
      case ExperimentKind::CompareHc:
        detail::with_distribution(cfg.environment, [&](const auto& d) { detail::run_compare(ctx, d); });
        break;
      case ExperimentKind::Regret: detail::run_regret(ctx); break;
      case ExperimentKind::Bound: detail::run_bound(ctx); break;
    }
  } catch (const std::exception& e) {
    Json failure = {{"kind", manifest.kind},
                    {"error", e.what()},
                    {"started_at", manifest.started_at},
                    {"failed_at", utc_now()},
                    {"files", manifest.files}};
    if (const auto* ev = dynamic_cast<const EvaluationError*>(&e);
        ev && ev->step() != EvaluationError::npos) {
      failure["step"] = ev->step();
    }
    detail::write_json(dir / "failure.json", failure);
    throw;
  }

  manifest.finished_at = utc_now();
  manifest.files.push_back("manifest.json");
  std::sort(manifest.files.begin(), manifest.files.end());
  detail::write_json(dir / "manifest.json", manifest.to_json());
  return manifest;
}

/// Exit status for a run: 0 success, 2 configuration error, 3 runtime
/// failure. Errors are reported on `err`.
inline int run_status(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& err) {
  try {
    run(cfg, opts);
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "run failed: " << e.what() << '\n';
    return 3;
  }
}

// ---------------------------------------------------------------------------
// Plot data

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    throw Error("csv: missing column " + std::string(name));
  }

  double number(std::size_t row, std::string_view name) const {
    const std::string& s = rows[row][column(name)];
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
      throw Error("csv: not a number in column " + std::string(name) + ": '" + s + "'");
    }
    return v;
  }

  const std::string& text(std::size_t row, std::string_view name) const {
    return rows[row][column(name)];
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + " is empty");
  t.columns = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.columns.size()) {
      throw Error(path.string() + ": row with " + std::to_string(cells.size()) +
                  " cells, expected " + std::to_string(t.columns.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

namespace detail {

struct Band {
  std::size_t n = 0;
  double mean = 0.0;
  double std_dev = 0.0;
};

inline std::string band_row(const Band& b) {
  return std::to_string(b.n) + "," + format_number(b.mean) + "," + format_number(b.std_dev) +
         "," + format_number(b.mean - b.std_dev) + "," + format_number(b.mean + b.std_dev);
}

inline Band band_of(const std::vector<double>& xs) {
  const stats::Moments m = stats::moments(xs);
  return {m.n, m.mean, m.std_dev};
}

}  // namespace detail

/// Tidy plot inputs derived from the raw CSVs of a run directory:
///   regret_runs.csv -> regret_curve.csv   T,run,avg_regret,bound
///   compare_raw.csv -> gap_vs_p.csv       variant,P,n,mean_gap,std_gap,band_low,band_high
///   meta_trace.csv  -> training_band.csv  method,iteration,n,mean,std,band_low,band_high
/// Training values are (v_plus + v_minus) / 2 per pair; bands are mean -/+ one
/// sample standard deviation. Every output is computed before any is
/// written, and a directory with none of the inputs is an error.
inline std::vector<std::string> emit_plot_data(const fs::path& run_dir,
                                               const fs::path& out_dir) {
  if (!fs::is_directory(run_dir)) throw Error(run_dir.string() + " is not a directory");
  std::vector<std::pair<std::string, std::string>> outputs;

  if (fs::exists(run_dir / "regret_runs.csv")) {
    const CsvTable t = read_csv(run_dir / "regret_runs.csv");
    std::string body = "T,run,avg_regret,bound\n";
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      body += t.text(r, "T") + "," + t.text(r, "run") + "," + t.text(r, "avg_regret") + "," +
              t.text(r, "bound") + "\n";
    }
    outputs.emplace_back("regret_curve.csv", std::move(body));
  }

  if (fs::exists(run_dir / "compare_raw.csv")) {
    const CsvTable t = read_csv(run_dir / "compare_raw.csv");
    std::vector<std::pair<std::string, std::string>> order;
    std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      auto key = std::make_pair(t.text(r, "variant"), t.text(r, "P"));
      if (!groups.count(key)) order.push_back(key);
      groups[key].push_back(t.number(r, "gap"));
    }
    std::string body = "variant,P,n,mean_gap,std_gap,band_low,band_high\n";
    for (const auto& key : order) {
      body += key.first + "," + key.second + "," + detail::band_row(detail::band_of(groups[key])) + "\n";
    }
    outputs.emplace_back("gap_vs_p.csv", std::move(body));
  }

  if (fs::exists(run_dir / "meta_trace.csv")) {
    const CsvTable t = read_csv(run_dir / "meta_trace.csv");
    std::vector<std::pair<std::string, std::string>> order;
    std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      auto key = std::make_pair(t.text(r, "method"), t.text(r, "iteration"));
      if (!groups.count(key)) order.push_back(key);
      groups[key].push_back(0.5 * (t.number(r, "v_plus") + t.number(r, "v_minus")));
    }
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return std::stoull(a.second) < std::stoull(b.second);
    });
    std::string body = "method,iteration,n,mean,std,band_low,band_high\n";
    for (const auto& key : order) {
      body += key.first + "," + key.second + "," + detail::band_row(detail::band_of(groups[key])) + "\n";
    }
    outputs.emplace_back("training_band.csv", std::move(body));
  }

  if (outputs.empty()) {
    throw Error(run_dir.string() +
                ": no regret_runs.csv, compare_raw.csv or meta_trace.csv to plot");
  }
  fs::create_directories(out_dir);
  std::vector<std::string> written;
  for (const auto& [name, body] : outputs) {
    std::ofstream out(out_dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + (out_dir / name).string() + " for writing");
    out << body;
    written.push_back(name);
  }
  return written;
}

}  // namespace esmaml
