#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "esmaml/harness.hpp"

using namespace esmaml;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("esmaml_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& body) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << body;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(ESMAML_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string cli_stderr(const std::string& args) {
  const std::string cmd = std::string(ESMAML_CLI_PATH) + " " + args + " 2>&1 >/dev/null";
  std::string out;
  if (FILE* f = popen(cmd.c_str(), "r")) {
    char buf[512];
    while (std::fgets(buf, sizeof buf, f)) out += buf;
    pclose(f);
  }
  return out;
}

std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".csv") out[e.path().filename().string()] = slurp(e.path());
  }
  return out;
}

ExperimentConfig quadratic_config(ExperimentKind kind, const fs::path& out) {
  ExperimentConfig c;
  c.kind = kind;
  c.output_dir = out.string();
  c.environment.type = EnvironmentType::QuadraticFamily;
  c.adaptation.variant = HcVariant::Batch;
  c.adaptation.alpha = 0.3;
  c.adaptation.steps = 2;
  c.adaptation.parallel = 5;
  c.meta.iterations = 4;
  c.meta.pairs = 6;
  c.meta.sigma = 0.1;
  c.meta.beta = 0.05;
  return c;
}

std::string preset(const std::string& name) {
  return slurp(fs::path(ESMAML_SOURCE_DIR) / "presets" / (name + ".json"));
}

}  // namespace

TEST(Config, RoundTripIsIdempotent) {
  for (const std::string text : {std::string("{}"), preset("nav2d-noisy"), preset("theorem-quadratic")}) {
    const ExperimentConfig a = parse_config(text);
    const Json ja = config_to_json(a);
    const ExperimentConfig b = config_from_json(ja);
    EXPECT_EQ(config_to_json(b).dump(), ja.dump());
  }
}

TEST(Config, PresetsKeepTheirValues) {
  const ExperimentConfig c = parse_config(preset("nav2d-noisy"));
  EXPECT_EQ(c.kind, ExperimentKind::CompareHc);
  EXPECT_EQ(c.environment.nav2d.obs_noise_std, 1.0);
  EXPECT_EQ(c.compare.budget, 50u);
  EXPECT_EQ(c.compare.parallel, (std::vector<std::size_t>{1, 2, 5, 10, 20}));
  const ExperimentConfig t = parse_config(preset("theorem-quadratic"));
  EXPECT_EQ(t.kind, ExperimentKind::Regret);
  EXPECT_EQ(t.regret.batch, 16u);
  EXPECT_EQ(t.runs, 50u);
}

TEST(Config, ErrorsNameLineAndNode) {
  const std::string text =
      "{\n"
      "  \"kind\": \"adapt\",\n"
      "  \"adaptation\": {\n"
      "    \"alpha\": 0.1,\n"
      "    \"stpes\": 3\n"
      "  }\n"
      "}\n";
  try {
    parse_config(text, "my.json");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("my.json:5:"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("/adaptation/stpes"), std::string::npos) << e.what();
  }

  const std::string bad_value = "{\n  \"kind\": \"adapt\",\n  \"adaptation\": {\"alpha\": -1}\n}\n";
  try {
    parse_config(bad_value, "v.json");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("v.json:3:"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("/adaptation"), std::string::npos) << e.what();
  }

  EXPECT_THROW(parse_config("{\n \"seed\": \n}", "j.json"), ConfigError);
  EXPECT_THROW(parse_config("{\"noise\": {\"kind\": \"loud\"}}"), ConfigError);
  EXPECT_THROW(parse_config("{\"runs\": -1}"), ConfigError);
  EXPECT_THROW(parse_config("{\"kind\": \"bound\", \"theorem\": {\"phi0\": 1.0}}"), ConfigError);
}

TEST(Config, CompareBudgetMustCoverOneStep) {
  EXPECT_THROW(parse_config(R"({"kind": "compare-hc", "compare": {"parallel": [30], "budget": 50}})"),
               ConfigError);
  EXPECT_NO_THROW(parse_config(R"({"kind": "compare-hc", "compare": {"parallel": [20], "budget": 50}})"));
}

TEST(Run, BoundRowContainsWorkedValue) {
  const fs::path dir = fresh_dir("bound");
  ExperimentConfig c;
  c.kind = ExperimentKind::Bound;
  c.output_dir = dir.string();
  c.theorem.diameter = 1;
  c.theorem.grad_bound = 1;
  c.theorem.steps = 100;
  run(c);
  const CsvTable t = read_csv(dir / "bound.csv");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.text(0, "regret_bound"), "1.046");
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
}

TEST(Run, BoundDefaultsLToCurvatureTimesDiameter) {
  const fs::path dir = fresh_dir("bound_default");
  ExperimentConfig c;
  c.output_dir = dir.string();
  run(c);
  const CsvTable t = read_csv(dir / "bound.csv");
  EXPECT_EQ(t.number(0, "L"), c.theorem.rho * c.theorem.diameter);
}

TEST(Run, AdaptWithZeroStepsHasZeroGap) {
  const fs::path dir = fresh_dir("adapt_q0");
  ExperimentConfig c = quadratic_config(ExperimentKind::Adapt, dir);
  c.adaptation.steps = 0;
  c.adapt.tasks = 5;
  c.runs = 2;
  run(c);
  const CsvTable t = read_csv(dir / "adapt.csv");
  ASSERT_EQ(t.rows.size(), 10u);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    EXPECT_EQ(t.text(r, "gap"), "0");
    EXPECT_EQ(t.text(r, "adapted_value"), t.text(r, "meta_value"));
  }
  EXPECT_FALSE(fs::exists(dir / "adapt_trace.csv"));
}

TEST(Run, AdaptManifestMatchesCounters) {
  const fs::path dir = fresh_dir("adapt_budget");
  ExperimentConfig c = quadratic_config(ExperimentKind::Adapt, dir);
  c.adapt.tasks = 4;
  c.runs = 3;
  run(c);
  const CsvTable t = read_csv(dir / "adapt.csv");
  double sum = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) sum += t.number(r, "evaluations");
  const Json m = Json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["budget"]["adaptation_evaluations"].get<std::uint64_t>(), 3u * 4u * 2u * 6u);
  EXPECT_EQ(sum, 3.0 * 4 * 2 * 6);
  const CsvTable trace = read_csv(dir / "adapt_trace.csv");
  EXPECT_EQ(trace.rows.size(), 3u * 4u * 2u * 6u);
  std::vector<std::string> listed;
  for (const auto& f : m["files"]) listed.push_back(f.get<std::string>());
  EXPECT_EQ(listed, (std::vector<std::string>{"adapt.csv", "adapt_summary.csv", "adapt_trace.csv",
                                              "config.json", "config.resolved.json", "manifest.json"}));
}

TEST(Run, TrainManifestMatchesTrace) {
  const fs::path dir = fresh_dir("train_budget");
  ExperimentConfig c = quadratic_config(ExperimentKind::Train, dir);
  c.train.baseline_dr = true;
  c.train.heldout_tasks = 3;
  c.runs = 2;
  run(c);
  const CsvTable t = read_csv(dir / "meta_trace.csv");
  std::map<std::string, double> last;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    last[t.text(r, "method") + t.text(r, "run")] = t.number(r, "budget_used");
  }
  double total = 0;
  for (const auto& [k, v] : last) total += v;
  const Json m = Json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["budget"]["meta_evaluations"].get<double>(), total);
  // es-maml arm: Q (P + 1) + 1 per arm; dr arm: 1 per arm.
  EXPECT_EQ(total, 2.0 * 4 * 6 * 2 * (2 * 6 + 1) + 2.0 * 4 * 6 * 2 * 1);
  const CsvTable s = read_csv(dir / "heldout_summary.csv");
  ASSERT_EQ(s.rows.size(), 2u);
  EXPECT_EQ(s.text(0, "method"), "es-maml");
  EXPECT_EQ(s.text(1, "method"), "dr");
}

TEST(Run, CompareSummaryIsRecomputableFromRawRows) {
  const fs::path dir = fresh_dir("compare");
  ExperimentConfig c = quadratic_config(ExperimentKind::CompareHc, dir);
  c.compare.parallel = {1, 2, 5};
  c.compare.variants = {HcVariant::Batch, HcVariant::Average, HcVariant::Sequential};
  c.compare.budget = 24;
  c.compare.test_tasks = 6;
  c.compare.eval_evaluations = 1;
  c.runs = 2;
  run(c);

  const CsvTable raw = read_csv(dir / "compare_raw.csv");
  const CsvTable sum = read_csv(dir / "compare_summary.csv");
  ASSERT_EQ(sum.rows.size(), 9u);
  for (std::size_t r = 0; r < sum.rows.size(); ++r) {
    std::vector<double> meta, adapted, gap;
    for (std::size_t k = 0; k < raw.rows.size(); ++k) {
      if (raw.text(k, "variant") == sum.text(r, "variant") && raw.text(k, "P") == sum.text(r, "P")) {
        meta.push_back(raw.number(k, "meta_value"));
        adapted.push_back(raw.number(k, "adapted_value"));
        gap.push_back(raw.number(k, "gap"));
        EXPECT_EQ(raw.text(k, "Q"), sum.text(r, "Q"));
      }
    }
    ASSERT_EQ(gap.size(), 12u);
    EXPECT_EQ(sum.number(r, "n"), 12.0);
    const stats::Moments g = stats::moments(gap);
    const stats::Moments m = stats::moments(meta);
    const stats::Moments a = stats::moments(adapted);
    EXPECT_DOUBLE_EQ(sum.number(r, "mean_gap"), g.mean);
    EXPECT_DOUBLE_EQ(sum.number(r, "std_gap"), g.std_dev);
    EXPECT_DOUBLE_EQ(sum.number(r, "mean_meta"), m.mean);
    EXPECT_DOUBLE_EQ(sum.number(r, "mean_adapted"), a.mean);
    EXPECT_NEAR(sum.number(r, "mean_gap"), a.mean - m.mean, 1e-12 * (1 + std::abs(a.mean)));
    const stats::Interval ci = stats::confidence_interval(g);
    EXPECT_DOUBLE_EQ(sum.number(r, "ci_low"), ci.low);
    EXPECT_DOUBLE_EQ(sum.number(r, "ci_high"), ci.high);
    const double p = sum.number(r, "P"), q = sum.number(r, "Q");
    const std::string v = sum.text(r, "variant");
    const double per_step = v == "batch" ? p + 1 : v == "average" ? 2 * p : 2;
    EXPECT_EQ(q, std::floor(24 / per_step));
    EXPECT_EQ(sum.number(r, "budget_used"), q * per_step);
    EXPECT_LE(sum.number(r, "budget_used"), 24.0);
  }

  // P = 1 on a noiseless family: all three variants pick the same iterates.
  std::map<std::string, std::vector<std::string>> at_p1;
  for (std::size_t k = 0; k < raw.rows.size(); ++k) {
    if (raw.text(k, "P") == "1") at_p1[raw.text(k, "variant")].push_back(raw.text(k, "adapted_value"));
  }
  ASSERT_EQ(at_p1.size(), 3u);
  EXPECT_EQ(at_p1["batch"], at_p1["average"]);
  EXPECT_EQ(at_p1["batch"], at_p1["sequential"]);

  const CsvTable tests = read_csv(dir / "compare_tests.csv");
  EXPECT_EQ(tests.rows.size(), 3u);
}

TEST(Run, RegretOutputs) {
  const fs::path dir = fresh_dir("regret");
  ExperimentConfig c;
  c.kind = ExperimentKind::Regret;
  c.output_dir = dir.string();
  c.runs = 3;
  c.regret.horizons = {4, 16};
  c.regret.inner_radius = 0.05;
  run(c);
  const CsvTable raw = read_csv(dir / "regret_runs.csv");
  EXPECT_EQ(raw.rows.size(), 6u);
  const CsvTable sum = read_csv(dir / "regret.csv");
  ASSERT_EQ(sum.rows.size(), 2u);
  for (std::size_t h = 0; h < 2; ++h) {
    double avg = 0;
    for (std::size_t r = 0; r < 3; ++r) avg += raw.number(h * 3 + r, "avg_regret");
    EXPECT_NEAR(sum.number(h, "avg_regret"), avg / 3, 1e-12 * (1 + avg));
    EXPECT_EQ(sum.text(h, "run"), "mean");
  }
  EXPECT_TRUE(fs::exists(dir / "regret_clipped.csv"));
  EXPECT_TRUE(fs::exists(dir / "regret_instance.csv"));
}

TEST(Run, OutputsDoNotDependOnJobs) {
  std::vector<ExperimentConfig> configs;
  {
    ExperimentConfig c = quadratic_config(ExperimentKind::Train, "");
    c.train.baseline_dr = true;
    c.train.heldout_tasks = 3;
    c.runs = 2;
    configs.push_back(c);
  }
  {
    ExperimentConfig c = quadratic_config(ExperimentKind::Adapt, "");
    c.environment.type = EnvironmentType::Nav2D;
    c.environment.nav2d.horizon = 10;
    c.adapt.tasks = 4;
    c.runs = 2;
    configs.push_back(c);
  }
  {
    ExperimentConfig c = quadratic_config(ExperimentKind::CompareHc, "");
    c.environment.type = EnvironmentType::Nav2D;
    c.environment.nav2d.horizon = 10;
    c.meta.iterations = 2;
    c.compare.parallel = {1, 4};
    c.compare.budget = 12;
    c.compare.test_tasks = 3;
    c.compare.eval_evaluations = 2;
    c.runs = 2;
    configs.push_back(c);
  }
  {
    ExperimentConfig c;
    c.kind = ExperimentKind::Regret;
    c.runs = 4;
    c.regret.horizons = {4, 16};
    c.noise = NoiseModel::bounded(0.05);
    configs.push_back(c);
  }
  {
    ExperimentConfig c;
    c.kind = ExperimentKind::Bound;
    c.theorem.grad_bound = 2;
    configs.push_back(c);
  }
  for (ExperimentConfig& c : configs) {
    const std::string name = to_string(c.kind);
    c.output_dir = fresh_dir("jobs1_" + name).string();
    run(c, {1, {}});
    const auto one = csv_files(c.output_dir);
    c.output_dir = fresh_dir("jobs8_" + name).string();
    run(c, {8, {}});
    const auto eight = csv_files(c.output_dir);
    EXPECT_FALSE(one.empty()) << name;
    EXPECT_EQ(one, eight) << name;
  }
}

TEST(Run, RuntimeFailureWritesRecord) {
  const fs::path dir = fresh_dir("failure");
  ExperimentConfig c;
  c.kind = ExperimentKind::Adapt;
  c.output_dir = dir.string();
  c.environment.nav2d.drift_range = {Eigen::Vector2d(1e308, 0), Eigen::Vector2d(1e308, 0)};
  c.environment.nav2d.horizon = 5;
  c.adapt.tasks = 2;
  std::ostringstream err;
  EXPECT_EQ(run_status(c, {}, err), 3);
  ASSERT_TRUE(fs::exists(dir / "failure.json"));
  const Json f = Json::parse(slurp(dir / "failure.json"));
  EXPECT_EQ(f["step"].get<std::size_t>(), 1u);
  EXPECT_FALSE(fs::exists(dir / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "config.json"));
}

TEST(EmitPlots, RegretCurveHeader) {
  const fs::path dir = fresh_dir("plots_regret");
  ExperimentConfig c;
  c.kind = ExperimentKind::Regret;
  c.output_dir = dir.string();
  c.runs = 2;
  c.regret.horizons = {4, 8};
  run(c);
  const auto written = emit_plot_data(dir, dir / "plots");
  EXPECT_EQ(written, (std::vector<std::string>{"regret_curve.csv"}));
  const std::string body = slurp(dir / "plots" / "regret_curve.csv");
  EXPECT_EQ(body.substr(0, body.find('\n')), "T,run,avg_regret,bound");
  EXPECT_EQ(read_csv(dir / "plots" / "regret_curve.csv").rows.size(), 4u);
}

TEST(EmitPlots, EmptyDirectoryFailsWithoutWriting) {
  const fs::path dir = fresh_dir("plots_empty");
  fs::create_directories(dir);
  EXPECT_THROW(emit_plot_data(dir, dir / "plots"), Error);
  EXPECT_FALSE(fs::exists(dir / "plots"));
  EXPECT_EQ(cli("emit-plots " + dir.string()), 3);
  EXPECT_FALSE(fs::exists(dir / "plots"));
}

TEST(EmitPlots, BandsRecomputeFromRawRows) {
  const fs::path dir = fresh_dir("plots_train");
  ExperimentConfig c = quadratic_config(ExperimentKind::Train, dir);
  c.meta.pairs = 5;
  c.meta.iterations = 3;
  c.train.baseline_dr = true;
  run(c);
  emit_plot_data(dir, dir / "plots");
  const CsvTable raw = read_csv(dir / "meta_trace.csv");
  const CsvTable band = read_csv(dir / "plots" / "training_band.csv");
  ASSERT_EQ(band.rows.size(), 6u);
  for (std::size_t b = 0; b < band.rows.size(); ++b) {
    std::vector<double> xs;
    for (std::size_t r = 0; r < raw.rows.size(); ++r) {
      if (raw.text(r, "method") == band.text(b, "method") &&
          raw.text(r, "iteration") == band.text(b, "iteration")) {
        xs.push_back(0.5 * (raw.number(r, "v_plus") + raw.number(r, "v_minus")));
      }
    }
    ASSERT_EQ(xs.size(), 5u);
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= 5;
    double ss = 0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / 4);
    const double m = band.number(b, "mean"), s = band.number(b, "std");
    EXPECT_NEAR(m, mean, 1e-12 * (1 + std::abs(mean)));
    EXPECT_NEAR(s, sd, 1e-12 * (1 + sd));
    EXPECT_EQ(band.number(b, "band_low"), m - s);
    EXPECT_EQ(band.number(b, "band_high"), m + s);
  }
}

TEST(EmitPlots, GapVsP) {
  const fs::path dir = fresh_dir("plots_compare");
  ExperimentConfig c = quadratic_config(ExperimentKind::CompareHc, dir);
  c.compare.parallel = {1, 3};
  c.compare.budget = 12;
  c.compare.test_tasks = 4;
  c.compare.train_meta = false;
  run(c);
  emit_plot_data(dir, dir / "plots");
  const CsvTable g = read_csv(dir / "plots" / "gap_vs_p.csv");
  EXPECT_EQ(g.rows.size(), 4u);
  const CsvTable s = read_csv(dir / "compare_summary.csv");
  for (std::size_t r = 0; r < g.rows.size(); ++r) {
    EXPECT_EQ(g.text(r, "variant"), s.text(r, "variant"));
    EXPECT_EQ(g.text(r, "mean_gap"), s.text(r, "mean_gap"));
    EXPECT_EQ(g.text(r, "std_gap"), s.text(r, "std_gap"));
  }
  EXPECT_FALSE(fs::exists(dir / "plots" / "training_band.csv"));
}

TEST(Cli, ExitCodesAndOverrides) {
  const fs::path dir = fresh_dir("cli");
  const fs::path cfg = dir / "bound.json";
  const std::string text = "{\n  \"kind\": \"bound\",\n  \"theorem\": {\"diameter\": 1, \"grad_bound\": 1, \"steps\": 100}\n}\n";
  write_file(cfg, text);
  const fs::path out = dir / "out";
  EXPECT_EQ(cli("bound --config " + cfg.string() + " --out " + out.string() + " --seed 42"), 0);
  EXPECT_EQ(slurp(out / "config.json"), text);
  const Json m = Json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(m["seed"].get<std::uint64_t>(), 42u);
  EXPECT_EQ(m["kind"].get<std::string>(), "bound");
  EXPECT_EQ(read_csv(out / "bound.csv").text(0, "regret_bound"), "1.046");

  const fs::path bad = dir / "bad.json";
  write_file(bad, "{\n  \"kind\": \"bound\",\n  \"theorem\": {\n    \"xi\": 2\n  }\n}\n");
  EXPECT_EQ(cli("bound --config " + bad.string() + " --out " + (dir / "bad").string()), 2);
  const std::string msg = cli_stderr("bound --config " + bad.string() + " --out " + (dir / "bad").string());
  EXPECT_NE(msg.find(bad.string() + ":3:"), std::string::npos) << msg;

  EXPECT_EQ(cli("regret --config " + cfg.string() + " --out " + (dir / "mismatch").string()), 2);
  EXPECT_EQ(cli("bound --jobs 0"), 2);
  EXPECT_EQ(cli("frobnicate"), 2);

  const fs::path boom = dir / "boom.json";
  write_file(boom, R"({"kind": "adapt", "environment": {"nav2d": {"horizon": 5,
    "drift_range": {"lo": [1e308, 0], "hi": [1e308, 0]}}}, "adapt": {"tasks": 1}})");
  EXPECT_EQ(cli("adapt --config " + boom.string() + " --out " + (dir / "boom").string()), 3);
  EXPECT_TRUE(fs::exists(dir / "boom" / "failure.json"));

  EXPECT_EQ(cli("emit-plots " + (dir / "nowhere").string()), 3);
}

TEST(Cli, JobsDoNotChangeBytes) {
  const fs::path dir = fresh_dir("cli_jobs");
  const fs::path cfg = dir / "adapt.json";
  write_file(cfg, R"({"kind": "adapt", "runs": 2, "environment": {"nav2d": {"horizon": 20}},
    "adaptation": {"steps": 3, "parallel": 4, "alpha": 0.05}, "adapt": {"tasks": 3}})");
  ASSERT_EQ(cli("adapt --config " + cfg.string() + " --out " + (dir / "a").string() + " --jobs 1"), 0);
  ASSERT_EQ(cli("adapt --config " + cfg.string() + " --out " + (dir / "b").string() + " --jobs 8"), 0);
  EXPECT_EQ(csv_files(dir / "a"), csv_files(dir / "b"));
  EXPECT_EQ(slurp(dir / "a" / "config.resolved.json").size() > 0, true);
}
