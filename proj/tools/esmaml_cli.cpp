// esmaml: command-line front end for the experiment harness.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "esmaml/esmaml.hpp"

namespace {

struct RunArgs {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
};

int run_kind(esmaml::ExperimentKind kind, const RunArgs& args) {
  using namespace esmaml;
  std::string text;
  std::string source = "<defaults>";
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path, std::ios::binary);
    if (!in) {
      std::cerr << "config error: cannot read " << args.config_path << '\n';
      return 2;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
    source = args.config_path;
  }

  ExperimentConfig cfg;
  try {
    cfg = parse_config(text.empty() ? std::string_view("{}") : std::string_view(text), source,
                       [&](ExperimentConfig& c, const Json& root) {
                         if (root.contains("kind") && c.kind != kind) {
                           throw ConfigNodeError("/kind", "config is for '" + to_string(c.kind) +
                                                              "', command is '" +
                                                              to_string(kind) + "'");
                         }
                         c.kind = kind;
                         if (args.seed) c.seed = *args.seed;
                         if (!args.out.empty()) c.output_dir = args.out;
                       });
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  RunOptions opts;
  opts.jobs = args.jobs;
  opts.config_text = text;
  const int status = run_status(cfg, opts, std::cerr);
  if (status == 0) std::cout << "wrote " << cfg.output_dir << '\n';
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ES-MAML with Hill-Climbing adaptation: experiments and theory checks"};
  app.require_subcommand(1);

  struct Entry {
    const char* name;
    const char* help;
    esmaml::ExperimentKind kind;
  };
  const Entry entries[] = {
      {"train", "train a meta-policy with antithetic ES-MAML", esmaml::ExperimentKind::Train},
      {"adapt", "adapt a meta-policy on held-out tasks", esmaml::ExperimentKind::Adapt},
      {"compare-hc", "Batch vs Average hill climbing at equal budget",
       esmaml::ExperimentKind::CompareHc},
      {"regret", "empirical regret of Batch hill climbing on a quadratic",
       esmaml::ExperimentKind::Regret},
      {"bound", "closed-form theorem quantities", esmaml::ExperimentKind::Bound},
  };

  RunArgs args;
  std::uint64_t seed = 0;
  std::optional<esmaml::ExperimentKind> chosen;
  for (const Entry& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", args.config_path, "experiment config (JSON)")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", args.out, "output directory (overrides the config)");
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--jobs", args.jobs, "worker threads; results do not depend on it")
        ->check(CLI::PositiveNumber);
    sub->callback([&chosen, kind = e.kind] { chosen = kind; });
  }

  std::string run_dir;
  std::string plot_out;
  CLI::App* plots = app.add_subcommand("emit-plots", "write plot-ready CSVs for a run directory");
  plots->add_option("run_dir", run_dir, "finished run directory")->required();
  plots->add_option("--out", plot_out, "destination (default: <run_dir>/plots)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (plots->parsed()) {
    try {
      const std::string out = plot_out.empty() ? run_dir + "/plots" : plot_out;
      for (const auto& f : esmaml::emit_plot_data(run_dir, out)) {
        std::cout << "wrote " << out << '/' << f << '\n';
      }
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "emit-plots failed: " << e.what() << '\n';
      return 3;
    }
  }

  for (CLI::App* sub : app.get_subcommands()) {
    if (sub->count("--seed") > 0) args.seed = seed;
  }
  return run_kind(*chosen, args);
}
