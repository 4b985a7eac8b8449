#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stablefield/errors.hpp"
#include "stablefield/runner.hpp"

namespace {

struct CommonOpts {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out_dir;
  std::optional<std::string> method;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config, "experiment config file")->required();
  cmd->add_option("--seed", o.seed, "override experiment.seed");
  cmd->add_option("--jobs", o.jobs, "worker threads for per-target prediction");
  cmd->add_option("--out", o.out_dir, "override the output directory");
  cmd->add_option("--method", o.method,
                  "run a single method (simple-krige, ordinary-krige, lsl, "
                  "col, mcl, best-lsl, iclsl), overriding experiment.methods");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "stablefield: simulation and extrapolation of stationary Gaussian "
      "and alpha-stable random fields"};
  app.require_subcommand(1);

  CommonOpts opts;
  CLI::App* c_run = app.add_subcommand(
      "run", "full pipeline: simulate, estimate, fit, predict, report");
  CLI::App* c_sim = app.add_subcommand("simulate", "write one realization");
  CLI::App* c_var =
      app.add_subcommand("variogram", "simulate and estimate the variogram");
  CLI::App* c_fit = app.add_subcommand(
      "fit", "simulate, estimate the variogram and fit a model");
  CLI::App* c_pred = app.add_subcommand(
      "predict", "simulate, observe and predict with the requested methods");
  CLI::App* c_bench = app.add_subcommand(
      "bench", "run the full pipeline and report per-stage wall times");
  for (CLI::App* c : {c_run, c_sim, c_var, c_fit, c_pred, c_bench}) {
    add_common(c, opts);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const stablefield::ConfigFile cfg =
        stablefield::ConfigFile::parse_file(opts.config);
    stablefield::RunOverrides ov;
    ov.seed = opts.seed;
    ov.out_dir = opts.out_dir;
    ov.method = opts.method;
    ov.jobs = opts.jobs;

    stablefield::RunResult res;
    if (c_sim->parsed()) {
      res = stablefield::run_simulate(cfg, ov);
    } else if (c_var->parsed()) {
      res = stablefield::run_variogram(cfg, ov);
    } else if (c_fit->parsed()) {
      res = stablefield::run_fit(cfg, ov);
    } else if (c_pred->parsed()) {
      res = stablefield::run_predict(cfg, ov);
    } else {
      res = stablefield::run_experiment(cfg, ov);
    }

    for (const auto& f : res.files) std::printf("wrote %s\n", f.c_str());
    if (c_bench->parsed()) {
      std::printf("%-24s %12s\n", "stage", "seconds");
      for (const auto& t : res.timings) {
        std::printf("%-24s %12.6f\n", t.stage.c_str(), t.seconds);
      }
    }
    return 0;
  } catch (const stablefield::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
