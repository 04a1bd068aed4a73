// Command-line front end: run a scenario, sweep a parameter, re-check a log.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "cdf/scenario.hpp"

namespace {

enum Exit { kOk = 0, kUncertified = 1, kRuntime = 2, kConfig = 3 };

cdf::Scenario load(const std::string& path, const std::optional<std::string>& out_dir,
                   const std::optional<std::uint64_t>& seed) {
  cdf::Scenario sc = cdf::load_scenario(path);
  if (out_dir) sc.out_dir = *out_dir;
  if (seed) sc.seed = *seed;
  return sc;
}

int run(const std::string& path, const std::optional<std::string>& out_dir,
        const std::optional<std::uint64_t>& seed, bool allow_uncertified) {
  cdf::Scenario sc;
  try {
    sc = load(path, out_dir, seed);
  } catch (const cdf::Error& e) {
    std::cerr << e.what() << "\n";
    return kConfig;
  }
  try {
    const auto o = cdf::run_scenario(sc, sc.out_dir);
    std::cout << o.summary;
    std::cout << "outputs: " << sc.out_dir << "\n";
    if (!o.run.completed) return kRuntime;
    if (o.certificate.verdict != cdf::Verdict::Certified) {
      if (allow_uncertified) {
        std::cerr << "warning: run is uncertified\n";
        return kOk;
      }
      return kUncertified;
    }
    return kOk;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kRuntime;
  }
}

int sweep(const std::string& path, const std::string& param, int from, int to,
          const std::optional<std::string>& out_dir, const std::optional<std::uint64_t>& seed) {
  cdf::Scenario sc;
  cdf::SweepParam p;
  try {
    sc = load(path, out_dir, seed);
    p = cdf::parse_sweep_param(param);
  } catch (const cdf::Error& e) {
    std::cerr << e.what() << "\n";
    return kConfig;
  }
  const auto rows = cdf::sweep(sc, p, from, to, sc.out_dir);
  std::cout << cdf::sweep_table(p, rows);
  return kOk;
}

int check(const std::string& path) {
  try {
    const auto report = cdf::replay_check(path);
    std::cout << cdf::to_text(report);
    return report.verdict == cdf::Verdict::Certified ? kOk : kUncertified;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop receding-horizon control with cyclic supply certification"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  bool allow_uncertified = false;
  app.add_option("--out-dir", out_dir, "Output directory (overrides the scenario)");
  app.add_option("--seed", seed, "Seed for the sampling checks (overrides the scenario)");
  app.add_flag("--allow-uncertified", allow_uncertified,
               "Exit 0 for completed runs that fail certification");

  std::string cfg;
  auto* run_cmd = app.add_subcommand("run", "Run one scenario");
  run_cmd->add_option("cfg", cfg, "Scenario file")->required();

  std::string sweep_cfg, param = "N";
  int from = 2, to = 9;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a scenario over a range of N or M");
  sweep_cmd->add_option("cfg", sweep_cfg, "Scenario file")->required();
  sweep_cmd->add_option("--param", param, "N or M");
  sweep_cmd->add_option("--from", from, "First value");
  sweep_cmd->add_option("--to", to, "Last value (inclusive)");

  std::string csv;
  auto* check_cmd = app.add_subcommand("check", "Re-certify a persisted trajectory");
  check_cmd->add_option("trajectory", csv, "trajectory.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kConfig;
  }

  if (*run_cmd) return run(cfg, out_dir, seed, allow_uncertified);
  if (*sweep_cmd) return sweep(sweep_cfg, param, from, to, out_dir, seed);
  return check(csv);
}
