// Experiment front end: loads a scenario file, runs a solve or a sweep, and
// writes CSV/plain-text results.
//
//   hees solve <config>      one full solve, report dump
//   hees sweep <config>      the scenario's sweep directive, CSV + .meta
//   hees validate <config>   parse + feasibility probe only
//   hees oracle <config>     brute-force reference optimum (small instances)
//
// Exit codes: 0 ok, 2 config error, 3 infeasible, 4 not converged, 5 io error.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "hees/config.hpp"
#include "hees/harvest.hpp"
#include "hees/model.hpp"
#include "hees/oracle.hpp"
#include "hees/solver.hpp"
#include "hees/sweep.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitNotConverged = 4;
constexpr int kExitIo = 5;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int workers = 1;
};

hees::ScenarioConfig load_config(const CommonArgs& args) {
  std::ifstream in(args.config_path);
  if (!in) throw std::runtime_error("cannot open config file: " + args.config_path);
  hees::ScenarioConfig cfg = hees::parse_config(in);
  if (args.seed) cfg.arrivals.seed = *args.seed;
  if (args.out) cfg.output_path = *args.out;
  return cfg;
}

int write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    std::cerr << "error: cannot write " << path << "\n";
    return kExitIo;
  }
  out << body;
  return kExitOk;
}

int run_solve(const CommonArgs& args) {
  const auto cfg = load_config(args);
  const auto tl = cfg.make_timeline();
  const auto rep = hees::dinkelbach_solve(cfg.system, tl, cfg.solve);
  const std::string text = hees::solve_report_text(rep, cfg.system, tl);
  if (args.out) {
    if (const int rc = write_file(*args.out, text); rc != kExitOk) return rc;
  } else {
    std::cout << text;
  }
  switch (rep.status) {
    case hees::SolveStatus::Converged: return kExitOk;
    case hees::SolveStatus::NotConverged:
      std::cerr << "not converged: " << rep.message << "\n";
      return kExitNotConverged;
    case hees::SolveStatus::Infeasible:
      std::cerr << "infeasible: " << rep.message << "\n";
      return kExitInfeasible;
  }
  return kExitOk;
}

int run_sweep(const CommonArgs& args) {
  const auto cfg = load_config(args);
  hees::SweepResult result;
  switch (cfg.sweep) {
    case hees::SweepMode::EeVsM: result = hees::run_ee_vs_m(cfg, args.workers); break;
    case hees::SweepMode::EeVsCapacity:
      result = hees::run_ee_vs_capacity(cfg, args.workers);
      break;
    case hees::SweepMode::EeSeTradeoff:
      result = hees::run_ee_se_tradeoff(cfg, args.workers);
      break;
    case hees::SweepMode::SingleSolve: return run_solve(args);
  }
  if (const int rc = write_file(cfg.output_path, result.csv); rc != kExitOk) return rc;
  if (const int rc = write_file(cfg.output_path + ".meta", result.meta); rc != kExitOk)
    return rc;
  std::cout << "wrote " << cfg.output_path << "\n";
  return kExitOk;
}

int run_validate(const CommonArgs& args) {
  const auto cfg = load_config(args);
  const auto tl = cfg.make_timeline();
  std::cout << "config ok: " << tl.epochs() << " epochs over "
            << hees::detail::fmt(tl.horizon()) << " s, total harvest "
            << hees::detail::fmt(tl.total_harvest()) << " J\n";
  std::cout << hees::timeline_to_csv(tl);
  const hees::FeasibilityOptions fopt{cfg.solve.enforce_overflow};
  const auto witness = hees::detail::probe_schedule(cfg.system, tl, fopt);
  if (!witness) {
    std::cerr << "infeasible: no schedule satisfies the battery and grid constraints\n";
    return kExitInfeasible;
  }
  std::cout << "feasible: yes\n";
  return kExitOk;
}

int run_oracle(const CommonArgs& args) {
  const auto cfg = load_config(args);
  const auto tl = cfg.make_timeline();
  const auto grid = hees::GridSpec::fitted(tl.epochs());
  const hees::FeasibilityOptions fopt{cfg.solve.enforce_overflow};
  const auto res = hees::brute_force_solve(cfg.system, tl, grid, fopt);
  if (!res.found) {
    std::cerr << "infeasible: the oracle grid holds no feasible schedule\n";
    return kExitInfeasible;
  }
  std::cout << "oracle_ee_bits_per_hz_per_j: " << hees::detail::fmt(res.ee) << "\n"
            << "oracle_se_bits_per_hz: " << hees::detail::fmt(res.se) << "\n"
            << "oracle_weighted_energy_j: " << hees::detail::fmt(res.energy) << "\n"
            << "candidates_evaluated: " << res.leaves << "\n";
  for (std::size_t i = 0; i < res.schedule.size(); ++i)
    std::cout << "epoch " << (i + 1) << ": m = " << res.schedule[i].antennas
              << ", p_tx = " << hees::detail::fmt(res.schedule[i].power.tx_total()) << " W\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"energy-efficient antenna selection and hybrid power allocation"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", args.config_path, "scenario file")->required();
    sub->add_option("--seed", args.seed, "override the arrival-process seed");
    sub->add_option("--out", args.out, "override the output path");
    sub->add_option("--workers", args.workers, "worker threads for sweeps")
        ->check(CLI::PositiveNumber);
  };

  auto* solve = app.add_subcommand("solve", "run one solve and dump the report");
  add_common(solve);
  auto* sweep = app.add_subcommand("sweep", "run the scenario's sweep directive");
  add_common(sweep);
  auto* validate = app.add_subcommand("validate", "parse and probe a scenario");
  add_common(validate);
  auto* oracle = app.add_subcommand("oracle", "brute-force reference optimum");
  add_common(oracle);

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) return run_solve(args);
    if (sweep->parsed()) return run_sweep(args);
    if (validate->parsed()) return run_validate(args);
    if (oracle->parsed()) return run_oracle(args);
  } catch (const hees::detail::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const hees::BudgetExceeded& e) {
    std::cerr << "oracle budget: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}
