#include "amem/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "amem/harness.hpp"
#include "amem/reconstruct.hpp"

namespace amem::cli {

namespace {

namespace fs = std::filesystem;

std::ofstream open_output(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  return os;
}

int exclusion_exit(const RateReport& r) {
  if (r.exclusion_budget_exceeded()) {
    fmt::print(std::cerr, "{}: {} of {} solves excluded, above the 5% budget\n", r.study, r.exclusions, r.attempted);
    return non_convergence;
  }
  return ok;
}

void print_rates(const RateReport& r) {
  for (std::size_t g = 0; g < r.parameter.size(); ++g)
    fmt::print("{} {:>10.4g}  grid {:>10.4g}  median tv {:.4e}  ({} runs)\n", r.study, r.parameter[g], r.grid[g],
               r.medians[g], r.errors[g].size());
  fmt::print("{} slope {:.4f} (r2 {:.4f}), exclusions {}/{}\n", r.study, r.fit.slope, r.fit.r2, r.exclusions,
             r.attempted);
}

int run_solve(const ExperimentConfig& cfg, const fs::path& out) {
  const int n = cfg.n_grid.front();
  ProblemInstance p = generate_problem(cfg, 0, n);
  Eigen::MatrixXd phi = p.phi;
  if (cfg.op.is_parametric()) {
    const auto& ps = cfg.parametric;
    const auto design = sample_design(cfg, 0, ps.design_size);
    phi = build_kernel_approx(cfg.op, design, ps.kernel, ps.bandwidth, uniform_density(ps.t_lower, ps.t_upper),
                              p.atoms)
              .eval_table(ps.t_obs);
  }
  const DualSolution sol = solve(DualProblem(phi, p.observation, cfg.prior), cfg.solve);
  {
    auto os = open_output(out / "trace.csv");
    sol.write_trace_csv(os);
  }
  if (sol.status == SolveStatus::infeasible_direction) {
    const FeasibilityResult fr = check_feasibility(DualProblem(phi, p.observation, cfg.prior));
    fmt::print(std::cerr, "solve: observation is not reachable (distance {:.3e} > eta {:.3e})\n",
               std::sqrt(fr.min_distance_sq), cfg.eta);
    return infeasible;
  }
  const DiscreteMeasure est = amem_estimate(sol.v_hat, p.atoms, phi, cfg.prior);
  const EstimateSummary summary = summarize(sol, est, phi, p.observation, cfg.prior);
  {
    auto os = open_output(out / "estimate.csv");
    est.write_csv(os);
  }
  {
    auto os = open_output(out / "summary.json");
    summary.write_json(os);
  }
  fmt::print("solve: status {}, {} iterations, residual {:.3e}\n", summary.status, summary.iterations,
             summary.residual);
  return sol.ok() ? ok : non_convergence;
}

int run_rate_n(const ExperimentConfig& cfg, const fs::path& out) {
  const RateReport r = rate_study_n(cfg);
  {
    auto os = open_output(out / "rate_n.csv");
    write_records_csv(os, r.records);
  }
  {
    auto os = open_output(out / "rate_n_summary.json");
    r.write_json(os);
  }
  print_rates(r);
  return exclusion_exit(r);
}

int run_rate_m(const ExperimentConfig& cfg, const fs::path& out) {
  const RateReport r = rate_study_m(cfg);
  {
    auto os = open_output(out / "rate_m.csv");
    write_records_csv(os, r.records);
  }
  {
    auto os = open_output(out / "rate_m_summary.json");
    r.write_json(os);
  }
  print_rates(r);
  return exclusion_exit(r);
}

int run_feasibility(const ExperimentConfig& cfg, const fs::path& out) {
  const FeasibilityReport r = feasibility_study(cfg);
  {
    auto os = open_output(out / "feasibility.csv");
    write_records_csv(os, r.records);
  }
  {
    auto os = open_output(out / "feasibility_summary.json");
    r.write_json(os);
  }
  for (const auto& c : r.cells)
    fmt::print("feasibility m={} n={}: {}/{} feasible ({} indeterminate)\n", c.m, c.n, c.feasible, c.replications,
               c.indeterminate);
  return ok;
}

int run_demo(const ExperimentConfig& cfg, const fs::path& out) {
  const DeconvReport r = demo_deconv(cfg);
  {
    auto os = open_output(out / "demo_deconv.csv");
    write_records_csv(os, r.rates.records);
  }
  {
    auto os = open_output(out / "demo_deconv_summary.json");
    r.write_json(os);
  }
  if (r.estimate) {
    auto os = open_output(out / "estimate.csv");
    r.estimate->write_csv(os);
  }
  if (r.truth) {
    auto os = open_output(out / "truth.csv");
    r.truth->write_csv(os);
  }
  print_rates(r.rates);
  fmt::print("demo-deconv: status {}, tv vs oracle {:.4e}, tv vs truth {:.4e}, residual {:.3e}\n", r.status,
             r.tv_error, r.truth_tv_error, r.residual);
  if (r.status == to_string(SolveStatus::infeasible_direction)) return infeasible;
  return exclusion_exit(r.rates);
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Approximate maximum entropy on the mean: solver and experiment harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;

  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const ExperimentConfig&, const fs::path&);
  };
  const Command commands[] = {
      {"solve", "Solve one problem (replication 0, first n) and write the estimate", run_solve},
      {"rate-n", "TV error against the oracle as n grows", run_rate_n},
      {"rate-m", "TV error against the measured operator error across bandwidths", run_rate_m},
      {"feasibility", "Feasibility frequency per (m, n) cell", run_feasibility},
      {"demo-deconv", "Deconvolution of a blurred density", run_demo},
  };
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "Config file")->required();
    sub->add_option("--out", out_dir, "Output directory (created if missing)");
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--threads", threads, "Override the worker thread count");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  ExperimentConfig cfg;
  try {
    ConfigFile file = ConfigFile::load(config_path);
    if (seed) file.set_number("seed", 0);  // validated below with the real value
    cfg = ExperimentConfig::from_file(file);
    if (seed) {
      cfg.seed = *seed;
      cfg.validate();
    }
    if (threads) {
      cfg.threads = *threads;
      cfg.validate();
    }
  } catch (const ConfigError& e) {
    fmt::print(std::cerr, "config error: {}\n", e.what());
    return config_error;
  }

  try {
    fs::create_directories(out_dir);
    for (const auto& c : commands)
      if (app.got_subcommand(c.name)) return c.fn(cfg, out_dir);
  } catch (const ConfigError& e) {
    fmt::print(std::cerr, "config error: {}\n", e.what());
    return config_error;
  } catch (const std::exception& e) {
    fmt::print(std::cerr, "error: {}\n", e.what());
    return usage;
  }
  return usage;
}

}  // namespace amem::cli
