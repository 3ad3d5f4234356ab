#include "dsac/config.hpp"
#include "dsac/gradcheck.hpp"
#include "dsac/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete soft actor-critic with decorrelated backpropagation"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  auto* train = app.add_subcommand("train", "Run one training run");
  train->add_option("--config", config_path, "Key-value config file")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Master seed")->required();
  train->add_option("--out", out_dir, "Output directory")->required();

  int seeds = 1, jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Grid search over sac_lr x decor_lr x batch_size");
  sweep->add_option("--config", config_path, "Base config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--seeds", seeds, "Seeds per cell")->required()->check(CLI::PositiveNumber);
  sweep->add_option("--out", out_dir, "Output directory")->required();
  sweep->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);

  std::string out_csv;
  std::vector<std::string> streams;
  auto* summarize = app.add_subcommand("summarize", "Mean and standard error across JSONL streams");
  summarize->add_option("--out", out_csv, "Output CSV stem")->required();
  summarize->add_option("streams", streams, "metrics.jsonl files")->required();

  int configurations = 50;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gradcheck->add_option("--configs", configurations, "Random configurations per case")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    if (*train) {
      dsac::RunConfig cfg = dsac::load_config(config_path);
      cfg.seed = seed;
      cfg.output_dir = out_dir;
      const auto s = dsac::run_training(cfg, out_dir);
      std::printf("seed %llu: %ld gradient steps, %ld episodes, final mean return %.4f, D_total %.6g, %.1f s\n",
                  static_cast<unsigned long long>(s.seed), s.gradient_steps, long(s.episodes),
                  s.final_mean_return, s.final_D_total, s.wall_clock_seconds);
    } else if (*sweep) {
      dsac::RunConfig cfg = dsac::load_config(config_path);
      const auto rows = dsac::run_sweep(cfg, seeds, out_dir, jobs);
      for (const auto& r : rows) {
        std::printf("%-4s sac_lr %-8g decor_lr %-8g batch %-4ld return %.4f +- %.4f\n", r.algorithm.c_str(),
                    r.sac_lr, r.decor_lr, long(r.batch_size), r.mean_return, r.stderr_return);
      }
    } else if (*summarize) {
      std::vector<std::filesystem::path> paths(streams.begin(), streams.end());
      for (const auto& p : dsac::summarize(paths, out_csv)) std::printf("%s\n", p.c_str());
    } else if (*gradcheck) {
      const auto report = dsac::run_gradcheck(configurations);
      for (const auto& c : report.cases) {
        std::printf("%-22s %3d configs  max rel err %.3e  %s\n", c.name.c_str(), c.configurations,
                    c.max_relative_error, c.passed ? "ok" : "FAIL");
      }
      if (!report.passed()) {
        std::cerr << "error: gradient check exceeded tolerance " << report.tolerance << '\n';
        return 1;
      }
    }
  } catch (const dsac::ConfigError& e) {
    std::cerr << "error: invalid config " << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}
