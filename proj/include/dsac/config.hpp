#pragma once

#include "dsac/environment.hpp"
#include "dsac/sac.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace dsac {

struct SweepGrid {
  std::vector<double> sac_lr{3e-5, 1e-4, 3e-4};
  std::vector<double> decor_lr{0.0, 1e-4, 1e-3, 1e-2};
  std::vector<Index> batch_size{64, 256};

  std::size_t cell_count() const { return sac_lr.size() * decor_lr.size() * batch_size.size(); }
};

// Everything that determines one training run.
struct RunConfig {
  EnvConfig env;
  SacConfig sac;
  Index total_env_steps = 120000;
  Index eval_every = 0;  // 0 disables periodic evaluation
  Index eval_episodes = 5;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  SweepGrid sweep;

  void validate() const;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& source, int line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Plain-text "key = value" documents; '#' starts a comment, lists are comma
// separated. Unspecified keys keep their defaults; unknown keys are rejected.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

// Writes every key, so parse_config(serialize_config(c)) reproduces c exactly.
std::string serialize_config(const RunConfig& cfg);

}  // namespace dsac
