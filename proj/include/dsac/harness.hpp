#pragma once

#include "dsac/config.hpp"
#include "dsac/sac.hpp"

#include <filesystem>
#include <limits>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dsac {

// One line of the metrics stream, written after every gradient step.
struct MetricsRecord {
  Index step = 0;           // environment steps taken so far
  long gradient_step = 0;   // gradient steps taken so far, this one included
  double wall_clock_seconds = 0.0;
  TrainStepMetrics metrics;
  std::optional<double> episode_return;  // set when the preceding env step ended an episode
  std::optional<Index> episode_length;
  std::optional<double> recent_return;   // mean of the last 10 finished episodes
};

// JSON text of one record (single line, no trailing newline). Field order is
// fixed so equal records always serialize to equal bytes.
std::string to_json_line(const MetricsRecord& r);

struct RunSummary {
  std::uint64_t seed = 0;
  Index total_env_steps = 0;
  long gradient_steps = 0;
  Index episodes = 0;
  double final_mean_return = std::numeric_limits<double>::quiet_NaN();  // last 10 episodes
  double wall_clock_seconds = 0.0;
  double final_D_total = std::numeric_limits<double>::quiet_NaN();
  double final_policy_D = std::numeric_limits<double>::quiet_NaN();
};

using RecordSink = std::function<void(const MetricsRecord&)>;

// Random collection for `initial_random_steps`, then one environment step
// followed by `gradient_steps` gradient steps until `total_env_steps`.
// With a non-empty `out_dir` writes config.cfg, metrics.jsonl, summary.csv and,
// when evaluation is enabled, eval.jsonl. `sink` sees every record in order.
RunSummary run_training(const RunConfig& cfg, const std::filesystem::path& out_dir,
                        const RecordSink& sink = {});

struct SweepRow {
  std::string algorithm;  // "SAC" when decor_lr is 0, otherwise "DSAC"
  double sac_lr = 0.0;
  double decor_lr = 0.0;
  Index batch_size = 0;
  int seeds = 0;
  double mean_return = 0.0;
  double stderr_return = 0.0;
  double mean_wall_clock_seconds = 0.0;
  double mean_final_D_total = 0.0;
  std::vector<RunSummary> runs;
};

// The run configuration for one grid cell. decor_lr applies to the networks
// the base configuration decorrelates (the policy if it names none); a zero
// decor_lr turns decorrelation off entirely.
RunConfig sweep_cell_config(const RunConfig& base, double sac_lr, double decor_lr, Index batch_size);

// Every cell of base.sweep times `seeds` seeds (base.seed, base.seed + 1, ...).
// Runs land in out_dir/cell_<i>/seed_<s>; the table goes to out_dir/sweep.csv.
// `jobs` > 1 runs that many independent runs concurrently.
std::vector<SweepRow> run_sweep(const RunConfig& base, int seeds, const std::filesystem::path& out_dir,
                                int jobs = 1);

struct AlignmentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SeriesRow {
  Index step = 0;
  double mean = 0.0;
  double std_error = 0.0;  // sample standard deviation over sqrt(n); 0 when n = 1
  int n = 0;            // streams with a value at this step
};

struct Comparison {
  std::vector<SeriesRow> recent_return;
  std::vector<SeriesRow> policy_D;
};

// Per-record mean and standard error across streams. Streams must share the
// same sequence of steps.
Comparison compare_streams(const std::vector<std::vector<std::string>>& streams);

// Reads the JSONL files and writes <stem>_return.csv and <stem>_policy_D.csv
// beside `out_csv`. Returns the written paths.
std::vector<std::filesystem::path> summarize(const std::vector<std::filesystem::path>& jsonl_paths,
                                             const std::filesystem::path& out_csv);

// Drops wall-clock fields so streams can be compared byte for byte.
std::string strip_wall_clock(const std::string& jsonl_line);

}  // namespace dsac
