#include "dsac/harness.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

namespace dsac {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr std::size_t kReturnWindow = 10;

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

double mean_of(const std::deque<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
}

void mean_and_stderr(const std::vector<double>& xs, double& mean, double& se) {
  const double n = double(xs.size());
  mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() < 2) {
    se = 0.0;
    return;
  }
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

double evaluate(const AgentState& agent, const EnvConfig& env_cfg, std::uint64_t seed, Index episodes,
                Index round, std::vector<double>& returns) {
  const SeedSequence seeds(seed);
  EnvSession session(make_environment(env_cfg, seed), seeds.derive(SeedStream::Evaluation, 2 * round));
  Rng rng = seeds.rng(SeedStream::Evaluation, 2 * round + 1);
  returns.clear();
  for (Index e = 0; e < episodes; ++e) {
    session.reset();
    while (true) {
      const EnvStep s = session.env->step(select_action(agent, session.observation, rng));
      session.episode_return += s.reward;
      if (s.episode_over()) break;
      session.observation = s.observation;
    }
    returns.push_back(session.episode_return);
  }
  return std::accumulate(returns.begin(), returns.end(), 0.0) / double(returns.size());
}

void write_summary(const fs::path& p, const RunSummary& s) {
  auto f = open_out(p);
  f << "seed,total_env_steps,gradient_steps,episodes,final_mean_return,wall_clock_seconds,"
       "final_D_total,final_policy_D\n";
  f << s.seed << ',' << s.total_env_steps << ',' << s.gradient_steps << ',' << s.episodes << ','
    << num(s.final_mean_return) << ',' << num(s.wall_clock_seconds) << ',' << num(s.final_D_total)
    << ',' << num(s.final_policy_D) << '\n';
}

}  // namespace

std::string to_json_line(const MetricsRecord& r) {
  Json j;
  j["step"] = r.step;
  j["gradient_step"] = r.gradient_step;
  j["wall_clock_seconds"] = r.wall_clock_seconds;
  const auto& m = r.metrics;
  j["q1_loss"] = m.q1_loss;
  j["q2_loss"] = m.q2_loss;
  j["policy_loss"] = m.policy_loss;
  j["alpha_loss"] = m.alpha_loss;
  j["alpha"] = m.alpha;
  j["entropy"] = m.entropy;
  Json decor = Json::object();
  for (const auto& nd : m.decorrelation) {
    decor[network_name(nd.network)] = {{"decorrelated", nd.decorrelated},
                                       {"layers", nd.layer_losses},
                                       {"D", nd.loss}};
  }
  j["decorrelation"] = std::move(decor);
  j["D_total"] = m.decorrelation_total;
  j["episode_return"] = r.episode_return ? Json(*r.episode_return) : Json(nullptr);
  j["episode_length"] = r.episode_length ? Json(*r.episode_length) : Json(nullptr);
  j["recent_return"] = r.recent_return ? Json(*r.recent_return) : Json(nullptr);
  return j.dump();
}

std::string strip_wall_clock(const std::string& jsonl_line) {
  Json j = Json::parse(jsonl_line);
  j.erase("wall_clock_seconds");
  return j.dump();
}

RunSummary run_training(const RunConfig& cfg, const fs::path& out_dir, const RecordSink& sink) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  const SeedSequence seeds(cfg.seed);
  EnvSession session(make_environment(cfg.env, cfg.seed), seeds.derive(SeedStream::EnvReset));
  const EnvSpec spec = session.env->spec();
  Rng init_rng = seeds.rng(SeedStream::NetworkInit);
  AgentState agent = make_agent(spec.observation_shape, spec.action_count, cfg.sac, init_rng);
  ReplayBuffer buffer(cfg.sac.buffer_capacity, spec.observation_shape, spec.action_count,
                      is_image_shape(spec.observation_shape) ? ObservationEncoding::Quantized8
                                                             : ObservationEncoding::Float32);
  TrainRngs rngs = TrainRngs::from(seeds);

  std::ofstream metrics, evals;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    open_out(out_dir / "config.cfg") << serialize_config(cfg);
    metrics = open_out(out_dir / "metrics.jsonl");
    if (cfg.eval_every > 0) evals = open_out(out_dir / "eval.jsonl");
  }

  RunSummary summary;
  summary.seed = cfg.seed;
  std::deque<double> recent;
  std::optional<TrainStepMetrics> last;
  std::vector<double> eval_returns;

  for (Index step = 0; step < cfg.total_env_steps; ++step) {
    const ActResult act = act_environment_step(agent, session, buffer, step, cfg.sac, rngs.action);
    std::optional<double> ep_return;
    std::optional<Index> ep_length;
    if (act.episode_over) {
      ++summary.episodes;
      ep_return = act.episode_return;
      ep_length = act.episode_length;
      recent.push_back(act.episode_return);
      if (recent.size() > kReturnWindow) recent.pop_front();
    }

    if (step >= cfg.sac.initial_random_steps && buffer.size() >= cfg.sac.batch_size) {
      for (Index g = 0; g < cfg.sac.gradient_steps; ++g) {
        MetricsRecord rec;
        rec.step = step + 1;
        rec.metrics = train_step(agent, buffer, cfg.sac, rngs);
        rec.gradient_step = agent.gradient_steps_done;
        rec.wall_clock_seconds = elapsed();
        if (g == 0) {
          rec.episode_return = ep_return;
          rec.episode_length = ep_length;
        }
        if (!recent.empty()) rec.recent_return = mean_of(recent);
        if (metrics.is_open()) {
          metrics << to_json_line(rec) << '\n';
          metrics.flush();
        }
        if (sink) sink(rec);
        last = std::move(rec.metrics);
      }
    }

    if (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0) {
      const Index round = (step + 1) / cfg.eval_every;
      const double mean = evaluate(agent, cfg.env, cfg.seed, cfg.eval_episodes, round, eval_returns);
      if (evals.is_open()) {
        evals << Json{{"step", step + 1}, {"mean_return", mean}, {"returns", eval_returns}}.dump()
              << '\n';
        evals.flush();
      }
    }
  }

  summary.total_env_steps = cfg.total_env_steps;
  summary.gradient_steps = agent.gradient_steps_done;
  if (!recent.empty()) summary.final_mean_return = mean_of(recent);
  if (last) {
    summary.final_D_total = last->decorrelation_total;
    for (const auto& nd : last->decorrelation)
      if (nd.network == NetworkId::Policy) summary.final_policy_D = nd.loss;
  }
  summary.wall_clock_seconds = elapsed();
  if (!out_dir.empty()) write_summary(out_dir / "summary.csv", summary);
  return summary;
}

RunConfig sweep_cell_config(const RunConfig& base, double sac_lr, double decor_lr, Index batch_size) {
  RunConfig c = base;
  c.sac.sac_lr = sac_lr;
  c.sac.batch_size = batch_size;
  bool any = false;
  for (NetworkId id : kAllNetworks) any = any || base.sac.decorrelates(id);
  for (NetworkId id : kAllNetworks) {
    const bool on = decor_lr > 0.0 && (any ? base.sac.decorrelates(id) : id == NetworkId::Policy);
    c.sac.decorrelate[std::size_t(id)] = on;
    c.sac.decor_lr[std::size_t(id)] = on ? decor_lr : 0.0;
  }
  return c;
}

std::vector<SweepRow> run_sweep(const RunConfig& base, int seeds, const fs::path& out_dir, int jobs) {
  if (seeds < 1) throw std::invalid_argument("sweep needs at least one seed");
  base.validate();

  struct Job {
    std::size_t cell;
    RunConfig cfg;
    fs::path dir;
  };
  std::vector<SweepRow> rows;
  std::vector<Job> work;
  for (double lr : base.sweep.sac_lr) {
    for (double dlr : base.sweep.decor_lr) {
      for (Index bs : base.sweep.batch_size) {
        SweepRow row;
        row.algorithm = dlr > 0.0 ? "DSAC" : "SAC";
        row.sac_lr = lr;
        row.decor_lr = dlr;
        row.batch_size = bs;
        row.seeds = seeds;
        row.runs.resize(std::size_t(seeds));
        const std::size_t cell = rows.size();
        rows.push_back(std::move(row));
        for (int s = 0; s < seeds; ++s) {
          RunConfig c = sweep_cell_config(base, lr, dlr, bs);
          c.seed = base.seed + std::uint64_t(s);
          const fs::path dir = out_dir / ("cell_" + std::to_string(cell)) / ("seed_" + std::to_string(c.seed));
          c.output_dir = dir.string();
          work.push_back({cell, std::move(c), dir});
        }
      }
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t i = next++; i < work.size(); i = next++) {
      try {
        const auto& job = work[i];
        const int slot = int(job.cfg.seed - base.seed);
        rows[job.cell].runs[std::size_t(slot)] = run_training(job.cfg, job.dir);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = work.size();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, int(work.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  fs::create_directories(out_dir);
  auto f = open_out(out_dir / "sweep.csv");
  f << "algorithm,sac_lr,decor_lr,batch_size,seeds,mean_return,stderr_return,"
       "mean_wall_clock_seconds,mean_final_D_total\n";
  for (auto& row : rows) {
    std::vector<double> returns, clocks, ds;
    for (const auto& r : row.runs) {
      returns.push_back(r.final_mean_return);
      clocks.push_back(r.wall_clock_seconds);
      ds.push_back(r.final_D_total);
    }
    double unused = 0.0;
    mean_and_stderr(returns, row.mean_return, row.stderr_return);
    mean_and_stderr(clocks, row.mean_wall_clock_seconds, unused);
    mean_and_stderr(ds, row.mean_final_D_total, unused);
    f << row.algorithm << ',' << num(row.sac_lr) << ',' << num(row.decor_lr) << ',' << row.batch_size
      << ',' << row.seeds << ',' << num(row.mean_return) << ',' << num(row.stderr_return) << ','
      << num(row.mean_wall_clock_seconds) << ',' << num(row.mean_final_D_total) << '\n';
  }
  return rows;
}

Comparison compare_streams(const std::vector<std::vector<std::string>>& streams) {
  if (streams.empty()) throw std::invalid_argument("summarize needs at least one stream");
  struct Point {
    Index step;
    std::optional<double> ret, d;
  };
  std::vector<std::vector<Point>> parsed;
  for (const auto& lines : streams) {
    std::vector<Point> pts;
    for (const auto& line : lines) {
      if (line.empty()) continue;
      const Json j = Json::parse(line);
      Point p{j.at("step").get<Index>(), std::nullopt, std::nullopt};
      if (j.contains("recent_return") && !j["recent_return"].is_null())
        p.ret = j["recent_return"].get<double>();
      if (j.contains("decorrelation") && j["decorrelation"].contains("policy"))
        p.d = j["decorrelation"]["policy"].at("D").get<double>();
      pts.push_back(p);
    }
    parsed.push_back(std::move(pts));
  }
  const std::size_t n = parsed.front().size();
  for (std::size_t s = 1; s < parsed.size(); ++s) {
    if (parsed[s].size() != n) {
      throw AlignmentError("stream " + std::to_string(s) + " has " + std::to_string(parsed[s].size()) +
                           " records, stream 0 has " + std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (parsed[s][i].step != parsed[0][i].step) {
        throw AlignmentError("record " + std::to_string(i) + ": stream " + std::to_string(s) +
                             " is at step " + std::to_string(parsed[s][i].step) + ", stream 0 at " +
                             std::to_string(parsed[0][i].step));
      }
    }
  }

  Comparison out;
  auto row = [](Index step, const std::vector<double>& xs) {
    SeriesRow r;
    r.step = step;
    r.n = int(xs.size());
    if (xs.empty()) {
      r.mean = r.std_error = std::numeric_limits<double>::quiet_NaN();
    } else {
      mean_and_stderr(xs, r.mean, r.std_error);
    }
    return r;
  };
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> rets, ds;
    for (const auto& pts : parsed) {
      if (pts[i].ret) rets.push_back(*pts[i].ret);
      if (pts[i].d) ds.push_back(*pts[i].d);
    }
    out.recent_return.push_back(row(parsed[0][i].step, rets));
    out.policy_D.push_back(row(parsed[0][i].step, ds));
  }
  return out;
}

std::vector<fs::path> summarize(const std::vector<fs::path>& jsonl_paths, const fs::path& out_csv) {
  if (jsonl_paths.empty()) throw std::invalid_argument("summarize needs at least one JSONL stream");
  std::vector<std::vector<std::string>> streams;
  for (const auto& p : jsonl_paths) {
    std::ifstream f(p);
    if (!f) throw std::runtime_error("cannot open " + p.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(f, line);) lines.push_back(line);
    streams.push_back(std::move(lines));
  }
  const Comparison cmp = compare_streams(streams);

  const fs::path dir = out_csv.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  const std::string stem = out_csv.stem().string();
  const std::vector<fs::path> paths{dir / (stem + "_return.csv"), dir / (stem + "_policy_D.csv")};
  const std::vector<const std::vector<SeriesRow>*> series{&cmp.recent_return, &cmp.policy_D};
  for (std::size_t k = 0; k < paths.size(); ++k) {
    auto f = open_out(paths[k]);
    f << "step,mean,stderr,n\n";
    for (const auto& r : *series[k])
      f << r.step << ',' << num(r.mean) << ',' << num(r.std_error) << ',' << r.n << '\n';
  }
  return paths;
}

}  // namespace dsac
