// Acceptance suite: one line per criterion, nonzero exit if any selected one fails.
// Usage: acceptance [criterion ...]   (all ten when none given)

#include "dsac/config.hpp"
#include "dsac/decorrelation.hpp"
#include "dsac/gradcheck.hpp"
#include "dsac/harness.hpp"
#include "dsac/sac.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace dsac;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

RunConfig preset(const char* name) { return load_config(fs::path(DSAC_CONFIG_DIR) / name); }

MatD gaussian(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  MatD m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// 1. Analytic vs central-difference gradients.
Outcome gradient_fidelity() {
  Stopwatch t;
  const GradcheckReport r = run_gradcheck(50);
  double worst = 0.0;
  int fewest = 1 << 30;
  for (const auto& c : r.cases) {
    worst = std::max(worst, c.max_relative_error);
    fewest = std::min(fewest, c.configurations);
  }
  const double s = t.seconds();
  return {r.passed() && fewest >= 50 && s < 120.0,
          fmt("%zu cases, >= %d configs each, max rel err %.2e, %.1f s", r.cases.size(), fewest, worst, s)};
}

// 2. R <- R - eta C R on a fixed correlated batch z = L g.
Outcome decorrelation_convergence() {
  Stopwatch t;
  const Index dim = 64, batch = 256, updates = 5000;
  Rng rng(SeedSequence(2).derive(SeedStream::EnvBuild));
  const MatD L = gaussian(dim, dim, rng, 1.0 / std::sqrt(double(dim)));
  const MatD z = gaussian(batch, dim, rng) * L.transpose();
  auto state = DecorrelationState<double>::identity(dim, 1e-3, DecorrelationKind::Dense);
  std::vector<double> d;
  for (Index k = 0; k <= updates; ++k) {
    const auto c = estimate_correlation(decorrelate(state, z));
    d.push_back(decorrelation_loss(c));
    if (k < updates) update_decorrelation(state, c);
  }
  Index hit = -1;
  for (std::size_t k = 0; k < d.size() && hit < 0; ++k)
    if (d[k] < 0.01 * d[0]) hit = Index(k);
  Index increases = 0;
  for (std::size_t k = 501; k < d.size(); ++k) increases += d[k] > d[k - 1] ? 1 : 0;
  const double s = t.seconds();
  return {hit >= 0 && increases == 0 && s < 60.0,
          fmt("d0 %.4g, below 1%% after %ld updates, %ld increases after update 500, %.1f s", d[0],
              long(hit), long(increases), s)};
}

// 3. f(W (R z)) == f((W R) z) on random triples.
Outcome fusion_equivalence() {
  const std::vector<ConvGeometry> convs{{4, 84, 84, 8, 4, 0, 32}, {32, 20, 20, 4, 2, 0, 64},
                                        {64, 9, 9, 3, 1, 0, 64}};
  Rng rng(3);
  std::uniform_int_distribution<Index> width(1, 300);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    MatF z;
    Index out = 0;
    if (trial % 4 < 3) {
      const ConvGeometry& g = convs[std::size_t(trial % 4)];
      z = extract_patches(gaussian(1, g.in_features(), rng).cast<float>(), g);
      out = g.out_channels;
    } else {
      z = gaussian(8, width(rng), rng).cast<float>();
      out = width(rng);
    }
    const Index dr = z.cols();
    const MatF w = gaussian(out, dr, rng, 1.0 / std::sqrt(double(dr))).cast<float>();
    DecorrelationState<float> state{
        MatF::Identity(dr, dr) + gaussian(dr, dr, rng, 0.3 / std::sqrt(double(dr))).cast<float>(), 0.0f,
        DecorrelationKind::Dense, 9.0f};
    const MatF unfused = leaky_relu(MatF(decorrelate(state, z) * w.transpose()), 0.01f);
    const MatF fused = leaky_relu(MatF(z * fuse(w, state).transpose()), 0.01f);
    worst = std::max(worst, double((unfused - fused).norm() / unfused.norm()));
  }
  return {worst < 1e-5, fmt("100 triples (75 conv, 25 dense), max rel err %.2e", worst)};
}

// 4. Downsample count: unit values and the floor of 10.
Outcome downsample_formula() {
  const Index a = downsample_count(9, 256, 400), b = downsample_count(9, 576, 49);
  Rng rng(4);
  std::uniform_real_distribution<double> bd(1e-3, 50.0);
  std::uniform_int_distribution<Index> dd(1, 5000), pd(1, 5000);
  int clamped = 0;
  for (int i = 0; i < 1000; ++i) clamped += downsample_count(bd(rng), dd(rng), pd(rng)) >= 10 ? 1 : 0;
  return {a == 10 && b == 107 && clamped == 1000,
          fmt("(9,256,400) -> %ld, (9,576,49) -> %ld, clamp held %d/1000", long(a), long(b), clamped)};
}

std::vector<std::string> stream_of(const RunConfig& cfg) {
  std::vector<std::string> out;
  run_training(cfg, {}, [&](const MetricsRecord& r) { out.push_back(strip_wall_clock(to_json_line(r))); });
  return out;
}

// 5. Zero decorrelation rates reproduce plain SAC exactly.
Outcome superset_property() {
  RunConfig base = preset("noisy_chain.cfg");
  base.total_env_steps = base.sac.initial_random_steps + 100;
  RunConfig plain = base, frozen = base;
  plain.sac.decorrelate = {false, false, false};
  frozen.sac.decorrelate = {true, true, true};
  frozen.sac.decor_lr = {0.0, 0.0, 0.0};
  const auto a = stream_of(plain), b = stream_of(frozen);
  std::size_t same = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) same += a[i] == b[i] ? 1 : 0;
  return {a.size() == 100 && a == b, fmt("%zu/%zu records identical", same, a.size())};
}

struct DTrace {
  std::vector<double> policy_D;
  RunSummary summary;
};

DTrace policy_D_trace(const RunConfig& cfg) {
  DTrace t;
  t.summary = run_training(cfg, {}, [&](const MetricsRecord& r) {
    for (const auto& nd : r.metrics.decorrelation)
      if (nd.network == NetworkId::Policy) t.policy_D.push_back(nd.loss);
  });
  return t;
}

// 6. DSAC drives the policy's input correlations below plain SAC's and keeps them there.
Outcome noisy_chain_decorrelation() {
  Stopwatch t;
  const RunConfig dsac_base = preset("noisy_chain.cfg");
  int lower = 0, stable = 0;
  std::string per_seed;
  std::vector<double> mean_D;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig dsac = dsac_base;
    dsac.seed = seed;
    dsac.sac.decor_lr[0] = 1e-3;
    const RunConfig sac = sweep_cell_config(dsac, dsac.sac.sac_lr, 0.0, dsac.sac.batch_size);
    const DTrace d = policy_D_trace(dsac), s = policy_D_trace(sac);
    if (d.policy_D.empty() || s.policy_D.empty()) return {false, "no gradient steps recorded"};
    const bool is_lower = d.policy_D.back() < s.policy_D.back();
    const auto half = d.policy_D.begin() + std::ptrdiff_t(d.policy_D.size() / 2);
    const double lo = *std::min_element(half, d.policy_D.end());
    const double hi = *std::max_element(half, d.policy_D.end());
    const bool is_stable = hi <= 10.0 * lo;
    mean_D.resize(d.policy_D.size(), 0.0);
    for (std::size_t i = 0; i < mean_D.size() && i < d.policy_D.size(); ++i) mean_D[i] += d.policy_D[i] / 5.0;
    lower += is_lower;
    stable += is_stable;
    per_seed += fmt(" s%llu:%.3g/%.3g(x%.1f)", (unsigned long long)seed, d.policy_D.back(),
                    s.policy_D.back(), hi / lo);
  }
  // Seed-averaged curve, reported for context only.
  const auto mid = mean_D.begin() + std::ptrdiff_t(mean_D.size() / 2);
  const double mean_ratio = *std::max_element(mid, mean_D.end()) / *std::min_element(mid, mean_D.end());
  const double s = t.seconds();
  return {lower >= 4 && stable == 5 && s < 900.0,
          fmt("DSAC lower in %d/5, every seed within 10x of its min: %d/5 (seed-mean curve x%.1f), %.0f s;"
              " final D dsac/sac (max/min):",
              lower, stable, mean_ratio, s) +
              per_seed};
}

// Expected return of the uniform-random policy, by Monte-Carlo rollouts.
double random_policy_return(const EnvConfig& env_cfg, int rollouts, std::uint64_t seed) {
  auto env = make_environment(env_cfg, seed);
  Rng rng(seed);
  std::uniform_int_distribution<Index> pick(0, env->spec().action_count - 1);
  double total = 0.0;
  for (int e = 0; e < rollouts; ++e) {
    env->reset(rng());
    for (;;) {
      const EnvStep s = env->step(pick(rng));
      total += s.reward;
      if (s.episode_over()) break;
    }
  }
  return total / rollouts;
}

// 7. Both agents clearly beat the random policy on GridTreasure.
Outcome grid_treasure_learning() {
  Stopwatch t;
  const RunConfig dsac_base = preset("grid_treasure.cfg");
  const double oracle = random_policy_return(dsac_base.env, 10000, 77);
  int dsac_ok = 0, sac_ok = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig dsac = dsac_base;
    dsac.seed = seed;
    const RunConfig sac = sweep_cell_config(dsac, dsac.sac.sac_lr, 0.0, dsac.sac.batch_size);
    const double rd = run_training(dsac, {}).final_mean_return;
    const double rs = run_training(sac, {}).final_mean_return;
    dsac_ok += rd >= oracle + 0.3;
    sac_ok += rs >= oracle + 0.3;
    per_seed += fmt(" s%llu:%.3f/%.3f", (unsigned long long)seed, rd, rs);
  }
  const double s = t.seconds();
  return {dsac_ok >= 4 && sac_ok >= 4 && s < 1200.0,
          fmt("random baseline %.3f; DSAC ok %d/5, SAC ok %d/5, %.0f s; return dsac/sac:", oracle, dsac_ok,
              sac_ok, s) +
              per_seed};
}

// 8. Every train_step runs critics, policy, temperature, targets, decorrelation in order.
Outcome update_order() {
  RunConfig cfg = preset("noisy_chain.cfg");
  cfg.sac.decorrelate = {true, true, true};
  cfg.sac.decor_lr = {1e-3, 1e-3, 1e-3};
  cfg.sac.initial_random_steps = 200;
  cfg.total_env_steps = 300;
  const std::vector<UpdatePhase> expected{UpdatePhase::Critics, UpdatePhase::Policy, UpdatePhase::Temperature,
                                          UpdatePhase::Targets, UpdatePhase::Decorrelation};
  int steps = 0, ordered = 0;
  run_training(cfg, {}, [&](const MetricsRecord& r) {
    ++steps;
    ordered += r.metrics.phases == expected;
  });
  return {steps == 100 && ordered == 100, fmt("%d/%d steps in order", ordered, steps)};
}

// 9. Hand-computed loss values.
Outcome closed_forms() {
  const auto uniform = [](Index n, Index a) { return distribution_from_logits(MatD(MatD::Zero(n, a))); };
  const double pl = policy_loss<double>(uniform(1, 2), MatD::Zero(1, 2), MatD::Zero(1, 2), 1.0).loss;
  const double al = alpha_loss<double>(std::log(0.5), uniform(1, 2), -2.0).loss;
  const double q1 = q_target<double>(VecD::Ones(1), VecD::Zero(1), uniform(1, 2), MatD::Ones(1, 2),
                                     MatD::Ones(1, 2), 0.0, 0.99)[0];
  const double q2 = q_target<double>(VecD::Ones(1), VecD::Ones(1), uniform(1, 2), MatD::Ones(1, 2),
                                     MatD::Ones(1, 2), 0.5, 0.99)[0];
  const double q3 = q_target<double>(VecD::Zero(1), VecD::Zero(1), uniform(1, 2), MatD::Zero(1, 2),
                                     MatD::Zero(1, 2), 1.0, 0.99)[0];
  const double e = std::max({std::abs(pl + 0.693147), std::abs(al - 1.346574), std::abs(q1 - 1.99),
                             std::abs(q2 - 1.0), std::abs(q3 - 0.99 * std::log(2.0))});
  return {e < 1e-6, fmt("policy %.6f, alpha %.6f, q_target %.6f / %.6f / %.6f, max dev %.1e", pl, al, q1, q2,
                        q3, e)};
}

std::vector<std::string> read_stripped(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(f, line);) out.push_back(strip_wall_clock(line));
  return out;
}

// 10. Two CLI runs with one config and seed write the same stream.
Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "dsac_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunConfig cfg = preset("grid_treasure.cfg");
  cfg.total_env_steps = 2600;
  std::ofstream(dir / "run.cfg") << serialize_config(cfg);
  for (const char* name : {"a", "b"}) {
    const std::string cmd = std::string("\"") + DSAC_CLI_PATH + "\" train --config \"" +
                            (dir / "run.cfg").string() + "\" --seed 11 --out \"" + (dir / name).string() +
                            "\" > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, "train exited nonzero"};
  }
  const auto a = read_stripped(dir / "a" / "metrics.jsonl"), b = read_stripped(dir / "b" / "metrics.jsonl");
  return {!a.empty() && a == b, fmt("%zu records, streams %s", a.size(), a == b ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"gradient fidelity", gradient_fidelity}},
      {2, {"decorrelation convergence", decorrelation_convergence}},
      {3, {"fusion equivalence", fusion_equivalence}},
      {4, {"downsample formula", downsample_formula}},
      {5, {"superset property", superset_property}},
      {6, {"noisy chain decorrelation", noisy_chain_decorrelation}},
      {7, {"grid treasure learning", grid_treasure_learning}},
      {8, {"update order", update_order}},
      {9, {"closed-form losses", closed_forms}},
      {10, {"determinism", determinism}},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (const auto& [k, v] : criteria) selected.push_back(k);

  int failures = 0;
  for (int k : selected) {
    const auto it = criteria.find(k);
    if (it == criteria.end()) {
      std::printf("[FAIL] criterion %d: no such criterion\n", k);
      ++failures;
      continue;
    }
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", k, it->second.first, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
