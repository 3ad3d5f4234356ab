#include "dsac/environment.hpp"
#include "dsac/types.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace dsac {
namespace {

double run_actions(Environment& env, const std::vector<Index>& actions, Index* steps = nullptr) {
  double total = 0.0;
  Index n = 0;
  for (Index a : actions) {
    const EnvStep s = env.step(a);
    total += s.reward;
    ++n;
    if (s.episode_over()) break;
  }
  if (steps) *steps = n;
  return total;
}

TEST(GridTreasure, OptimalPathReturn) {
  GridTreasure env(5, 8);
  env.reset(0);
  Index steps = 0;
  const double ret = run_actions(env, {1, 1, 1, 1, 3, 3, 3, 3}, &steps);
  EXPECT_EQ(steps, 8);
  EXPECT_NEAR(ret, 0.93, 1e-9);
}

TEST(GridTreasure, WallsClamp) {
  GridTreasure env(5, 8);
  env.reset(0);
  const EnvStep s = env.step(0);
  EXPECT_EQ(env.agent_position(), std::make_pair(Index(0), Index(0)));
  EXPECT_DOUBLE_EQ(s.reward, GridTreasure::kStepReward);
  env.step(2);
  EXPECT_EQ(env.agent_position(), std::make_pair(Index(0), Index(0)));
}

TEST(GridTreasure, RendersScaledBlocks) {
  GridTreasure env(5, 8);
  const TensorF obs = env.reset(0);
  ASSERT_EQ(obs.shape(), (Shape{1, 40, 40}));
  EXPECT_EQ(obs[0], 1.0f);
  EXPECT_EQ(obs[7 * 40 + 7], 1.0f);
  EXPECT_EQ(obs[8], 0.0f);
  EXPECT_EQ(obs[39 * 40 + 39], 0.5f);
  EXPECT_EQ(obs[32 * 40 + 32], 0.5f);
  double lit = 0.0;
  for (Index i = 0; i < obs.size(); ++i) lit += obs[i];
  EXPECT_DOUBLE_EQ(lit, 64 * 1.0 + 64 * 0.5);
}

TEST(GridTreasure, StepAfterEndIsError) {
  GridTreasure env(3, 1);
  env.reset(0);
  run_actions(env, {1, 1, 3, 3});
  EXPECT_THROW(env.step(0), StateError);
  env.reset(0);
  EXPECT_NO_THROW(env.step(0));
}

TEST(GridTreasure, TruncatesAtCap) {
  GridTreasure env(5, 1);
  env.reset(0);
  EnvStep s;
  for (Index i = 0; i < GridTreasure::kEpisodeCap; ++i) {
    ASSERT_FALSE(s.episode_over());
    s = env.step(0);
  }
  EXPECT_TRUE(s.truncated());
  EXPECT_FALSE(s.terminal);
}

TEST(GridTreasure, RejectsBadInput) {
  GridTreasure env(5, 1);
  env.reset(0);
  EXPECT_THROW(env.step(4), ActionError);
  EXPECT_THROW(env.step(-1), ActionError);
  EXPECT_THROW(GridTreasure(2, 1), ConfigError);
}

TEST(NoisyChain, ObservationLayout) {
  NoisyChain env(10, 16, 3);
  const TensorF obs = env.reset(7);
  ASSERT_EQ(obs.shape(), (Shape{26}));
  EXPECT_EQ(obs[0], 1.0f);
  for (Index i = 1; i < 10; ++i) EXPECT_EQ(obs[i], 0.0f);
}

TEST(NoisyChain, NoiseDimensionsPerfectlyCorrelated) {
  NoisyChain env(10, 4, 3);
  env.reset(1);
  const Index n = 2000;
  MatD x(n, 4);
  for (Index t = 0; t < n; ++t) {
    EnvStep s = env.step(t % 2);
    if (s.episode_over()) s.observation = env.reset(std::uint64_t(t));
    for (Index j = 0; j < 4; ++j) x(t, j) = s.observation[10 + j];
  }
  const MatD centered = x.rowwise() - x.colwise().mean();
  const MatD cov = centered.transpose() * centered / double(n - 1);
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 4; ++j) {
      const double corr = cov(i, j) / std::sqrt(cov(i, i) * cov(j, j));
      EXPECT_NEAR(std::abs(corr), 1.0, 1e-5);
    }
  }
}

TEST(NoisyChain, AlwaysRightReachesGoal) {
  NoisyChain env(10, 16, 3);
  env.reset(0);
  Index steps = 0;
  const double ret = run_actions(env, std::vector<Index>(50, 1), &steps);
  EXPECT_EQ(steps, 9);
  EXPECT_DOUBLE_EQ(ret, 1.0);
  EXPECT_EQ(env.position(), 9);
}

TEST(NoisyChain, LeftWallAndTruncation) {
  NoisyChain env(5, 0, 3);
  env.reset(0);
  EnvStep s = env.step(0);
  EXPECT_EQ(env.position(), 0);
  Index steps = 1;
  while (!s.episode_over()) {
    s = env.step(0);
    ++steps;
  }
  EXPECT_TRUE(s.truncated());
  EXPECT_EQ(steps, 20);
  EXPECT_THROW(env.step(1), StateError);
}

TEST(NoisyChain, ResetSeedReproducesNoise) {
  NoisyChain a(6, 3, 9), b(6, 3, 9);
  EXPECT_EQ(a.reset(5).data(), b.reset(5).data());
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.step(1 - i % 2).observation.data(), b.step(1 - i % 2).observation.data());
}

// Wraps a chain so the executed action can be read from the info map.
std::unique_ptr<Environment> sticky_chain(double p, std::uint64_t seed) {
  return std::make_unique<StickyActions>(std::make_unique<NoisyChain>(1000, 0, 1), p, seed);
}

TEST(StickyActions, ZeroProbabilityIsTransparent) {
  auto env = sticky_chain(0.0, 1);
  env->reset(0);
  for (int i = 0; i < 200; ++i) {
    const Index a = i % 3 == 0 ? 0 : 1;
    EXPECT_EQ(env->step(a).info.at("executed_action"), double(a));
  }
}

TEST(StickyActions, UnitProbabilityRepeatsFirstAction) {
  auto env = sticky_chain(1.0, 1);
  env->reset(0);
  EXPECT_EQ(env->step(1).info.at("executed_action"), 1.0);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(env->step(0).info.at("executed_action"), 1.0);
  env->reset(0);
  EXPECT_EQ(env->step(0).info.at("executed_action"), 0.0);
}

TEST(StickyActions, RepeatFrequencyWithinThreeSigma) {
  auto env = sticky_chain(0.25, 2);
  env->reset(0);
  env->step(1);
  const int n = 20000;
  int repeats = 0;
  for (int i = 0; i < n; ++i) {
    // Alternate requests so a repeat is visible as a mismatch.
    const Index requested = i % 2;
    EnvStep s = env->step(requested);
    repeats += s.info.at("repeated") != 0.0 ? 1 : 0;
    if (s.episode_over()) {
      env->reset(0);
      env->step(1);
    }
  }
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  EXPECT_LT(std::abs(repeats - 0.25 * n), 3 * sigma);
}

TEST(StickyActions, InvalidProbability) {
  EXPECT_THROW(sticky_chain(1.5, 0), ConfigError);
  EXPECT_THROW(sticky_chain(-0.1, 0), ConfigError);
}

TEST(ActionRepeat, SumsRewardsAndStopsAtEnd) {
  ActionRepeat env(std::make_unique<GridTreasure>(5, 1), 4);
  env.reset(0);
  const EnvStep first = env.step(1);
  EXPECT_NEAR(first.reward, -0.04, 1e-12);
  const EnvStep second = env.step(3);
  EXPECT_NEAR(second.reward, 3 * -0.01 + 1.0, 1e-12);
  EXPECT_TRUE(second.terminal);
  EXPECT_THROW(ActionRepeat(std::make_unique<GridTreasure>(5, 1), 0), ConfigError);
}

TEST(FrameStack, ReplicatesThenShifts) {
  FrameStack env(std::make_unique<GridTreasure>(3, 1), 4);
  const TensorF start = env.reset(0);
  ASSERT_EQ(start.shape(), (Shape{4, 3, 3}));
  for (Index k = 0; k < 4; ++k) EXPECT_EQ(start[k * 9], 1.0f);
  const TensorF next = env.step(3).observation;
  for (Index k = 0; k < 3; ++k) EXPECT_EQ(next[k * 9], 1.0f);
  EXPECT_EQ(next[3 * 9], 0.0f);
  EXPECT_EQ(next[3 * 9 + 1], 1.0f);
  EXPECT_THROW(FrameStack(std::make_unique<NoisyChain>(5, 0, 0), 2), ConfigError);
}

TEST(MakeEnvironment, WrapperChainShapes) {
  EnvConfig cfg;
  cfg.grid_size = 5;
  cfg.render_scale = 2;
  cfg.stack = 4;
  EXPECT_EQ(make_environment(cfg, 1)->spec().observation_shape, (Shape{4, 10, 10}));
  cfg.name = "noisy_chain";
  EXPECT_EQ(make_environment(cfg, 1)->spec().observation_shape, (Shape{26}));
  cfg.name = "pong";
  EXPECT_THROW(make_environment(cfg, 1), ConfigError);
}

TEST(MakeEnvironment, SameSeedSameTrajectory) {
  EnvConfig cfg;
  cfg.name = "noisy_chain";
  auto a = make_environment(cfg, 42);
  auto b = make_environment(cfg, 42);
  auto c = make_environment(cfg, 43);
  a->reset(1);
  b->reset(1);
  c->reset(1);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    EnvStep sa = a->step(i % 2), sb = b->step(i % 2), sc = c->step(i % 2);
    EXPECT_EQ(sa.observation.data(), sb.observation.data());
    EXPECT_EQ(sa.reward, sb.reward);
    differs = differs || sa.observation.data() != sc.observation.data();
    if (sa.episode_over()) {
      a->reset(std::uint64_t(i));
      b->reset(std::uint64_t(i));
    }
    if (sc.episode_over()) c->reset(std::uint64_t(i));
  }
  EXPECT_TRUE(differs);
}

}  // namespace
}  // namespace dsac
