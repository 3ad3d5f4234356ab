#pragma once

#include "dsac/tensor.hpp"

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>

namespace dsac {

struct EnvSpec {
  Index action_count = 2;
  Shape observation_shape;
  std::optional<Index> max_episode_steps;  // nullopt: unlimited
};

struct EnvStep {
  TensorF observation;
  double reward = 0.0;
  bool terminal = false;
  // Diagnostics. "truncated" = 1 marks an episode cap, "executed_action" is set
  // by the sticky-action wrapper.
  std::map<std::string, double> info;

  bool truncated() const {
    auto it = info.find("truncated");
    return it != info.end() && it->second != 0.0;
  }
  bool episode_over() const { return terminal || truncated(); }
};

struct ActionError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct ConfigError : std::invalid_argument {
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual TensorF reset(std::uint64_t seed) = 0;
  virtual EnvStep step(Index action) = 0;
  virtual std::string name() const = 0;
};

// size x size grid, agent starting top-left, treasure bottom-right.
// Actions: 0 up, 1 down, 2 left, 3 right; walls clamp.
class GridTreasure final : public Environment {
 public:
  static constexpr double kStepReward = -0.01;
  static constexpr double kTreasureReward = 1.0;
  static constexpr Index kEpisodeCap = 200;

  GridTreasure(Index size, Index render_scale);

  const EnvSpec& spec() const override { return spec_; }
  TensorF reset(std::uint64_t seed) override;
  EnvStep step(Index action) override;
  std::string name() const override { return "grid_treasure"; }

  Index size() const { return size_; }
  std::pair<Index, Index> agent_position() const { return {row_, col_}; }
  TensorF render() const;

 private:
  Index size_;
  Index scale_;
  EnvSpec spec_;
  Index row_ = 0, col_ = 0;
  Index steps_ = 0;
  bool done_ = true;
};

// Chain of `length` cells, actions 0 left / 1 right, reward 1 at the right end.
// Observations append `noise_dims` copies of one standard-normal draw per step,
// each scaled by a fixed per-dimension constant.
class NoisyChain final : public Environment {
 public:
  NoisyChain(Index length, Index noise_dims, std::uint64_t construction_seed);

  const EnvSpec& spec() const override { return spec_; }
  TensorF reset(std::uint64_t seed) override;
  EnvStep step(Index action) override;
  std::string name() const override { return "noisy_chain"; }

  Index position() const { return pos_; }
  const VecF& noise_scales() const { return scales_; }

 private:
  TensorF observe();

  Index length_;
  Index noise_dims_;
  EnvSpec spec_;
  VecF scales_;
  std::mt19937_64 noise_rng_;
  Index pos_ = 0;
  Index steps_ = 0;
  bool done_ = true;
};

std::unique_ptr<Environment> make_grid_treasure(Index size, Index render_scale,
                                                std::uint64_t seed = 0);
std::unique_ptr<Environment> make_noisy_chain(Index length, Index noise_dims, std::uint64_t seed);

// With probability p the previously executed action replaces the requested one.
class StickyActions final : public Environment {
 public:
  StickyActions(std::unique_ptr<Environment> inner, double p, std::uint64_t seed);

  const EnvSpec& spec() const override { return inner_->spec(); }
  TensorF reset(std::uint64_t seed) override;
  EnvStep step(Index action) override;
  std::string name() const override { return inner_->name(); }

 private:
  std::unique_ptr<Environment> inner_;
  double p_;
  std::mt19937_64 rng_;
  std::optional<Index> previous_;
};

// Applies each action k times, summing rewards; stops early at episode end.
class ActionRepeat final : public Environment {
 public:
  ActionRepeat(std::unique_ptr<Environment> inner, Index k);

  const EnvSpec& spec() const override { return inner_->spec(); }
  TensorF reset(std::uint64_t seed) override { return inner_->reset(seed); }
  EnvStep step(Index action) override;
  std::string name() const override { return inner_->name(); }

 private:
  std::unique_ptr<Environment> inner_;
  Index k_;
};

// Concatenates the k most recent CxHxW frames on the channel axis (oldest
// first). Reset replicates the initial frame k times.
class FrameStack final : public Environment {
 public:
  FrameStack(std::unique_ptr<Environment> inner, Index k);

  const EnvSpec& spec() const override { return spec_; }
  TensorF reset(std::uint64_t seed) override;
  EnvStep step(Index action) override;
  std::string name() const override { return inner_->name(); }

 private:
  TensorF stacked() const;

  std::unique_ptr<Environment> inner_;
  Index k_;
  EnvSpec spec_;
  std::deque<TensorF> frames_;
};

struct EnvConfig {
  std::string name = "grid_treasure";
  Index grid_size = 5;
  Index render_scale = 8;
  Index chain_length = 10;
  Index noise_dims = 16;
  double sticky_p = 0.25;
  Index repeat = 4;
  Index stack = 4;
};

// raw env -> sticky actions -> action repeat -> frame stack (image envs only).
std::unique_ptr<Environment> make_environment(const EnvConfig& cfg, std::uint64_t seed);

}  // namespace dsac
