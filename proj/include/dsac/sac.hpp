#pragma once

#include "dsac/adam.hpp"
#include "dsac/architecture.hpp"
#include "dsac/environment.hpp"
#include "dsac/replay_buffer.hpp"
#include "dsac/rng.hpp"
#include "dsac/sac_losses.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace dsac {

enum class NetworkId { Policy = 0, Q1 = 1, Q2 = 2 };

inline const char* network_name(NetworkId id) {
  switch (id) {
    case NetworkId::Policy: return "policy";
    case NetworkId::Q1: return "q1";
    case NetworkId::Q2: return "q2";
  }
  return "?";
}

inline constexpr std::array<NetworkId, 3> kAllNetworks{NetworkId::Policy, NetworkId::Q1,
                                                       NetworkId::Q2};

struct SacConfig {
  double gamma = 0.99;
  double tau = 0.005;
  Index target_update_interval = 1;
  Index gradient_steps = 1;
  Index buffer_capacity = 100000;
  Index initial_random_steps = 20000;
  Index batch_size = 64;
  double sac_lr = 3e-4;  // shared by both critics, the actor and the temperature
  std::array<double, 3> decor_lr{1e-4, 0.0, 0.0};  // indexed by NetworkId
  std::array<bool, 3> decorrelate{true, false, false};
  std::optional<double> entropy_target;  // default -(number of actions)
  double initial_alpha = 1.0;
  double downsample_b = 9.0;
  PatchCountMode patch_count_mode = PatchCountMode::PerImage;
  ArchitectureOptions arch;

  double decor_lr_of(NetworkId id) const { return decor_lr[std::size_t(id)]; }
  bool decorrelates(NetworkId id) const { return decorrelate[std::size_t(id)]; }
  double entropy_target_for(Index action_count) const {
    return entropy_target ? *entropy_target : -double(action_count);
  }
  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Parameters and optimizer state of the discrete SAC agent. Target critics
// share the online critics' architecture; at construction they are copies.
struct AgentState {
  Shape observation_shape;
  Index action_count = 0;
  NetworkF policy, q1, q2, q1_target, q2_target;
  AdamState<float> policy_opt, q1_opt, q2_opt, alpha_opt;
  float log_alpha = 0.0f;
  long gradient_steps_done = 0;

  NetworkF& network(NetworkId id) {
    return id == NetworkId::Policy ? policy : (id == NetworkId::Q1 ? q1 : q2);
  }
  const NetworkF& network(NetworkId id) const {
    return id == NetworkId::Policy ? policy : (id == NetworkId::Q1 ? q1 : q2);
  }
  float alpha() const { return std::exp(log_alpha); }
};

AgentState make_agent(const Shape& observation_shape, Index action_count, const SacConfig& cfg,
                      Rng& init_rng);

enum class UpdatePhase { Critics, Policy, Temperature, Targets, Decorrelation };
const char* phase_name(UpdatePhase p);

struct NetworkDecorrelation {
  NetworkId network = NetworkId::Policy;
  bool decorrelated = false;  // false: measured only, R implicitly identity
  std::vector<double> layer_losses;
  double loss = 0.0;
};

struct TrainStepMetrics {
  double q1_loss = 0.0, q2_loss = 0.0, policy_loss = 0.0, alpha_loss = 0.0;
  double alpha = 0.0;    // temperature used by this step's losses
  double entropy = 0.0;  // mean policy entropy on the batch
  std::vector<NetworkDecorrelation> decorrelation;
  double decorrelation_total = 0.0;
  std::vector<UpdatePhase> phases;
};

// Random streams consumed by training; kept apart so each is reproducible alone.
struct TrainRngs {
  Rng replay;
  Rng downsample;
  Rng action;

  static TrainRngs from(const SeedSequence& seeds) {
    return {seeds.rng(SeedStream::Replay), seeds.rng(SeedStream::Downsample),
            seeds.rng(SeedStream::Action)};
  }
};

// Networks whose layer decorrelation losses are reported each step: every
// network with a nonzero decorrelation rate plus the policy (measured with
// R = I otherwise, so plain SAC reports comparable diagnostics).
std::vector<NetworkId> monitored_networks(const SacConfig& cfg);

// One gradient step: critics, actor, temperature, targets, then decorrelation.
TrainStepMetrics train_step(AgentState& agent, const ReplayBuffer& buffer, const SacConfig& cfg,
                            TrainRngs& rngs);

PolicyDistribution<float> policy_distribution(const NetworkF& policy, const MatF& states);

Index select_action(const AgentState& agent, const TensorF& observation, Rng& rng);
Index greedy_action(const AgentState& agent, const TensorF& observation);

// An environment plus the observation the agent currently faces.
struct EnvSession {
  std::unique_ptr<Environment> env;
  TensorF observation;
  Rng reset_rng;
  bool needs_reset = true;
  double episode_return = 0.0;
  Index episode_length = 0;

  EnvSession(std::unique_ptr<Environment> e, std::uint64_t reset_seed)
      : env(std::move(e)), reset_rng(reset_seed) {}
  void reset();
};

struct ActResult {
  Transition transition;
  bool episode_over = false;
  double episode_return = 0.0;  // valid when episode_over
  Index episode_length = 0;
};

// Uniform-random action before `initial_random_steps`, policy sample after;
// the transition is appended to the buffer and the episode reset once it ends.
ActResult act_environment_step(const AgentState& agent, EnvSession& session, ReplayBuffer& buffer,
                               Index step_index, const SacConfig& cfg, Rng& rng);

}  // namespace dsac
