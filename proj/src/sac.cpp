#include "dsac/sac.hpp"

#include <cmath>

namespace dsac {

void SacConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma", "must lie in (0, 1]");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau", "must lie in (0, 1]");
  if (target_update_interval < 1) throw ConfigError("target_update_interval", "must be >= 1");
  if (gradient_steps < 1) throw ConfigError("gradient_steps", "must be >= 1");
  if (buffer_capacity < 1) throw ConfigError("buffer_capacity", "must be >= 1");
  if (initial_random_steps < 0) throw ConfigError("initial_random_steps", "must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (!(sac_lr > 0.0)) throw ConfigError("sac_lr", "must be positive");
  for (NetworkId id : kAllNetworks) {
    if (!(decor_lr_of(id) >= 0.0)) {
      throw ConfigError(std::string("decor_lr.") + network_name(id), "must be non-negative");
    }
  }
  if (!(initial_alpha > 0.0)) throw ConfigError("initial_alpha", "must be positive");
  if (!(downsample_b > 0.0)) throw ConfigError("downsample_b", "must be positive");
  if (!(arch.slope > 0.0 && arch.slope < 1.0)) throw ConfigError("net.leaky_slope", "must lie in (0, 1)");
  if (arch.hidden_units < 1) throw ConfigError("net.hidden_units", "must be >= 1");
}

const char* phase_name(UpdatePhase p) {
  switch (p) {
    case UpdatePhase::Critics: return "critics";
    case UpdatePhase::Policy: return "policy";
    case UpdatePhase::Temperature: return "temperature";
    case UpdatePhase::Targets: return "targets";
    case UpdatePhase::Decorrelation: return "decorrelation";
  }
  return "?";
}

AgentState make_agent(const Shape& observation_shape, Index action_count, const SacConfig& cfg,
                      Rng& init_rng) {
  cfg.validate();
  AgentState a;
  a.observation_shape = observation_shape;
  a.action_count = action_count;
  const auto b = static_cast<float>(cfg.downsample_b);
  auto build = [&](NetworkId id) {
    return build_network<float>(observation_shape, action_count, cfg.decorrelates(id), cfg.arch,
                                init_rng, static_cast<float>(cfg.decor_lr_of(id)), b);
  };
  a.policy = build(NetworkId::Policy);
  a.q1 = build(NetworkId::Q1);
  a.q2 = build(NetworkId::Q2);
  a.q1_target = a.q1;
  a.q2_target = a.q2;
  a.policy_opt = AdamState<float>::zeros(a.policy.parameter_count());
  a.q1_opt = AdamState<float>::zeros(a.q1.parameter_count());
  a.q2_opt = AdamState<float>::zeros(a.q2.parameter_count());
  a.alpha_opt = AdamState<float>::zeros(1);
  a.log_alpha = static_cast<float>(std::log(cfg.initial_alpha));
  return a;
}

std::vector<NetworkId> monitored_networks(const SacConfig& cfg) {
  std::vector<NetworkId> out;
  for (NetworkId id : kAllNetworks) {
    if (id == NetworkId::Policy || (cfg.decorrelates(id) && cfg.decor_lr_of(id) > 0.0)) out.push_back(id);
  }
  return out;
}

PolicyDistribution<float> policy_distribution(const NetworkF& policy, const MatF& states) {
  return distribution_from_logits(policy.predict(states));
}

namespace {

void apply_adam(NetworkF& net, const Gradients<float>& g, AdamState<float>& opt, float lr) {
  VecF params = net.flat_parameters();
  adam_step<float>(params, g.flat(), opt, lr);
  net.set_flat_parameters(params);
}

void soft_update(const NetworkF& online, NetworkF& target, float tau) {
  VecF t = target.flat_parameters();
  polyak_update<float>(online.flat_parameters(), t, tau);
  target.set_flat_parameters(t);
  // Decorrelating transforms are not part of theta; targets track them exactly.
  for (Index l = 0; l < online.layer_count(); ++l) {
    if (const auto& d = online.decorrelation(l)) target.set_decorrelation(l, *d);
  }
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
}

}  // namespace

TrainStepMetrics train_step(AgentState& agent, const ReplayBuffer& buffer, const SacConfig& cfg,
                            TrainRngs& rngs) {
  if (buffer.size() < cfg.batch_size) {
    throw StateError("train_step: replay holds " + std::to_string(buffer.size()) +
                     " transitions, batch needs " + std::to_string(cfg.batch_size));
  }
  const float lr = static_cast<float>(cfg.sac_lr);
  const float gamma = static_cast<float>(cfg.gamma);
  const float alpha = agent.alpha();
  TrainStepMetrics m;
  m.alpha = alpha;

  const ReplayBatch batch = buffer.sample(cfg.batch_size, rngs.replay);
  const Index n = cfg.batch_size;
  // All five networks share the first-layer geometry, so patches are extracted once per batch.
  const MatF rows = agent.policy.input_rows(batch.states);
  const MatF next_rows = agent.policy.input_rows(batch.next_states);

  // Critics against the soft Bellman target from the target networks.
  const auto next = distribution_from_logits(agent.policy.forward_rows(next_rows, n).output);
  const VecF targets = q_target<float>(batch.rewards, batch.terminals, next,
                                       agent.q1_target.forward_rows(next_rows, n).output,
                                       agent.q2_target.forward_rows(next_rows, n).output, alpha, gamma);
  {
    const auto t1 = agent.q1.forward_rows(rows, n);
    const auto l1 = q_loss<float>(t1.output, batch.actions, targets);
    apply_adam(agent.q1, agent.q1.backward(t1, l1.grad, false), agent.q1_opt, lr);
    const auto t2 = agent.q2.forward_rows(rows, n);
    const auto l2 = q_loss<float>(t2.output, batch.actions, targets);
    apply_adam(agent.q2, agent.q2.backward(t2, l2.grad, false), agent.q2_opt, lr);
    m.q1_loss = l1.loss;
    m.q2_loss = l2.loss;
  }
  m.phases.push_back(UpdatePhase::Critics);

  // Actor against the freshly updated critics.
  const auto policy_trace = agent.policy.forward_rows(rows, n);
  const auto q1_trace = agent.q1.forward_rows(rows, n);
  const auto q2_trace = agent.q2.forward_rows(rows, n);
  const auto pi = distribution_from_logits(policy_trace.output);
  const auto pl = policy_loss<float>(pi, q1_trace.output, q2_trace.output, alpha);
  apply_adam(agent.policy, agent.policy.backward(policy_trace, pl.grad, false), agent.policy_opt, lr);
  m.policy_loss = pl.loss;
  m.entropy = entropy(pi).cast<double>().mean();
  m.phases.push_back(UpdatePhase::Policy);

  const auto al = alpha_loss<float>(agent.log_alpha, pi,
                                    static_cast<float>(cfg.entropy_target_for(agent.action_count)));
  {
    VecF la(1);
    la[0] = agent.log_alpha;
    adam_step<float>(la, al.grad.reshaped(), agent.alpha_opt, lr);
    agent.log_alpha = la[0];
  }
  m.alpha_loss = al.loss;
  m.phases.push_back(UpdatePhase::Temperature);

  ++agent.gradient_steps_done;
  if (agent.gradient_steps_done % cfg.target_update_interval == 0) {
    soft_update(agent.q1, agent.q1_target, static_cast<float>(cfg.tau));
    soft_update(agent.q2, agent.q2_target, static_cast<float>(cfg.tau));
    m.phases.push_back(UpdatePhase::Targets);
  }

  // Decorrelation from the inputs cached by each network's latest forward pass.
  std::vector<double> per_network;
  for (NetworkId id : monitored_networks(cfg)) {
    const auto& trace = id == NetworkId::Policy ? policy_trace
                        : id == NetworkId::Q1   ? q1_trace
                                                : q2_trace;
    NetworkF& net = agent.network(id);
    const auto report = decorrelation_step(net, trace, cfg.downsample_b, cfg.patch_count_mode,
                                           rngs.downsample, cfg.decorrelates(id));
    NetworkDecorrelation nd;
    nd.network = id;
    // A frozen R stays the identity, so such a network reports as plain.
    nd.decorrelated = net.decorrelated() && cfg.decor_lr_of(id) > 0.0;
    nd.layer_losses = report.layer_losses;
    nd.loss = report.network_loss;
    per_network.push_back(nd.loss);
    m.decorrelation.push_back(std::move(nd));
  }
  m.decorrelation_total = total_decorrelation_loss(per_network);
  m.phases.push_back(UpdatePhase::Decorrelation);

  check_finite(m.q1_loss, "q1 loss");
  check_finite(m.q2_loss, "q2 loss");
  check_finite(m.policy_loss, "policy loss");
  check_finite(m.alpha_loss, "alpha loss");
  check_finite(m.decorrelation_total, "decorrelation loss");
  return m;
}

Index select_action(const AgentState& agent, const TensorF& observation, Rng& rng) {
  const MatF row = observation.row();
  const auto d = policy_distribution(agent.policy, row);
  return sample_action(d.probs.row(0), rng);
}

Index greedy_action(const AgentState& agent, const TensorF& observation) {
  const MatF row = observation.row();
  Index best = 0;
  agent.policy.predict(row).row(0).maxCoeff(&best);
  return best;
}

void EnvSession::reset() {
  observation = env->reset(reset_rng());
  needs_reset = false;
  episode_return = 0.0;
  episode_length = 0;
}

ActResult act_environment_step(const AgentState& agent, EnvSession& session, ReplayBuffer& buffer,
                               Index step_index, const SacConfig& cfg, Rng& rng) {
  if (session.needs_reset) session.reset();
  const Index action_count = session.env->spec().action_count;
  Index action;
  if (step_index < cfg.initial_random_steps) {
    std::uniform_int_distribution<Index> uniform(0, action_count - 1);
    action = uniform(rng);
  } else {
    action = select_action(agent, session.observation, rng);
  }
  EnvStep step = session.env->step(action);
  ActResult out;
  out.transition = Transition{session.observation, action, static_cast<float>(step.reward),
                              step.observation, step.terminal};
  buffer.push(out.transition);
  session.episode_return += step.reward;
  ++session.episode_length;
  if (step.episode_over()) {
    out.episode_over = true;
    out.episode_return = session.episode_return;
    out.episode_length = session.episode_length;
    session.reset();
  } else {
    session.observation = std::move(step.observation);
  }
  return out;
}

}  // namespace dsac
