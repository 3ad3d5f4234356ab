#include "dsac/environment.hpp"

#include "dsac/rng.hpp"

namespace dsac {

namespace {

void check_action(const EnvSpec& spec, Index action) {
  if (action < 0 || action >= spec.action_count) {
    throw ActionError("action " + std::to_string(action) + " outside [0, " +
                      std::to_string(spec.action_count) + ")");
  }
}

}  // namespace

GridTreasure::GridTreasure(Index size, Index render_scale) : size_(size), scale_(render_scale) {
  if (size < 3) throw ConfigError("env.size", "grid size must be at least 3");
  if (render_scale < 1) throw ConfigError("env.render_scale", "must be at least 1");
  spec_.action_count = 4;
  spec_.observation_shape = {1, size * render_scale, size * render_scale};
  spec_.max_episode_steps = kEpisodeCap;
}

TensorF GridTreasure::render() const {
  const Index px = size_ * scale_;
  TensorF img(spec_.observation_shape);
  auto fill = [&](Index r, Index c, float v) {
    for (Index y = r * scale_; y < (r + 1) * scale_; ++y)
      for (Index x = c * scale_; x < (c + 1) * scale_; ++x) img[y * px + x] = v;
  };
  const Index goal = size_ - 1;
  if (row_ != goal || col_ != goal) fill(goal, goal, 0.5f);
  fill(row_, col_, 1.0f);
  return img;
}

TensorF GridTreasure::reset(std::uint64_t) {
  row_ = col_ = 0;
  steps_ = 0;
  done_ = false;
  return render();
}

EnvStep GridTreasure::step(Index action) {
  check_action(spec_, action);
  if (done_) throw StateError("grid_treasure: step after episode end; call reset");
  switch (action) {
    case 0: row_ = std::max<Index>(0, row_ - 1); break;
    case 1: row_ = std::min<Index>(size_ - 1, row_ + 1); break;
    case 2: col_ = std::max<Index>(0, col_ - 1); break;
    default: col_ = std::min<Index>(size_ - 1, col_ + 1); break;
  }
  ++steps_;
  EnvStep out;
  out.terminal = row_ == size_ - 1 && col_ == size_ - 1;
  out.reward = out.terminal ? kTreasureReward : kStepReward;
  if (!out.terminal && steps_ >= kEpisodeCap) out.info["truncated"] = 1.0;
  done_ = out.episode_over();
  out.observation = render();
  return out;
}

NoisyChain::NoisyChain(Index length, Index noise_dims, std::uint64_t construction_seed)
    : length_(length), noise_dims_(noise_dims) {
  if (length < 3) throw ConfigError("env.length", "chain length must be at least 3");
  if (noise_dims < 0) throw ConfigError("env.noise_dims", "must be non-negative");
  spec_.action_count = 2;
  spec_.observation_shape = {length + noise_dims};
  spec_.max_episode_steps = 4 * length;
  std::mt19937_64 rng(construction_seed);
  std::uniform_real_distribution<double> magnitude(0.5, 1.5);
  std::bernoulli_distribution flip(0.5);
  scales_.resize(noise_dims);
  for (Index i = 0; i < noise_dims; ++i) {
    scales_[i] = static_cast<float>(flip(rng) ? -magnitude(rng) : magnitude(rng));
  }
}

TensorF NoisyChain::observe() {
  TensorF obs(spec_.observation_shape);
  obs[pos_] = 1.0f;
  if (noise_dims_ > 0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const float g = static_cast<float>(normal(noise_rng_));
    for (Index i = 0; i < noise_dims_; ++i) obs[length_ + i] = scales_[i] * g;
  }
  return obs;
}

TensorF NoisyChain::reset(std::uint64_t seed) {
  noise_rng_.seed(seed);
  pos_ = 0;
  steps_ = 0;
  done_ = false;
  return observe();
}

EnvStep NoisyChain::step(Index action) {
  check_action(spec_, action);
  if (done_) throw StateError("noisy_chain: step after episode end; call reset");
  pos_ = action == 0 ? std::max<Index>(0, pos_ - 1) : std::min<Index>(length_ - 1, pos_ + 1);
  ++steps_;
  EnvStep out;
  out.terminal = pos_ == length_ - 1;
  out.reward = out.terminal ? 1.0 : 0.0;
  if (!out.terminal && steps_ >= *spec_.max_episode_steps) out.info["truncated"] = 1.0;
  done_ = out.episode_over();
  out.observation = observe();
  return out;
}

std::unique_ptr<Environment> make_grid_treasure(Index size, Index render_scale, std::uint64_t) {
  return std::make_unique<GridTreasure>(size, render_scale);
}

std::unique_ptr<Environment> make_noisy_chain(Index length, Index noise_dims, std::uint64_t seed) {
  return std::make_unique<NoisyChain>(length, noise_dims, seed);
}

StickyActions::StickyActions(std::unique_ptr<Environment> inner, double p, std::uint64_t seed)
    : inner_(std::move(inner)), p_(p), rng_(seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("wrap.sticky_p", "must lie in [0, 1]");
}

TensorF StickyActions::reset(std::uint64_t seed) {
  previous_.reset();
  return inner_->reset(seed);
}

EnvStep StickyActions::step(Index action) {
  check_action(spec(), action);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // One draw per step regardless of history keeps the stream aligned.
  const bool repeat = u(rng_) < p_;
  const Index executed = (repeat && previous_) ? *previous_ : action;
  EnvStep out = inner_->step(executed);
  out.info["executed_action"] = double(executed);
  out.info["repeated"] = (repeat && previous_) ? 1.0 : 0.0;
  previous_ = executed;
  return out;
}

ActionRepeat::ActionRepeat(std::unique_ptr<Environment> inner, Index k)
    : inner_(std::move(inner)), k_(k) {
  if (k < 1) throw ConfigError("wrap.repeat", "must be at least 1");
}

EnvStep ActionRepeat::step(Index action) {
  EnvStep out;
  double total = 0.0;
  for (Index i = 0; i < k_; ++i) {
    out = inner_->step(action);
    total += out.reward;
    if (out.episode_over()) break;
  }
  out.reward = total;
  return out;
}

FrameStack::FrameStack(std::unique_ptr<Environment> inner, Index k) : inner_(std::move(inner)), k_(k) {
  if (k < 1) throw ConfigError("wrap.stack", "must be at least 1");
  const Shape& s = inner_->spec().observation_shape;
  if (s.size() != 3) {
    throw ConfigError("wrap.stack", "frame stacking needs image observations, got shape " + to_string(s));
  }
  spec_ = inner_->spec();
  spec_.observation_shape = {s[0] * k, s[1], s[2]};
}

TensorF FrameStack::stacked() const {
  TensorF out(spec_.observation_shape);
  Index at = 0;
  for (const auto& f : frames_) {
    out.data().segment(at, f.size()) = f.data();
    at += f.size();
  }
  return out;
}

TensorF FrameStack::reset(std::uint64_t seed) {
  TensorF first = inner_->reset(seed);
  frames_.assign(std::size_t(k_), first);
  return stacked();
}

EnvStep FrameStack::step(Index action) {
  EnvStep out = inner_->step(action);
  frames_.pop_front();
  frames_.push_back(out.observation);
  out.observation = stacked();
  return out;
}

std::unique_ptr<Environment> make_environment(const EnvConfig& cfg, std::uint64_t seed) {
  SeedSequence seeds(seed);
  std::unique_ptr<Environment> env;
  if (cfg.name == "grid_treasure") {
    env = make_grid_treasure(cfg.grid_size, cfg.render_scale, seeds.derive(SeedStream::EnvBuild));
  } else if (cfg.name == "noisy_chain") {
    env = make_noisy_chain(cfg.chain_length, cfg.noise_dims, seeds.derive(SeedStream::EnvBuild));
  } else {
    throw ConfigError("env", "unknown environment '" + cfg.name + "'");
  }
  env = std::make_unique<StickyActions>(std::move(env), cfg.sticky_p, seeds.derive(SeedStream::Sticky));
  env = std::make_unique<ActionRepeat>(std::move(env), cfg.repeat);
  if (is_image_shape(env->spec().observation_shape) && cfg.stack > 1) {
    env = std::make_unique<FrameStack>(std::move(env), cfg.stack);
  } else if (cfg.stack < 1) {
    throw ConfigError("wrap.stack", "must be at least 1");
  }
  return env;
}

}  // namespace dsac
