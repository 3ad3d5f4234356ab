#include "dsac/replay_buffer.hpp"

#include <algorithm>
#include <cmath>

namespace dsac {

ReplayBuffer::ReplayBuffer(Index capacity, Shape observation_shape, Index action_count,
                           ObservationEncoding encoding)
    : capacity_(capacity),
      shape_(std::move(observation_shape)),
      obs_size_(shape_product(shape_)),
      action_count_(action_count),
      encoding_(encoding) {
  if (capacity < 1) throw std::invalid_argument("replay capacity must be positive");
  if (action_count < 1) throw std::invalid_argument("action count must be positive");
}

void ReplayBuffer::store(Index slot, const TensorF& obs, bool next) {
  const std::size_t at = std::size_t(slot * obs_size_);
  if (encoding_ == ObservationEncoding::Quantized8) {
    auto& dst = next ? next_q_ : states_q_;
    for (Index i = 0; i < obs_size_; ++i) {
      const float v = std::clamp(obs[i], 0.0f, 1.0f);
      dst[at + std::size_t(i)] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  } else {
    auto& dst = next ? next_f_ : states_f_;
    std::copy(obs.data().data(), obs.data().data() + obs_size_, dst.begin() + std::ptrdiff_t(at));
  }
}

void ReplayBuffer::load(Index slot, bool next, Eigen::Ref<RowVec<float>> out) const {
  const std::size_t at = std::size_t(slot * obs_size_);
  if (encoding_ == ObservationEncoding::Quantized8) {
    const auto& src = next ? next_q_ : states_q_;
    for (Index i = 0; i < obs_size_; ++i) out[i] = float(src[at + std::size_t(i)]) / 255.0f;
  } else {
    const auto& src = next ? next_f_ : states_f_;
    out = Eigen::Map<const RowVec<float>>(src.data() + at, obs_size_);
  }
}

void ReplayBuffer::push(const Transition& t) {
  if (t.state.shape() != shape_ || t.next_state.shape() != shape_) {
    throw ShapeError("replay: observation shape " + to_string(t.state.shape()) + " expected " +
                     to_string(shape_));
  }
  if (t.action < 0 || t.action >= action_count_) {
    throw std::out_of_range("replay: action " + std::to_string(t.action) + " out of range");
  }
  if (size_ < capacity_) {
    // Grow lazily so short runs with a large nominal capacity stay small.
    const std::size_t n = std::size_t((size_ + 1) * obs_size_);
    if (encoding_ == ObservationEncoding::Quantized8) {
      states_q_.resize(n);
      next_q_.resize(n);
    } else {
      states_f_.resize(n);
      next_f_.resize(n);
    }
    actions_.push_back(0);
    rewards_.push_back(0.0f);
    terminals_.push_back(0);
  }
  const Index slot = cursor_;
  store(slot, t.state, false);
  store(slot, t.next_state, true);
  actions_[std::size_t(slot)] = t.action;
  rewards_[std::size_t(slot)] = t.reward;
  terminals_[std::size_t(slot)] = t.terminal ? 1 : 0;
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Transition ReplayBuffer::at(Index i) const {
  if (i < 0 || i >= size_) throw std::out_of_range("replay index out of range");
  const Index slot = slot_of(i);
  Transition t;
  t.state = TensorF(shape_);
  t.next_state = TensorF(shape_);
  RowVec<float> row(obs_size_);
  load(slot, false, row);
  t.state.data() = row.transpose();
  load(slot, true, row);
  t.next_state.data() = row.transpose();
  t.action = actions_[std::size_t(slot)];
  t.reward = rewards_[std::size_t(slot)];
  t.terminal = terminals_[std::size_t(slot)] != 0;
  return t;
}

ReplayBatch ReplayBuffer::gather(const std::vector<Index>& indices) const {
  const Index n = Index(indices.size());
  ReplayBatch b;
  b.states.resize(n, obs_size_);
  b.next_states.resize(n, obs_size_);
  b.rewards.resize(n);
  b.terminals.resize(n);
  b.actions.resize(std::size_t(n));
  b.indices = indices;
  for (Index r = 0; r < n; ++r) {
    const Index i = indices[std::size_t(r)];
    if (i < 0 || i >= size_) throw std::out_of_range("replay index out of range");
    const Index slot = slot_of(i);
    load(slot, false, b.states.row(r));
    load(slot, true, b.next_states.row(r));
    b.actions[std::size_t(r)] = actions_[std::size_t(slot)];
    b.rewards[r] = rewards_[std::size_t(slot)];
    b.terminals[r] = terminals_[std::size_t(slot)] ? 1.0f : 0.0f;
  }
  return b;
}

ReplayBatch ReplayBuffer::sample(Index batch_size, std::mt19937_64& rng) const {
  if (size_ == 0) throw StateError("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<Index> pick(0, size_ - 1);
  std::vector<Index> idx(static_cast<std::size_t>(batch_size));
  for (auto& i : idx) i = pick(rng);
  return gather(idx);
}

}  // namespace dsac
