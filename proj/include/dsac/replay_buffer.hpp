#pragma once

#include "dsac/tensor.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace dsac {

struct Transition {
  TensorF state;
  Index action = 0;
  float reward = 0.0f;
  TensorF next_state;
  bool terminal = false;
};

// Image observations in [0, 1] are stored as 8-bit intensities.
enum class ObservationEncoding { Float32, Quantized8 };

struct ReplayBatch {
  MatF states;
  MatF next_states;
  std::vector<Index> actions;
  VecF rewards;
  VecF terminals;
  std::vector<Index> indices;
};

// Bounded FIFO ring of transitions; the oldest entry is overwritten once full.
class ReplayBuffer {
 public:
  ReplayBuffer(Index capacity, Shape observation_shape, Index action_count,
               ObservationEncoding encoding);

  void push(const Transition& t);

  Index size() const { return size_; }
  Index capacity() const { return capacity_; }
  bool empty() const { return size_ == 0; }
  const Shape& observation_shape() const { return shape_; }
  ObservationEncoding encoding() const { return encoding_; }

  // i-th transition counted from the oldest still stored.
  Transition at(Index i) const;

  // Uniform draws with replacement over the current contents.
  ReplayBatch sample(Index batch_size, std::mt19937_64& rng) const;

  ReplayBatch gather(const std::vector<Index>& indices) const;

 private:
  Index slot_of(Index i) const { return size_ < capacity_ ? i : (cursor_ + i) % capacity_; }
  void store(Index slot, const TensorF& obs, bool next);
  void load(Index slot, bool next, Eigen::Ref<RowVec<float>> out) const;

  Index capacity_;
  Shape shape_;
  Index obs_size_;
  Index action_count_;
  ObservationEncoding encoding_;

  std::vector<float> states_f_, next_f_;
  std::vector<std::uint8_t> states_q_, next_q_;
  std::vector<Index> actions_;
  std::vector<float> rewards_;
  std::vector<std::uint8_t> terminals_;
  Index cursor_ = 0;
  Index size_ = 0;
};

}  // namespace dsac
