#pragma once

#include "dsac/types.hpp"

#include <cmath>

namespace dsac {

template <typename Scalar>
struct AdamState {
  Vec<Scalar> first_moment;
  Vec<Scalar> second_moment;
  long step = 0;
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);

  static AdamState zeros(Index n) {
    AdamState s;
    s.first_moment = Vec<Scalar>::Zero(n);
    s.second_moment = Vec<Scalar>::Zero(n);
    return s;
  }
};

// Bias-corrected Adam, in place.
template <typename Scalar>
void adam_step(Eigen::Ref<Vec<Scalar>> params, const Eigen::Ref<const Vec<Scalar>>& grads,
               AdamState<Scalar>& state, Scalar lr) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw ShapeError("adam_step: parameters (" + std::to_string(params.size()) +
                     "), gradients (" + std::to_string(grads.size()) + ") and moments (" +
                     std::to_string(state.first_moment.size()) + ") disagree");
  }
  ++state.step;
  const Scalar b1 = state.beta1, b2 = state.beta2;
  state.first_moment = b1 * state.first_moment + (Scalar(1) - b1) * grads;
  state.second_moment = b2 * state.second_moment + (Scalar(1) - b2) * grads.cwiseAbs2();
  const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(double(b1), double(state.step)));
  const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(double(b2), double(state.step)));
  params.array() -= lr * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

}  // namespace dsac
