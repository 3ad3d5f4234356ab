#pragma once

#include "dsac/ops.hpp"

#include <random>
#include <span>

namespace dsac {

// Discrete soft actor-critic objectives in closed form. Each loss returns its
// value and the gradient with respect to the quantity the caller
// backpropagates from (Q outputs, policy logits, or log-temperature).

template <typename Scalar>
struct PolicyDistribution {
  Mat<Scalar> probs;
  Mat<Scalar> log_probs;
};

template <typename Derived>
auto distribution_from_logits(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  PolicyDistribution<Scalar> d;
  d.log_probs = log_softmax(logits);
  d.probs = d.log_probs.array().exp();
  return d;
}

template <typename Scalar>
Vec<Scalar> entropy(const PolicyDistribution<Scalar>& d) {
  return -(d.probs.array() * d.log_probs.array()).rowwise().sum();
}

template <typename Scalar>
struct LossWithGradient {
  double loss = 0.0;
  Mat<Scalar> grad;
};

// y = r + (1 - done) * gamma * sum_a pi(a|s') (min_i Qbar_i(s', a) - alpha log pi(a|s'))
template <typename Scalar>
Vec<Scalar> q_target(const Vec<Scalar>& rewards, const Vec<Scalar>& terminals,
                     const PolicyDistribution<Scalar>& next, const Mat<Scalar>& q1_next,
                     const Mat<Scalar>& q2_next, Scalar alpha, Scalar gamma) {
  const Index n = rewards.size();
  if (terminals.size() != n || next.probs.rows() != n || q1_next.rows() != n ||
      q2_next.rows() != n || q1_next.cols() != next.probs.cols() ||
      q2_next.cols() != next.probs.cols()) {
    throw ShapeError("q_target: batch shapes disagree");
  }
  const auto soft_value =
      (next.probs.array() * (q1_next.cwiseMin(q2_next).array() - alpha * next.log_probs.array()))
          .rowwise()
          .sum();
  return (rewards.array() + (Scalar(1) - terminals.array()) * gamma * soft_value).matrix();
}

// mean_b 1/2 (Q(s_b, a_b) - y_b)^2; only the taken action's output receives gradient.
template <typename Scalar>
LossWithGradient<Scalar> q_loss(const Mat<Scalar>& q_values, std::span<const Index> actions,
                                const Vec<Scalar>& targets) {
  const Index n = q_values.rows();
  if (Index(actions.size()) != n || targets.size() != n) {
    throw ShapeError("q_loss: batch shapes disagree");
  }
  LossWithGradient<Scalar> out;
  out.grad = Mat<Scalar>::Zero(q_values.rows(), q_values.cols());
  if (n == 0) return out;
  double total = 0.0;
  for (Index b = 0; b < n; ++b) {
    const Index a = actions[std::size_t(b)];
    if (a < 0 || a >= q_values.cols()) throw std::out_of_range("q_loss: action out of range");
    const Scalar diff = q_values(b, a) - targets[b];
    total += 0.5 * double(diff) * double(diff);
    out.grad(b, a) = diff / Scalar(n);
  }
  out.loss = total / double(n);
  return out;
}

// mean_b sum_a pi(a|s) (alpha log pi(a|s) - min_i Q_i(s, a)); gradient w.r.t. logits.
template <typename Scalar>
LossWithGradient<Scalar> policy_loss(const PolicyDistribution<Scalar>& pi, const Mat<Scalar>& q1,
                                     const Mat<Scalar>& q2, Scalar alpha) {
  const Index n = pi.probs.rows();
  if (q1.rows() != n || q2.rows() != n || q1.cols() != pi.probs.cols() ||
      q2.cols() != pi.probs.cols()) {
    throw ShapeError("policy_loss: batch shapes disagree");
  }
  LossWithGradient<Scalar> out;
  out.grad = Mat<Scalar>::Zero(pi.probs.rows(), pi.probs.cols());
  if (n == 0) return out;
  const Mat<Scalar> inner = (alpha * pi.log_probs.array() - q1.cwiseMin(q2).array()).matrix();
  const Vec<Scalar> per_state = (pi.probs.array() * inner.array()).rowwise().sum();
  out.loss = per_state.template cast<double>().mean();
  // d/dlogit_k sum_a pi_a f_a = pi_k (f_k - sum_a pi_a f_a); the alpha log pi
  // term contributes nothing extra because sum_a pi_a dlog pi_a = 0.
  out.grad = (pi.probs.array() * (inner.colwise() - per_state).array()).matrix() / Scalar(n);
  return out;
}

// mean_b sum_a pi(a|s) (-alpha (log pi(a|s) + H)) with alpha = exp(log_alpha).
// The gradient (1x1) is with respect to log_alpha.
template <typename Scalar>
LossWithGradient<Scalar> alpha_loss(Scalar log_alpha, const PolicyDistribution<Scalar>& pi,
                                    Scalar entropy_target) {
  LossWithGradient<Scalar> out;
  out.grad = Mat<Scalar>::Zero(1, 1);
  const Index n = pi.probs.rows();
  if (n == 0) return out;
  const double alpha = std::exp(double(log_alpha));
  const Vec<Scalar> per_state =
      (pi.probs.array() * (pi.log_probs.array() + entropy_target)).rowwise().sum();
  const double mean = per_state.template cast<double>().mean();
  out.loss = -alpha * mean;
  out.grad(0, 0) = static_cast<Scalar>(out.loss);  // d(alpha)/d(log_alpha) = alpha
  return out;
}

// target <- tau * online + (1 - tau) * target
template <typename Scalar>
void polyak_update(const Vec<Scalar>& online, Vec<Scalar>& target, Scalar tau) {
  if (online.size() != target.size()) {
    throw ShapeError("polyak_update: " + std::to_string(online.size()) + " vs " +
                     std::to_string(target.size()) + " parameters");
  }
  target = tau * online + (Scalar(1) - tau) * target;
}

// Categorical draw from one row of probabilities.
template <typename Derived, typename URBG>
Index sample_action(const Eigen::MatrixBase<Derived>& probs, URBG& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double draw = u(rng);
  double cumulative = 0.0;
  Index last_positive = 0;
  for (Index a = 0; a < probs.size(); ++a) {
    const double p = double(probs(a));
    if (p <= 0.0) continue;
    last_positive = a;
    cumulative += p;
    if (draw < cumulative) return a;
  }
  return last_positive;
}

}  // namespace dsac
