#pragma once

#include "dsac/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>

namespace dsac {

enum class DecorrelationKind { Dense, Patchwise };

// Per-layer decorrelating transform x = R z, R identity at construction.
template <typename Scalar>
struct DecorrelationState {
  Mat<Scalar> R;
  Scalar eta = Scalar(0);
  DecorrelationKind kind = DecorrelationKind::Dense;
  Scalar downsample_b = Scalar(9);

  static DecorrelationState identity(Index dim, Scalar eta, DecorrelationKind kind,
                                     Scalar downsample_b = Scalar(9)) {
    if (dim < 1) throw ShapeError("decorrelation dimension must be positive");
    return {Mat<Scalar>::Identity(dim, dim), eta, kind, downsample_b};
  }

  Index dim() const { return R.rows(); }
};

// Off-diagonal second moment of decorrelated inputs: symmetric, zero diagonal.
template <typename Scalar>
struct CorrelationEstimate {
  Mat<Scalar> C;
  Index sample_count = 0;

  Index dim() const { return C.rows(); }
};

struct EmptyInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

template <typename Scalar, typename Derived>
Mat<Scalar> decorrelate(const DecorrelationState<Scalar>& state,
                        const Eigen::MatrixBase<Derived>& z) {
  if (z.cols() != state.dim()) {
    throw ShapeError("decorrelate: input " + shape_string(z) + " does not match R " +
                     shape_string(state.R));
  }
  Mat<Scalar> x(z.rows(), z.cols());
  x.noalias() = z * state.R.transpose();
  return x;
}

// A = W R, so that W (R z) can be evaluated as A z.
template <typename Scalar>
Mat<Scalar> fuse(const Mat<Scalar>& weights, const DecorrelationState<Scalar>& state) {
  if (weights.cols() != state.dim()) {
    throw ShapeError("fuse: weights " + shape_string(weights) + " do not match R " +
                     shape_string(state.R));
  }
  Mat<Scalar> a(weights.rows(), weights.cols());
  a.noalias() = weights * state.R;
  return a;
}

// C = E[x x^T] - diag(E[x^2]). Only the lower triangle is accumulated and then
// mirrored, so symmetry is exact.
template <typename Derived>
auto estimate_correlation(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.rows() == 0) throw EmptyInputError("estimate_correlation needs at least one sample");
  const Index d = x.cols();
  Mat<Scalar> lower = Mat<Scalar>::Zero(d, d);
  lower.template selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(),
                                                            Scalar(1) / Scalar(x.rows()));
  CorrelationEstimate<Scalar> est;
  est.C = lower.template selfadjointView<Eigen::Lower>();
  est.C.diagonal().setZero();
  est.sample_count = x.rows();
  return est;
}

// R <- R - eta C R
template <typename Scalar>
void update_decorrelation(DecorrelationState<Scalar>& state, const CorrelationEstimate<Scalar>& c) {
  if (c.dim() != state.dim()) {
    throw ShapeError("update_decorrelation: C " + shape_string(c.C) + " vs R " +
                     shape_string(state.R));
  }
  if (state.eta == Scalar(0)) return;
  Mat<Scalar> cr(state.dim(), state.dim());
  cr.noalias() = c.C * state.R;
  state.R -= state.eta * cr;
}

// d = sum_ij c_ij^2, accumulated in double.
template <typename Scalar>
double decorrelation_loss(const CorrelationEstimate<Scalar>& c) {
  return c.C.template cast<double>().squaredNorm();
}

inline double network_decorrelation_loss(std::span<const double> per_layer) {
  return std::accumulate(per_layer.begin(), per_layer.end(), 0.0);
}

inline double total_decorrelation_loss(std::span<const double> per_network) {
  return std::accumulate(per_network.begin(), per_network.end(), 0.0);
}

// Rows sampled for a patchwise correlation estimate: max(10, b*D_r/p + 1),
// rounded half-up.
inline Index downsample_count(double b, Index row_dim, Index patches) {
  if (!(b > 0.0) || row_dim < 1 || patches < 1) {
    throw std::invalid_argument("downsample_count needs b > 0, D_r >= 1, p >= 1");
  }
  const double raw = b * double(row_dim) / double(patches) + 1.0;
  return std::max<Index>(10, static_cast<Index>(std::floor(raw + 0.5)));
}

// Uniform sample of min(n, N) rows without replacement, kept in input order.
template <typename Derived, typename URBG>
auto sample_rows(const Eigen::MatrixBase<Derived>& x, Index n, URBG& rng) {
  using Scalar = typename Derived::Scalar;
  const Index total = x.rows();
  if (n >= total) return Mat<Scalar>(x);
  std::vector<Index> idx(static_cast<std::size_t>(total));
  std::iota(idx.begin(), idx.end(), Index{0});
  // Partial Fisher-Yates: the first n slots become a uniform n-subset.
  for (Index i = 0; i < n; ++i) {
    std::uniform_int_distribution<Index> pick(i, total - 1);
    std::swap(idx[std::size_t(i)], idx[std::size_t(pick(rng))]);
  }
  std::sort(idx.begin(), idx.begin() + n);
  Mat<Scalar> out(n, x.cols());
  for (Index i = 0; i < n; ++i) out.row(i) = x.row(idx[std::size_t(i)]);
  return out;
}

}  // namespace dsac
