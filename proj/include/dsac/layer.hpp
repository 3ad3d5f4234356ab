#pragma once

#include "dsac/ops.hpp"

#include <cmath>
#include <random>

namespace dsac {

enum class LayerKind { Dense, Conv };

// Weights are out x in. For convolutions "in" is the patch dimension C*k*k,
// so every layer kind is a matrix acting on rows of (possibly patch) inputs.
template <typename Scalar>
struct LayerParams {
  LayerKind kind = LayerKind::Dense;
  ConvGeometry geometry;  // meaningful for Conv only
  Mat<Scalar> weights;
  Vec<Scalar> bias;

  static LayerParams dense(Index in_features, Index out_features) {
    LayerParams p;
    p.kind = LayerKind::Dense;
    p.weights = Mat<Scalar>::Zero(out_features, in_features);
    p.bias = Vec<Scalar>::Zero(out_features);
    return p;
  }

  static LayerParams conv(const ConvGeometry& g) {
    g.validate();
    LayerParams p;
    p.kind = LayerKind::Conv;
    p.geometry = g;
    p.weights = Mat<Scalar>::Zero(g.out_channels, g.patch_dim());
    p.bias = Vec<Scalar>::Zero(g.out_channels);
    return p;
  }

  Index in_features() const { return kind == LayerKind::Conv ? geometry.in_features() : weights.cols(); }
  Index out_features() const { return kind == LayerKind::Conv ? geometry.out_features() : weights.rows(); }
  // Width of the rows the weight matrix multiplies (the decorrelated dimension).
  Index row_dim() const { return weights.cols(); }
  Index parameter_count() const { return weights.size() + bias.size(); }

  template <typename Other>
  LayerParams<Other> cast() const {
    LayerParams<Other> o;
    o.kind = kind;
    o.geometry = geometry;
    o.weights = weights.template cast<Other>();
    o.bias = bias.template cast<Other>();
    return o;
  }
};

// Uniform Kaiming fan-in initialization for leaky-ReLU layers; biases start at zero.
template <typename Scalar, typename URBG>
void kaiming_uniform(LayerParams<Scalar>& p, Scalar slope, URBG& rng) {
  const double fan_in = static_cast<double>(p.row_dim());
  const double gain = std::sqrt(2.0 / (1.0 + double(slope) * double(slope)));
  const double bound = gain * std::sqrt(3.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < p.weights.size(); ++i) p.weights.data()[i] = static_cast<Scalar>(dist(rng));
  p.bias.setZero();
}

// rows * A^T + bias, with A either the layer weights or fused weights W R.
template <typename Derived, typename Scalar>
Mat<Scalar> affine_rows(const Eigen::MatrixBase<Derived>& rows, const Mat<Scalar>& a,
                        const Vec<Scalar>& bias) {
  if (rows.cols() != a.cols()) {
    throw ShapeError("affine: input " + shape_string(rows) + " does not match weights " +
                     shape_string(a));
  }
  Mat<Scalar> out(rows.rows(), a.rows());
  out.noalias() = rows * a.transpose();
  out.rowwise() += bias.transpose();
  return out;
}

template <typename Scalar, typename Derived>
Mat<Scalar> dense_forward(const LayerParams<Scalar>& p, const Eigen::MatrixBase<Derived>& x) {
  return affine_rows(x, p.weights, p.bias);
}

// Convolution as patch extraction followed by a per-patch dense map.
template <typename Scalar, typename Derived>
Mat<Scalar> conv_forward(const LayerParams<Scalar>& p, const Eigen::MatrixBase<Derived>& input) {
  if (p.kind != LayerKind::Conv) throw GeometryError("conv_forward on a dense layer");
  const Mat<Scalar> rows = extract_patches(input, p.geometry);
  return patches_to_maps(affine_rows(rows, p.weights, p.bias), input.rows(),
                         p.geometry.patch_count());
}

}  // namespace dsac
