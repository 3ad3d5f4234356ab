#pragma once

#include "dsac/tensor.hpp"
#include "dsac/types.hpp"

#include <cmath>

namespace dsac {

template <typename A, typename B>
auto matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  using Scalar = typename A::Scalar;
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree for " + shape_string(a) + " x " +
                     shape_string(b));
  }
  return Mat<Scalar>(a * b);
}

template <typename Derived>
auto leaky_relu(const Eigen::MatrixBase<Derived>& x, typename Derived::Scalar slope) {
  using Scalar = typename Derived::Scalar;
  return Mat<Scalar>(x.unaryExpr([slope](Scalar v) { return v > Scalar(0) ? v : slope * v; }));
}

// Gradient through leaky ReLU given the pre-activation values.
template <typename D1, typename D2>
auto leaky_relu_backward(const Eigen::MatrixBase<D1>& pre, const Eigen::MatrixBase<D2>& upstream,
                         typename D1::Scalar slope) {
  using Scalar = typename D1::Scalar;
  if (pre.rows() != upstream.rows() || pre.cols() != upstream.cols()) {
    throw ShapeError("leaky_relu_backward: " + shape_string(pre) + " vs " + shape_string(upstream));
  }
  return Mat<Scalar>(upstream.binaryExpr(
      pre, [slope](Scalar g, Scalar v) { return v > Scalar(0) ? g : slope * g; }));
}

template <typename Derived>
auto log_softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  if (logits.cols() < 1) throw ShapeError("log_softmax needs at least one column");
  Mat<Scalar> out(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const Scalar m = logits.row(r).maxCoeff();
    const Scalar lse = m + std::log((logits.row(r).array() - m).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

template <typename Derived>
auto softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  return Mat<Scalar>(log_softmax(logits).array().exp());
}

// d/dlogits of a function of log_softmax(logits): g - softmax * rowsum(g).
template <typename D1, typename D2>
auto log_softmax_backward(const Eigen::MatrixBase<D1>& log_probs,
                          const Eigen::MatrixBase<D2>& upstream) {
  using Scalar = typename D1::Scalar;
  Mat<Scalar> probs = log_probs.array().exp();
  Vec<Scalar> sums = upstream.rowwise().sum();
  return Mat<Scalar>(upstream - (probs.array().colwise() * sums.array()).matrix());
}

struct ConvGeometry {
  Index in_channels = 1;
  Index in_height = 1;
  Index in_width = 1;
  Index kernel = 1;
  Index stride = 1;
  Index padding = 0;
  Index out_channels = 1;

  Index out_height() const { return (in_height + 2 * padding - kernel) / stride + 1; }
  Index out_width() const { return (in_width + 2 * padding - kernel) / stride + 1; }
  Index patch_count() const { return out_height() * out_width(); }
  Index patch_dim() const { return in_channels * kernel * kernel; }
  Index in_features() const { return in_channels * in_height * in_width; }
  Index out_features() const { return out_channels * patch_count(); }

  void validate() const {
    if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1 || padding < 0) {
      throw GeometryError("convolution needs positive channels, kernel and stride");
    }
    if (in_height + 2 * padding < kernel || in_width + 2 * padding < kernel) {
      throw GeometryError("kernel " + std::to_string(kernel) + " exceeds spatial extent " +
                          std::to_string(in_height) + "x" + std::to_string(in_width));
    }
  }

  bool operator==(const ConvGeometry&) const = default;
};

namespace detail {

// `image` is one contiguous C*H*W image, `rows` a row-major patch_count x patch_dim block.
template <typename Scalar>
void patches_of_image(const Scalar* image, const ConvGeometry& g, Scalar* rows) {
  const Index oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  Scalar* out = rows;
  for (Index oy = 0; oy < oh; ++oy) {
    for (Index ox = 0; ox < ow; ++ox) {
      const Index x0 = ox * g.stride - g.padding;
      for (Index c = 0; c < g.in_channels; ++c) {
        for (Index ky = 0; ky < k; ++ky, out += k) {
          const Index y = oy * g.stride + ky - g.padding;
          if (y < 0 || y >= g.in_height) {
            for (Index kx = 0; kx < k; ++kx) out[kx] = Scalar(0);
            continue;
          }
          const Scalar* src = image + (c * g.in_height + y) * g.in_width;
          if (x0 >= 0 && x0 + k <= g.in_width) {
            for (Index kx = 0; kx < k; ++kx) out[kx] = src[x0 + kx];
          } else {
            for (Index kx = 0; kx < k; ++kx) {
              const Index x = x0 + kx;
              out[kx] = x >= 0 && x < g.in_width ? src[x] : Scalar(0);
            }
          }
        }
      }
    }
  }
}

// Adjoint of patches_of_image: adds each patch row back onto `image`.
template <typename Scalar>
void fold_image(const Scalar* rows, const ConvGeometry& g, Scalar* image) {
  const Index oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  const Scalar* in = rows;
  for (Index oy = 0; oy < oh; ++oy) {
    for (Index ox = 0; ox < ow; ++ox) {
      const Index x0 = ox * g.stride - g.padding;
      for (Index c = 0; c < g.in_channels; ++c) {
        for (Index ky = 0; ky < k; ++ky, in += k) {
          const Index y = oy * g.stride + ky - g.padding;
          if (y < 0 || y >= g.in_height) continue;
          Scalar* dst = image + (c * g.in_height + y) * g.in_width;
          for (Index kx = 0; kx < k; ++kx) {
            const Index x = x0 + kx;
            if (x >= 0 && x < g.in_width) dst[x] += in[kx];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Patch matrix of one C x H x W image: raster-ordered rows of flattened receptive fields.
template <typename Scalar>
Mat<Scalar> extract_patches(const Tensor<Scalar>& input, Index kernel, Index stride) {
  if (input.rank() != 3) throw GeometryError("extract_patches expects a CxHxW tensor");
  ConvGeometry g{input.shape()[0], input.shape()[1], input.shape()[2], kernel, stride, 0, 1};
  g.validate();
  Mat<Scalar> rows(g.patch_count(), g.patch_dim());
  detail::patches_of_image<Scalar>(input.data().data(), g, rows.data());
  return rows;
}

// Batched patch extraction: input is batch x (C*H*W); output pools all patches,
// image b occupying rows [b*p, (b+1)*p).
template <typename Derived>
auto extract_patches(const Eigen::MatrixBase<Derived>& input, const ConvGeometry& g) {
  using Scalar = typename Derived::Scalar;
  g.validate();
  if (input.cols() != g.in_features()) {
    throw ShapeError("extract_patches: input " + shape_string(input) + " expects " +
                     std::to_string(g.in_features()) + " features");
  }
  const Index p = g.patch_count();
  const Mat<Scalar>& in = input.derived().eval();
  Mat<Scalar> rows(in.rows() * p, g.patch_dim());
  for (Index b = 0; b < in.rows(); ++b) {
    detail::patches_of_image<Scalar>(in.row(b).data(), g, rows.data() + b * p * g.patch_dim());
  }
  return rows;
}

// Adjoint of extract_patches: accumulates patch gradients back onto the image grid.
template <typename Derived>
auto fold_patches(const Eigen::MatrixBase<Derived>& patch_grad, const ConvGeometry& g) {
  using Scalar = typename Derived::Scalar;
  const Index p = g.patch_count();
  if (patch_grad.cols() != g.patch_dim() || patch_grad.rows() % p != 0) {
    throw ShapeError("fold_patches: " + shape_string(patch_grad) + " does not match geometry");
  }
  const Index batch = patch_grad.rows() / p;
  const Mat<Scalar>& grad = patch_grad.derived().eval();
  Mat<Scalar> out = Mat<Scalar>::Zero(batch, g.in_features());
  for (Index b = 0; b < batch; ++b) {
    detail::fold_image<Scalar>(grad.data() + b * p * g.patch_dim(), g, out.row(b).data());
  }
  return out;
}

// (batch*p) x C' patch-major rows <-> batch x (C'*p) channel-major feature maps.
template <typename Derived>
auto patches_to_maps(const Eigen::MatrixBase<Derived>& rows, Index batch, Index p) {
  using Scalar = typename Derived::Scalar;
  const Index channels = rows.cols();
  Mat<Scalar> out(batch, channels * p);
  for (Index b = 0; b < batch; ++b) {
    Eigen::Map<Mat<Scalar>> maps(out.row(b).data(), channels, p);
    maps = rows.middleRows(b * p, p).transpose();
  }
  return out;
}

template <typename Scalar>
Mat<Scalar> maps_to_patches(const Mat<Scalar>& maps, Index channels, Index p) {
  const Index batch = maps.rows();
  Mat<Scalar> out(batch * p, channels);
  for (Index b = 0; b < batch; ++b) {
    Eigen::Map<const Mat<Scalar>> m(maps.row(b).data(), channels, p);
    out.middleRows(b * p, p) = m.transpose();
  }
  return out;
}

}  // namespace dsac
