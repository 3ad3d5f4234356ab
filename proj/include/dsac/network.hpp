#pragma once

#include "dsac/decorrelation.hpp"
#include "dsac/layer.hpp"

#include <optional>
#include <vector>

namespace dsac {

// Inputs each layer saw during one forward pass. Rows are the raw (pre-R) rows
// the layer's weight matrix is applied to: patches for convolutions, the
// activation vector for dense layers.
template <typename Scalar>
struct LayerCache {
  Mat<Scalar> rows;
  Mat<Scalar> pre_activation;  // batch x out_features
};

template <typename Scalar>
struct ForwardTrace {
  std::vector<LayerCache<Scalar>> layers;
  Mat<Scalar> output;
  Index batch = 0;

  bool valid() const { return !layers.empty(); }
};

template <typename Scalar>
struct Gradients {
  std::vector<Mat<Scalar>> weights;
  std::vector<Vec<Scalar>> bias;
  Mat<Scalar> input;  // empty unless requested

  Vec<Scalar> flat() const {
    Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + bias[l].size();
    Vec<Scalar> out(n);
    Index at = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.segment(at, weights[l].size()) = weights[l].template reshaped<Eigen::RowMajor>();
      at += weights[l].size();
      out.segment(at, bias[l].size()) = bias[l];
      at += bias[l].size();
    }
    return out;
  }
};

// Feed-forward stack of dense / convolutional layers, each followed by leaky
// ReLU, each optionally preceded by a decorrelating transform. Decorrelated
// layers keep the fused product W R so forward passes never materialize R z.
template <typename Scalar>
class Network {
 public:
  Network() = default;

  Network(std::vector<LayerParams<Scalar>> layers, Scalar slope) : slope_(slope) {
    if (!(slope > Scalar(0) && slope < Scalar(1))) {
      throw std::invalid_argument("leaky ReLU slope must lie in (0, 1)");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (l > 0 && layers[l].in_features() != layers_.back().params.out_features()) {
        throw ShapeError("layer " + std::to_string(l) + " expects " +
                         std::to_string(layers[l].in_features()) + " inputs, previous emits " +
                         std::to_string(layers_.back().params.out_features()));
      }
      layers_.push_back(Slot{std::move(layers[l]), std::nullopt, {}});
    }
  }

  Index layer_count() const { return static_cast<Index>(layers_.size()); }
  Scalar slope() const { return slope_; }
  Index in_features() const { return layers_.front().params.in_features(); }
  Index out_features() const { return layers_.back().params.out_features(); }

  const LayerParams<Scalar>& layer(Index l) const { return layers_[std::size_t(l)].params; }

  bool decorrelated() const {
    return std::any_of(layers_.begin(), layers_.end(),
                       [](const Slot& s) { return s.decorrelation.has_value(); });
  }

  Index decorrelation_count() const {
    return std::count_if(layers_.begin(), layers_.end(),
                         [](const Slot& s) { return s.decorrelation.has_value(); });
  }

  // Attach an identity-initialized transform in front of every layer.
  void attach_decorrelation(Scalar eta, Scalar downsample_b) {
    for (auto& s : layers_) {
      const auto kind = s.params.kind == LayerKind::Conv ? DecorrelationKind::Patchwise
                                                         : DecorrelationKind::Dense;
      s.decorrelation =
          DecorrelationState<Scalar>::identity(s.params.row_dim(), eta, kind, downsample_b);
      refresh(s);
    }
  }

  const std::optional<DecorrelationState<Scalar>>& decorrelation(Index l) const {
    return layers_[std::size_t(l)].decorrelation;
  }

  void set_decorrelation(Index l, DecorrelationState<Scalar> state) {
    auto& s = layers_[std::size_t(l)];
    if (state.dim() != s.params.row_dim()) {
      throw ShapeError("decorrelation dimension " + std::to_string(state.dim()) +
                       " does not match layer input " + std::to_string(s.params.row_dim()));
    }
    s.decorrelation = std::move(state);
    refresh(s);
  }

  void update_decorrelation(Index l, const CorrelationEstimate<Scalar>& c) {
    auto& s = layers_[std::size_t(l)];
    if (!s.decorrelation) throw StateError("layer has no decorrelating transform");
    dsac::update_decorrelation(*s.decorrelation, c);
    refresh(s);
  }

  // Weight matrix actually applied to the raw rows (W R or W).
  const Mat<Scalar>& effective_weights(Index l) const {
    const auto& s = layers_[std::size_t(l)];
    return s.decorrelation ? s.fused : s.params.weights;
  }

  // Rows the first layer multiplies: patches for a convolution, the input itself otherwise.
  // Networks sharing a first-layer geometry can share these across forward passes.
  Mat<Scalar> input_rows(const Mat<Scalar>& input) const {
    if (layers_.empty()) throw StateError("forward on an empty network");
    if (input.cols() != in_features()) {
      throw ShapeError("network input " + shape_string(input) + " expects " +
                       std::to_string(in_features()) + " features");
    }
    const auto& p = layers_.front().params;
    return p.kind == LayerKind::Conv ? Mat<Scalar>(extract_patches(input, p.geometry)) : input;
  }

  ForwardTrace<Scalar> forward(const Mat<Scalar>& input) const {
    return forward_rows(input_rows(input), input.rows());
  }

  // Forward pass from precomputed first-layer rows (see input_rows) for `batch` inputs.
  ForwardTrace<Scalar> forward_rows(Mat<Scalar> rows, Index batch) const {
    if (layers_.empty()) throw StateError("forward on an empty network");
    const auto& first = layers_.front().params;
    const Index expected = first.kind == LayerKind::Conv ? batch * first.geometry.patch_count() : batch;
    if (rows.rows() != expected || rows.cols() != first.row_dim()) {
      throw ShapeError("first-layer rows " + shape_string(rows) + " do not match a batch of " +
                       std::to_string(batch));
    }
    ForwardTrace<Scalar> trace;
    trace.batch = batch;
    trace.layers.reserve(layers_.size());
    Mat<Scalar> act;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& p = layers_[l].params;
      LayerCache<Scalar> cache;
      if (l == 0) {
        cache.rows = std::move(rows);
      } else if (p.kind == LayerKind::Conv) {
        cache.rows = extract_patches(act, p.geometry);
      } else {
        cache.rows = std::move(act);
      }
      cache.pre_activation = affine_rows(cache.rows, effective_weights(Index(l)), p.bias);
      if (p.kind == LayerKind::Conv) {
        cache.pre_activation = patches_to_maps(cache.pre_activation, batch, p.geometry.patch_count());
      }
      act = leaky_relu(cache.pre_activation, slope_);
      trace.layers.push_back(std::move(cache));
    }
    trace.output = std::move(act);
    return trace;
  }

  Mat<Scalar> predict(const Mat<Scalar>& input) const { return forward(input).output; }

  // Gradients of sum(grad_output .* output) w.r.t. W, b and optionally the input.
  // R is a constant here: gradients flow through it but never into it.
  Gradients<Scalar> backward(const ForwardTrace<Scalar>& trace, const Mat<Scalar>& grad_output,
                             bool want_input_grad = true) const {
    if (!trace.valid() || trace.layers.size() != layers_.size()) {
      throw StateError("backward called without a matching forward pass");
    }
    if (grad_output.rows() != trace.output.rows() || grad_output.cols() != trace.output.cols()) {
      throw ShapeError("upstream gradient " + shape_string(grad_output) + " vs output " +
                       shape_string(trace.output));
    }
    Gradients<Scalar> g;
    g.weights.resize(layers_.size());
    g.bias.resize(layers_.size());
    Mat<Scalar> upstream = grad_output;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const auto& slot = layers_[i];
      const auto& p = slot.params;
      const auto& cache = trace.layers[i];
      Mat<Scalar> dpre = leaky_relu_backward(cache.pre_activation, upstream, slope_);
      if (p.kind == LayerKind::Conv) {
        dpre = maps_to_patches(dpre, p.geometry.out_channels, p.geometry.patch_count());
      }
      Mat<Scalar> dw(p.weights.rows(), p.weights.cols());
      dw.noalias() = dpre.transpose() * cache.rows;
      if (slot.decorrelation) dw = dw * slot.decorrelation->R.transpose();
      g.weights[i] = std::move(dw);
      g.bias[i] = dpre.colwise().sum().transpose();
      if (i == 0 && !want_input_grad) break;
      Mat<Scalar> drows(dpre.rows(), p.weights.cols());
      drows.noalias() = dpre * effective_weights(Index(i));
      upstream = p.kind == LayerKind::Conv ? fold_patches(drows, p.geometry) : std::move(drows);
    }
    if (want_input_grad) g.input = std::move(upstream);
    return g;
  }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& s : layers_) n += s.params.parameter_count();
    return n;
  }

  // Layer-major [W_0 (row-major), b_0, W_1, b_1, ...]; decorrelation matrices excluded.
  Vec<Scalar> flat_parameters() const {
    Vec<Scalar> out(parameter_count());
    Index at = 0;
    for (const auto& s : layers_) {
      out.segment(at, s.params.weights.size()) = s.params.weights.template reshaped<Eigen::RowMajor>();
      at += s.params.weights.size();
      out.segment(at, s.params.bias.size()) = s.params.bias;
      at += s.params.bias.size();
    }
    return out;
  }

  void set_flat_parameters(const Vec<Scalar>& flat) {
    if (flat.size() != parameter_count()) {
      throw ShapeError("expected " + std::to_string(parameter_count()) + " parameters, got " +
                       std::to_string(flat.size()));
    }
    Index at = 0;
    for (auto& s : layers_) {
      const Index nw = s.params.weights.size();
      s.params.weights.template reshaped<Eigen::RowMajor>() = flat.segment(at, nw);
      at += nw;
      s.params.bias = flat.segment(at, s.params.bias.size());
      at += s.params.bias.size();
      refresh(s);
    }
  }

  template <typename Other>
  Network<Other> cast() const {
    std::vector<LayerParams<Other>> params;
    for (const auto& s : layers_) params.push_back(s.params.template cast<Other>());
    Network<Other> out(std::move(params), static_cast<Other>(slope_));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      if (const auto& d = layers_[l].decorrelation) {
        out.set_decorrelation(Index(l), DecorrelationState<Other>{d->R.template cast<Other>(),
                                                                  static_cast<Other>(d->eta), d->kind,
                                                                  static_cast<Other>(d->downsample_b)});
      }
    }
    return out;
  }

 private:
  struct Slot {
    LayerParams<Scalar> params;
    std::optional<DecorrelationState<Scalar>> decorrelation;
    Mat<Scalar> fused;
  };

  static void refresh(Slot& s) {
    if (s.decorrelation) s.fused = fuse(s.params.weights, *s.decorrelation);
  }

  std::vector<Slot> layers_;
  Scalar slope_ = Scalar(0.01);
};

using NetworkF = Network<float>;
using NetworkD = Network<double>;

// Per-layer decorrelation losses of one network for one batch, and whether R moved.
struct DecorrelationReport {
  std::vector<double> layer_losses;
  double network_loss = 0.0;
};

enum class PatchCountMode { PerImage, PerBatch };

// Estimates C for every layer from the rows cached in `trace` (x = R z, or z
// itself for a layer without R), records d_l, and applies R <- R - eta C R
// where a transform is attached. Convolutional rows are downsampled per
// downsample_count; dense layers use the full batch.
template <typename Scalar, typename URBG>
DecorrelationReport decorrelation_step(Network<Scalar>& net, const ForwardTrace<Scalar>& trace,
                                       double downsample_b, PatchCountMode mode, URBG& rng,
                                       bool apply_update = true) {
  if (!trace.valid() || Index(trace.layers.size()) != net.layer_count()) {
    throw StateError("decorrelation step needs a forward trace of this network");
  }
  DecorrelationReport report;
  for (Index l = 0; l < net.layer_count(); ++l) {
    const auto& params = net.layer(l);
    const auto& rows = trace.layers[std::size_t(l)].rows;
    Mat<Scalar> sample;
    if (params.kind == LayerKind::Conv) {
      const Index p = params.geometry.patch_count();
      const Index p_eff = mode == PatchCountMode::PerImage ? p : p * trace.batch;
      sample = sample_rows(rows, downsample_count(downsample_b, params.row_dim(), p_eff), rng);
    } else {
      sample = rows;
    }
    const auto& state = net.decorrelation(l);
    const Mat<Scalar> x = state ? decorrelate(*state, sample) : sample;
    const auto c = estimate_correlation(x);
    report.layer_losses.push_back(decorrelation_loss(c));
    if (state && apply_update) net.update_decorrelation(l, c);
  }
  report.network_loss = network_decorrelation_loss(report.layer_losses);
  return report;
}

}  // namespace dsac
