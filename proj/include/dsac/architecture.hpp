#pragma once

#include "dsac/network.hpp"
#include "dsac/tensor.hpp"

namespace dsac {

// Layer geometry of the actor and critic networks. Defaults are the
// three-conv + two-dense Atari network; widths may be shrunk for desk-scale runs.
struct ArchitectureOptions {
  std::vector<Index> conv_channels{32, 64, 64};
  std::vector<Index> conv_kernels{8, 4, 3};
  std::vector<Index> conv_strides{4, 2, 1};
  Index hidden_units = 512;
  // Vector observations replace the conv stack with dense layers of these widths.
  std::vector<Index> vector_hidden{256, 256};
  double slope = 0.01;
};

// Layer list for observations of `obs_shape` (CxHxW image or flat vector).
template <typename Scalar>
std::vector<LayerParams<Scalar>> network_layers(const Shape& obs_shape, Index action_count,
                                                const ArchitectureOptions& arch) {
  if (action_count < 1) throw std::invalid_argument("action count must be positive");
  std::vector<LayerParams<Scalar>> layers;
  Index width = 0;
  if (is_image_shape(obs_shape)) {
    if (arch.conv_channels.size() != arch.conv_kernels.size() ||
        arch.conv_channels.size() != arch.conv_strides.size()) {
      throw GeometryError("conv channels, kernels and strides must have equal length");
    }
    Index c = obs_shape[0], h = obs_shape[1], w = obs_shape[2];
    for (std::size_t i = 0; i < arch.conv_channels.size(); ++i) {
      ConvGeometry g{c, h, w, arch.conv_kernels[i], arch.conv_strides[i], 0, arch.conv_channels[i]};
      g.validate();
      layers.push_back(LayerParams<Scalar>::conv(g));
      c = g.out_channels;
      h = g.out_height();
      w = g.out_width();
    }
    width = c * h * w;
  } else if (obs_shape.size() == 1) {
    width = obs_shape[0];
    for (Index units : arch.vector_hidden) {
      layers.push_back(LayerParams<Scalar>::dense(width, units));
      width = units;
    }
  } else {
    throw GeometryError("observation shape " + to_string(obs_shape) +
                        " is neither CxHxW nor a flat vector");
  }
  layers.push_back(LayerParams<Scalar>::dense(width, arch.hidden_units));
  layers.push_back(LayerParams<Scalar>::dense(arch.hidden_units, action_count));
  return layers;
}

template <typename Scalar, typename URBG>
Network<Scalar> build_network(const Shape& obs_shape, Index action_count, bool decorrelate,
                              const ArchitectureOptions& arch, URBG& rng,
                              Scalar eta = Scalar(0), Scalar downsample_b = Scalar(9)) {
  auto layers = network_layers<Scalar>(obs_shape, action_count, arch);
  const auto slope = static_cast<Scalar>(arch.slope);
  for (auto& l : layers) kaiming_uniform(l, slope, rng);
  Network<Scalar> net(std::move(layers), slope);
  if (decorrelate) net.attach_decorrelation(eta, downsample_b);
  return net;
}

}  // namespace dsac
