// Layer specs and per-layer shape propagation for sequential models.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "srkd/common.hpp"
#include "srkd/tensor.hpp"

namespace srkd {

enum class LayerKind { dense, conv2d, maxpool2x2, relu, flatten };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2x2: return "maxpool2x2";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

inline LayerKind layer_kind_from_name(const std::string& name) {
  if (name == "dense") return LayerKind::dense;
  if (name == "conv2d") return LayerKind::conv2d;
  if (name == "maxpool2x2") return LayerKind::maxpool2x2;
  if (name == "relu") return LayerKind::relu;
  if (name == "flatten") return LayerKind::flatten;
  throw ConfigError("unknown layer kind '" + name + "'");
}

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  // dense
  std::size_t in = 0, out = 0;
  // conv2d
  std::size_t in_channels = 0, out_channels = 0, kernel = 0, stride = 1, padding = 0;

  static LayerSpec dense(std::size_t in, std::size_t out) {
    if (in == 0 || out == 0) throw InvalidParameterError("dense dims must be positive");
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.in = in;
    s.out = out;
    return s;
  }

  static LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                          std::size_t stride = 1, std::size_t padding = 0) {
    if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0) {
      throw InvalidParameterError("conv2d channels, kernel and stride must be positive");
    }
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
  }

  static LayerSpec maxpool2x2() {
    LayerSpec s;
    s.kind = LayerKind::maxpool2x2;
    return s;
  }

  static LayerSpec relu() {
    LayerSpec s;
    s.kind = LayerKind::relu;
    return s;
  }

  static LayerSpec flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
  }

  bool has_params() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }
};

// Per-sample output shape of `spec` applied to `in_shape`. Throws ShapeError
// naming the offending layer on any incompatibility.
inline std::vector<std::size_t> layer_output_shape(const LayerSpec& spec,
                                                   const std::vector<std::size_t>& in_shape,
                                                   std::size_t layer_index) {
  const std::string where =
      "layer " + std::to_string(layer_index) + " (" + layer_kind_name(spec.kind) + ")";
  switch (spec.kind) {
    case LayerKind::dense: {
      if (in_shape.size() != 1 || in_shape[0] != spec.in) {
        throw ShapeError(where + ": expected input [" + std::to_string(spec.in) + "], got " +
                         shape_str(in_shape));
      }
      return {spec.out};
    }
    case LayerKind::conv2d: {
      if (in_shape.size() != 3 || in_shape[0] != spec.in_channels) {
        throw ShapeError(where + ": expected input [" + std::to_string(spec.in_channels) +
                         ", H, W], got " + shape_str(in_shape));
      }
      const std::size_t h = in_shape[1], w = in_shape[2];
      if (h + 2 * spec.padding < spec.kernel || w + 2 * spec.padding < spec.kernel) {
        throw ShapeError(where + ": kernel " + std::to_string(spec.kernel) +
                         " larger than padded input " + shape_str(in_shape));
      }
      const std::size_t oh = (h + 2 * spec.padding - spec.kernel) / spec.stride + 1;
      const std::size_t ow = (w + 2 * spec.padding - spec.kernel) / spec.stride + 1;
      return {spec.out_channels, oh, ow};
    }
    case LayerKind::maxpool2x2: {
      if (in_shape.size() != 3 || in_shape[1] < 2 || in_shape[2] < 2) {
        throw ShapeError(where + ": expected input [C, H>=2, W>=2], got " + shape_str(in_shape));
      }
      // floor semantics: a trailing odd row/column is dropped
      return {in_shape[0], in_shape[1] / 2, in_shape[2] / 2};
    }
    case LayerKind::relu:
      return in_shape;
    case LayerKind::flatten: {
      std::size_t n = 1;
      for (std::size_t e : in_shape) n *= e;
      return {n};
    }
  }
  throw ShapeError(where + ": unhandled layer kind");
}

}  // namespace srkd
