// Dense row-major tensor of 64-bit floats.
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "srkd/common.hpp"

namespace srkd {

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;  // row-major, length == product(shape)

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(checked_numel(shape), 0.0);
  }

  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (checked_numel(shape) != data.size()) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    }
  }

  static std::size_t checked_numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t e : s) {
      if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(s));
      n *= e;
    }
    return n;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // Slice along the leading axis (e.g. one row of a [B, C] tensor).
  std::span<double> row(std::size_t r) {
    const std::size_t stride = numel() / shape.at(0);
    return {data.data() + r * stride, stride};
  }
  std::span<const double> row(std::size_t r) const {
    const std::size_t stride = numel() / shape.at(0);
    return {data.data() + r * stride, stride};
  }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

}  // namespace srkd
