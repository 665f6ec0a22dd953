// Temperature softmax and cross-entropy.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "srkd/common.hpp"
#include "srkd/tensor.hpp"

namespace srkd {

// Probability floor inside log(): keeps cross-entropy finite on one-hot-like
// inputs. Gradients use the exact softmax/CE formulas; the floor only guards
// the reported value.
inline constexpr double kProbFloor = 1e-12;

// out[i] = exp((in[i] - max) / tau) / sum, stabilized by max subtraction.
inline void softmax_row(std::span<const double> in, std::span<double> out, double tau) {
  double mx = in[0];
  for (double v : in) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp((in[i] - mx) / tau);
    sum += out[i];
  }
  for (std::size_t i = 0; i < in.size(); ++i) out[i] /= sum;
}

// Row-wise softened probabilities softmax(z / tau). Accepts [C] or [B, C].
inline Tensor softmax_with_temperature(const Tensor& logits, double tau) {
  if (!(tau > 0.0)) {
    throw InvalidParameterError("softmax temperature must be positive, got " + fmt_g17(tau));
  }
  if (logits.rank() != 1 && logits.rank() != 2) {
    throw ShapeError("softmax expects [C] or [B, C] logits, got " + shape_str(logits.shape));
  }
  Tensor out(logits.shape);
  const std::size_t rows = logits.rank() == 2 ? logits.dim(0) : 1;
  const std::size_t cols = logits.numel() / rows;
  if (cols == 0) throw ShapeError("softmax needs at least one class");
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_row({logits.data.data() + r * cols, cols}, {out.data.data() + r * cols, cols}, tau);
  }
  return out;
}

inline double cross_entropy_row(std::span<const double> target, std::span<const double> predicted) {
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    acc -= target[i] * std::log(std::max(predicted[i], kProbFloor));
  }
  return acc;
}

// -sum target*log(predicted), averaged over rows. Both tensors are rows of
// probability vectors ([C] or [B, C]); target may be one-hot or soft.
inline double cross_entropy(const Tensor& target, const Tensor& predicted) {
  if (!same_shape(target, predicted)) {
    throw ShapeError("cross_entropy shape mismatch: target " + shape_str(target.shape) +
                     " vs predicted " + shape_str(predicted.shape));
  }
  if (target.rank() != 1 && target.rank() != 2) {
    throw ShapeError("cross_entropy expects [C] or [B, C], got " + shape_str(target.shape));
  }
  const std::size_t rows = target.rank() == 2 ? target.dim(0) : 1;
  const std::size_t cols = target.numel() / rows;
  double acc = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    acc += cross_entropy_row({target.data.data() + r * cols, cols},
                             {predicted.data.data() + r * cols, cols});
  }
  return acc / static_cast<double>(rows);
}

inline int argmax_row(std::span<const double> row) {
  int best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = static_cast<int>(i);  // lowest index wins ties
  }
  return best;
}

}  // namespace srkd
