// Sequential model: build-time shape checking, seeded init, batched
// forward/backward over the fixed layer set.
//
// Parallel execution contract: work is split into fixed-size sample chunks
// (kSampleChunk) and per-chunk gradient buffers are reduced in chunk order,
// so results are bit-identical for every worker count.
#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <thread>
#include <vector>

#include "srkd/common.hpp"
#include "srkd/layers.hpp"
#include "srkd/tensor.hpp"

namespace srkd {

inline constexpr std::size_t kSampleChunk = 16;

class SequentialModel {
 public:
  SequentialModel() = default;

  SequentialModel(std::vector<std::size_t> input_shape, std::vector<LayerSpec> layers)
      : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
    if (layers_.empty()) throw ShapeError("model needs at least one layer");
    std::vector<std::size_t> shape = input_shape_;
    Tensor::checked_numel(shape);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      shape = layer_output_shape(layers_[i], shape, i);
      out_shapes_.push_back(shape);
      param_offset_.push_back(params_.size());
      const LayerSpec& l = layers_[i];
      if (l.kind == LayerKind::dense) {
        params_.emplace_back(std::vector<std::size_t>{l.out, l.in});
        params_.emplace_back(std::vector<std::size_t>{l.out});
      } else if (l.kind == LayerKind::conv2d) {
        params_.emplace_back(
            std::vector<std::size_t>{l.out_channels, l.in_channels, l.kernel, l.kernel});
        params_.emplace_back(std::vector<std::size_t>{l.out_channels});
      }
    }
    if (shape.size() != 1) {
      throw ShapeError("model output must be a class vector, got " + shape_str(shape));
    }
  }

  // Uniform fan-in init: weights and biases in ±sqrt(1/fan_in), drawn in
  // layer order (weights then bias, row-major).
  void init_parameters(Rng& rng) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const LayerSpec& l = layers_[i];
      if (!l.has_params()) continue;
      const std::size_t fan_in =
          l.kind == LayerKind::dense ? l.in : l.in_channels * l.kernel * l.kernel;
      const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
      for (double& w : params_[param_offset_[i]].data) w = rng.uniform(-bound, bound);
      for (double& b : params_[param_offset_[i] + 1].data) b = rng.uniform(-bound, bound);
    }
  }

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<std::size_t>& input_shape() const { return input_shape_; }
  const std::vector<std::vector<std::size_t>>& output_shapes() const { return out_shapes_; }

  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }

  // Index of layer i's weight tensor in parameters(); bias is at +1.
  std::size_t param_index(std::size_t layer) const { return param_offset_[layer]; }

  std::size_t num_classes() const { return out_shapes_.back()[0]; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Tensor& p : params_) n += p.numel();
    return n;
  }

 private:
  std::vector<std::size_t> input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<std::vector<std::size_t>> out_shapes_;
  std::vector<Tensor> params_;
  std::vector<std::size_t> param_offset_;
};

// Captured activations of one forward pass; required by backward().
struct ForwardTrace {
  std::vector<Tensor> acts;  // acts[0] = input batch, acts[i + 1] = layer i output
  std::vector<std::vector<std::uint32_t>> pool_idx;  // maxpool argmax (per-sample flat index)
  std::size_t batch_size = 0;
  bool valid = false;
};

namespace detail {

// Runs f(chunk_begin, chunk_end, chunk_index) over fixed chunks of [0, n).
template <class F>
void parallel_chunks(std::size_t n, int threads, F&& f) {
  const std::size_t nchunks = (n + kSampleChunk - 1) / kSampleChunk;
  auto run_chunk = [&](std::size_t c) {
    const std::size_t b = c * kSampleChunk;
    f(b, std::min(b + kSampleChunk, n), c);
  };
  if (threads <= 1 || nchunks <= 1) {
    for (std::size_t c = 0; c < nchunks; ++c) run_chunk(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  const std::size_t nworkers = std::min<std::size_t>(static_cast<std::size_t>(threads), nchunks);
  std::vector<std::thread> pool;
  pool.reserve(nworkers);
  for (std::size_t w = 0; w < nworkers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t c = next.fetch_add(1);
        if (c >= nchunks) return;
        run_chunk(c);
      }
    });
  }
  for (auto& t : pool) t.join();
}

inline std::size_t numel_of(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

// Per-sample forward kernel for layer `li`; x and y are that sample's slices.
inline void layer_forward(const SequentialModel& m, std::size_t li, const double* x, double* y,
                          std::uint32_t* pool_out) {
  const LayerSpec& l = m.layers()[li];
  const std::vector<std::size_t>& in_shape =
      li == 0 ? m.input_shape() : m.output_shapes()[li - 1];
  switch (l.kind) {
    case LayerKind::dense: {
      const double* W = m.parameters()[m.param_index(li)].data.data();
      const double* b = m.parameters()[m.param_index(li) + 1].data.data();
      for (std::size_t o = 0; o < l.out; ++o) {
        double acc = b[o];
        const double* wrow = W + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) acc += wrow[i] * x[i];
        y[o] = acc;
      }
      break;
    }
    case LayerKind::conv2d: {
      const double* W = m.parameters()[m.param_index(li)].data.data();
      const double* b = m.parameters()[m.param_index(li) + 1].data.data();
      const std::size_t h = in_shape[1], w = in_shape[2];
      const auto& os = m.output_shapes()[li];
      const std::size_t oh = os[1], ow = os[2];
      const std::size_t k = l.kernel;
      for (std::size_t oc = 0; oc < l.out_channels; ++oc) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            double acc = b[oc];
            for (std::size_t ic = 0; ic < l.in_channels; ++ic) {
              const double* xc = x + ic * h * w;
              const double* wc = W + ((oc * l.in_channels + ic) * k) * k;
              for (std::size_t ky = 0; ky < k; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) -
                                          static_cast<std::ptrdiff_t>(l.padding);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                  const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) -
                                            static_cast<std::ptrdiff_t>(l.padding);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                  acc += wc[ky * k + kx] * xc[iy * w + ix];
                }
              }
            }
            y[(oc * oh + oy) * ow + ox] = acc;
          }
        }
      }
      break;
    }
    case LayerKind::maxpool2x2: {
      const std::size_t c = in_shape[0], h = in_shape[1], w = in_shape[2];
      const std::size_t oh = h / 2, ow = w / 2;
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            std::size_t best = (ch * h + 2 * oy) * w + 2 * ox;
            double bv = x[best];
            const std::size_t cands[3] = {best + 1, best + w, best + w + 1};
            for (std::size_t cand : cands) {
              if (x[cand] > bv) {  // first max wins on ties
                bv = x[cand];
                best = cand;
              }
            }
            y[(ch * oh + oy) * ow + ox] = bv;
            pool_out[(ch * oh + oy) * ow + ox] = static_cast<std::uint32_t>(best);
          }
        }
      }
      break;
    }
    case LayerKind::relu: {
      const std::size_t n = numel_of(in_shape);
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    }
    case LayerKind::flatten: {
      const std::size_t n = numel_of(in_shape);
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i];
      break;
    }
  }
}

// Per-sample backward kernel: consumes dy, produces dx and accumulates
// parameter gradients into `grads`.
inline void layer_backward(const SequentialModel& m, std::size_t li, const double* x,
                           const double* dy, double* dx, const std::uint32_t* pool_in,
                           std::vector<Tensor>& grads) {
  const LayerSpec& l = m.layers()[li];
  const std::vector<std::size_t>& in_shape =
      li == 0 ? m.input_shape() : m.output_shapes()[li - 1];
  const std::size_t in_n = numel_of(in_shape);
  switch (l.kind) {
    case LayerKind::dense: {
      const double* W = m.parameters()[m.param_index(li)].data.data();
      double* dW = grads[m.param_index(li)].data.data();
      double* db = grads[m.param_index(li) + 1].data.data();
      for (std::size_t i = 0; i < l.in; ++i) dx[i] = 0.0;
      for (std::size_t o = 0; o < l.out; ++o) {
        const double g = dy[o];
        db[o] += g;
        double* dwrow = dW + o * l.in;
        const double* wrow = W + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) {
          dwrow[i] += g * x[i];
          dx[i] += wrow[i] * g;
        }
      }
      break;
    }
    case LayerKind::conv2d: {
      const double* W = m.parameters()[m.param_index(li)].data.data();
      double* dW = grads[m.param_index(li)].data.data();
      double* db = grads[m.param_index(li) + 1].data.data();
      const std::size_t h = in_shape[1], w = in_shape[2];
      const auto& os = m.output_shapes()[li];
      const std::size_t oh = os[1], ow = os[2];
      const std::size_t k = l.kernel;
      for (std::size_t i = 0; i < in_n; ++i) dx[i] = 0.0;
      for (std::size_t oc = 0; oc < l.out_channels; ++oc) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const double g = dy[(oc * oh + oy) * ow + ox];
            db[oc] += g;
            for (std::size_t ic = 0; ic < l.in_channels; ++ic) {
              const double* xc = x + ic * h * w;
              double* dxc = dx + ic * h * w;
              const std::size_t base = ((oc * l.in_channels + ic) * k) * k;
              for (std::size_t ky = 0; ky < k; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) -
                                          static_cast<std::ptrdiff_t>(l.padding);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                  const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) -
                                            static_cast<std::ptrdiff_t>(l.padding);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                  dW[base + ky * k + kx] += g * xc[iy * w + ix];
                  dxc[iy * w + ix] += W[base + ky * k + kx] * g;
                }
              }
            }
          }
        }
      }
      break;
    }
    case LayerKind::maxpool2x2: {
      const auto& os = m.output_shapes()[li];
      const std::size_t out_n = numel_of(os);
      for (std::size_t i = 0; i < in_n; ++i) dx[i] = 0.0;
      for (std::size_t i = 0; i < out_n; ++i) dx[pool_in[i]] += dy[i];
      break;
    }
    case LayerKind::relu: {
      for (std::size_t i = 0; i < in_n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
      break;
    }
    case LayerKind::flatten: {
      for (std::size_t i = 0; i < in_n; ++i) dx[i] = dy[i];
      break;
    }
  }
}

}  // namespace detail

// Batched forward pass. `batch` has shape [B] + input_shape. Returns the
// pre-softmax logits [B, C]; there is no output softmax. Pass a trace to
// enable a subsequent backward().
inline Tensor forward(const SequentialModel& m, const Tensor& batch, ForwardTrace* trace = nullptr,
                      int threads = 1) {
  const auto& in_shape = m.input_shape();
  bool ok = batch.rank() == in_shape.size() + 1 && batch.dim(0) >= 1;
  for (std::size_t i = 0; ok && i < in_shape.size(); ++i) {
    ok = batch.dim(i + 1) == in_shape[i];
  }
  if (!ok) {
    throw ShapeError("layer 0 (" + std::string(layer_kind_name(m.layers()[0].kind)) +
                     "): batch shape " + shape_str(batch.shape) + " does not match model input " +
                     shape_str(in_shape));
  }
  const std::size_t B = batch.dim(0);
  const std::size_t L = m.layers().size();

  std::vector<Tensor> acts(L + 1);
  acts[0] = batch;
  std::vector<std::vector<std::uint32_t>> pool_idx(L);
  for (std::size_t li = 0; li < L; ++li) {
    std::vector<std::size_t> s = m.output_shapes()[li];
    s.insert(s.begin(), B);
    acts[li + 1] = Tensor(std::move(s));
    if (m.layers()[li].kind == LayerKind::maxpool2x2) {
      pool_idx[li].resize(B * detail::numel_of(m.output_shapes()[li]));
    }
  }

  for (std::size_t li = 0; li < L; ++li) {
    const std::size_t in_n = acts[li].numel() / B;
    const std::size_t out_n = acts[li + 1].numel() / B;
    detail::parallel_chunks(B, threads, [&](std::size_t s0, std::size_t s1, std::size_t) {
      for (std::size_t s = s0; s < s1; ++s) {
        detail::layer_forward(m, li, acts[li].data.data() + s * in_n,
                              acts[li + 1].data.data() + s * out_n,
                              pool_idx[li].empty() ? nullptr : pool_idx[li].data() + s * out_n);
      }
    });
  }

  Tensor logits = acts.back();
  if (trace) {
    trace->acts = std::move(acts);
    trace->pool_idx = std::move(pool_idx);
    trace->batch_size = B;
    trace->valid = true;
  }
  return logits;
}

// Backward pass for the forward() captured in `trace`. `dlogits` is dL/dz,
// shape [B, C]. Returns dL/dθ, shapes mirroring parameters().
inline std::vector<Tensor> backward(const SequentialModel& m, const ForwardTrace& trace,
                                    const Tensor& dlogits, int threads = 1) {
  if (!trace.valid) {
    throw StateError("backward requires a forward trace for this batch; run forward first");
  }
  const std::size_t B = trace.batch_size;
  if (dlogits.rank() != 2 || dlogits.dim(0) != B || dlogits.dim(1) != m.num_classes()) {
    throw ShapeError("loss gradient shape " + shape_str(dlogits.shape) + " does not match logits [" +
                     std::to_string(B) + ", " + std::to_string(m.num_classes()) + "]");
  }
  const std::size_t L = m.layers().size();
  const std::size_t nchunks = (B + kSampleChunk - 1) / kSampleChunk;

  auto zero_grads = [&] {
    std::vector<Tensor> g;
    g.reserve(m.parameters().size());
    for (const Tensor& p : m.parameters()) g.emplace_back(p.shape);
    return g;
  };
  std::vector<std::vector<Tensor>> chunk_grads(nchunks);

  detail::parallel_chunks(B, threads, [&](std::size_t s0, std::size_t s1, std::size_t c) {
    chunk_grads[c] = zero_grads();
    std::vector<double> dy, dx;
    for (std::size_t s = s0; s < s1; ++s) {
      const std::size_t out_n = trace.acts[L].numel() / B;
      dy.assign(dlogits.data.data() + s * out_n, dlogits.data.data() + (s + 1) * out_n);
      for (std::size_t li = L; li-- > 0;) {
        const std::size_t in_n = trace.acts[li].numel() / B;
        dx.assign(in_n, 0.0);
        const std::uint32_t* pool =
            trace.pool_idx[li].empty()
                ? nullptr
                : trace.pool_idx[li].data() + s * (trace.acts[li + 1].numel() / B);
        detail::layer_backward(m, li, trace.acts[li].data.data() + s * in_n, dy.data(), dx.data(),
                               pool, chunk_grads[c]);
        dy.swap(dx);
      }
    }
  });

  // fixed-order reduction: bit-identical for any worker count
  std::vector<Tensor> grads = std::move(chunk_grads[0]);
  for (std::size_t c = 1; c < nchunks; ++c) {
    for (std::size_t p = 0; p < grads.size(); ++p) {
      double* dst = grads[p].data.data();
      const double* src = chunk_grads[c][p].data.data();
      for (std::size_t i = 0; i < grads[p].numel(); ++i) dst[i] += src[i];
    }
  }
  return grads;
}

}  // namespace srkd
