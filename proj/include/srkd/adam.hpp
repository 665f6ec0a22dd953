// Adam optimizer with bias correction.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "srkd/common.hpp"
#include "srkd/tensor.hpp"

namespace srkd {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::uint64_t step = 0;
  std::vector<Tensor> m;  // first moments, shapes mirror the parameters
  std::vector<Tensor> v;  // second moments

  static AdamState init(const std::vector<Tensor>& params, const AdamConfig& cfg) {
    AdamState st;
    st.cfg = cfg;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const Tensor& p : params) {
      st.m.emplace_back(p.shape);
      st.v.emplace_back(p.shape);
    }
    return st;
  }
};

// theta -= lr * m_hat / (sqrt(v_hat) + eps), with m_hat = m/(1-b1^t),
// v_hat = v/(1-b2^t). Increments the step count by one.
inline void adam_step(AdamState& st, std::vector<Tensor>& params,
                      const std::vector<Tensor>& grads) {
  if (grads.size() != params.size() || st.m.size() != params.size()) {
    throw ShapeError("adam_step: gradient/state count does not match parameters");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!same_shape(grads[p], params[p])) {
      throw ShapeError("adam_step: gradient shape " + shape_str(grads[p].shape) +
                       " does not match parameter " + shape_str(params[p].shape));
    }
  }
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.cfg.beta2, static_cast<double>(st.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    double* th = params[p].data.data();
    double* m = st.m[p].data.data();
    double* v = st.v[p].data.data();
    const double* g = grads[p].data.data();
    const std::size_t n = params[p].numel();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = st.cfg.beta1 * m[i] + (1.0 - st.cfg.beta1) * g[i];
      v[i] = st.cfg.beta2 * v[i] + (1.0 - st.cfg.beta2) * g[i] * g[i];
      th[i] -= st.cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + st.cfg.eps);
    }
  }
}

}  // namespace srkd
