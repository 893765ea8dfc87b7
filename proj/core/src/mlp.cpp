#include "iwl/mlp.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace iwl {

std::size_t MlpShape::num_params() const {
  std::size_t n = 0;
  for (int l = 0; l + 1 < static_cast<int>(dims.size()); ++l) {
    n += static_cast<std::size_t>(dims[l + 1]) * dims[l] + dims[l + 1];
  }
  return n;
}

std::size_t MlpShape::layer_offset(int layer) const {
  std::size_t off = 0;
  for (int l = 0; l < layer; ++l) {
    off += static_cast<std::size_t>(dims[l + 1]) * dims[l] + dims[l + 1];
  }
  return off;
}

void mlp_init_glorot(const MlpShape& shape, std::span<double> params, Rng& rng) {
  if (params.size() != shape.num_params()) {
    throw std::invalid_argument("mlp_init_glorot: params size mismatch");
  }
  for (int l = 0; l < shape.num_layers(); ++l) {
    const int fan_in = shape.dims[l];
    const int fan_out = shape.dims[l + 1];
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    double* w = params.data() + shape.layer_offset(l);
    for (int i = 0; i < fan_out * fan_in; ++i) w[i] = (2.0 * rng.uniform() - 1.0) * a;
    double* b = w + static_cast<std::size_t>(fan_out) * fan_in;
    for (int i = 0; i < fan_out; ++i) b[i] = 0.0;
  }
}

void mlp_forward(const MlpShape& shape, std::span<const double> params,
                 std::span<const double> x, MlpCache& cache) {
  if (static_cast<int>(x.size()) != shape.input_dim()) {
    throw std::invalid_argument("mlp_forward: input size mismatch");
  }
  if (params.size() != shape.num_params()) {
    throw std::invalid_argument("mlp_forward: params size mismatch");
  }
  const int L = shape.num_layers();
  cache.act.assign(L + 1, {});
  cache.act[0].assign(x.begin(), x.end());
  for (int l = 0; l < L; ++l) {
    const int in = shape.dims[l];
    const int out = shape.dims[l + 1];
    const double* w = params.data() + shape.layer_offset(l);
    const double* b = w + static_cast<std::size_t>(out) * in;
    const std::vector<double>& a = cache.act[l];
    std::vector<double>& z = cache.act[l + 1];
    z.assign(out, 0.0);
    for (int i = 0; i < out; ++i) {
      double s = b[i];
      const double* wi = w + static_cast<std::size_t>(i) * in;
      for (int j = 0; j < in; ++j) s += wi[j] * a[j];
      z[i] = s;
    }
    if (l + 1 < L) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    }
  }
}

std::vector<double> mlp_forward(const MlpShape& shape, std::span<const double> params,
                                std::span<const double> x) {
  MlpCache cache;
  mlp_forward(shape, params, x, cache);
  return cache.act.back();
}

void mlp_backward(const MlpShape& shape, std::span<const double> params, const MlpCache& cache,
                  std::span<const double> output_grad, std::span<double> param_grad,
                  std::vector<double>* input_grad) {
  const int L = shape.num_layers();
  if (static_cast<int>(output_grad.size()) != shape.output_dim()) {
    throw std::invalid_argument("mlp_backward: output_grad size mismatch");
  }
  if (!param_grad.empty() && param_grad.size() != shape.num_params()) {
    throw std::invalid_argument("mlp_backward: param_grad size mismatch");
  }
  std::vector<double> delta(output_grad.begin(), output_grad.end());
  for (int l = L - 1; l >= 0; --l) {
    const int in = shape.dims[l];
    const int out = shape.dims[l + 1];
    const double* w = params.data() + shape.layer_offset(l);
    const std::vector<double>& a = cache.act[l];
    if (!param_grad.empty()) {
      double* dw = param_grad.data() + shape.layer_offset(l);
      double* db = dw + static_cast<std::size_t>(out) * in;
      for (int i = 0; i < out; ++i) {
        double* dwi = dw + static_cast<std::size_t>(i) * in;
        for (int j = 0; j < in; ++j) dwi[j] += delta[i] * a[j];
        db[i] += delta[i];
      }
    }
    if (l == 0 && input_grad == nullptr) break;
    std::vector<double> prev(in, 0.0);
    for (int i = 0; i < out; ++i) {
      const double* wi = w + static_cast<std::size_t>(i) * in;
      for (int j = 0; j < in; ++j) prev[j] += wi[j] * delta[i];
    }
    if (l > 0) {
      // ReLU mask: act[l] holds the rectified values, zero where inactive.
      for (int j = 0; j < in; ++j) {
        if (cache.act[l][j] <= 0.0) prev[j] = 0.0;
      }
    }
    if (l == 0) {
      *input_grad = std::move(prev);
      break;
    }
    delta = std::move(prev);
  }
}

}  // namespace iwl
